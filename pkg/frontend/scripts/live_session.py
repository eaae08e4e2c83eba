"""Local fleet session for console integration tests.

Starts an unassisted session (no trained models needed) behind a live
socket operator, paced at 10 Hz.  Prints "PORT <n>" once listening so the
test harness knows where to connect, then blocks until the session's tick
budget runs out.

    python3 frontend/scripts/live_session.py [robots] [budget_ticks]
"""

import sys

from teleassist import worldsim
from teleassist.fleet_service import (
    LiveOperator, ModelBundle, Session, SessionConfig,
)


def main():
    robots = int(sys.argv[1]) if len(sys.argv) > 1 else 4
    budget = int(sys.argv[2]) if len(sys.argv) > 2 else 100
    operator = LiveOperator()
    print(f"PORT {operator.port}", flush=True)
    operator.accept(timeout=10.0)
    config = SessionConfig(robots=robots, budget_ticks=budget,
                           mode="unassisted", seed=0, tick_interval=0.1)
    session = Session(ModelBundle(), worldsim.default_world(), config, operator)
    try:
        log, _ = session.run()
    finally:
        operator.close()
    print(f"DONE {log.counters['human_ticks']}", flush=True)


if __name__ == "__main__":
    main()
