/**
 * Fleet log replay: converts a stored session log into the exact message
 * stream a live console would have received, so feeding the result through
 * the reducer renders the identical view.
 *
 * The log is newline-delimited JSON: a header line with audited counters,
 * then one event per line in session order.  Events carry everything a
 * frame shows (state, mode transitions, uncertainty report, subgoal), so
 * frames are reconstructed per tick from tracked per-robot state.
 */

import { ProtocolError } from "./protocol.js";
import type {
  Mode,
  ObservationFrame,
  RequestReason,
  ServiceMsg,
  UncertaintyReport,
} from "./protocol.js";

interface LogEvent {
  tick: number;
  event: string;
  robot: number;
  [key: string]: unknown;
}

export interface FleetLogFile {
  counters: Record<string, number>;
  events: LogEvent[];
}

export function parseFleetLog(text: string): FleetLogFile {
  const lines = text.split("\n").filter((l) => l.trim().length > 0);
  if (lines.length === 0) {
    throw new ProtocolError("empty fleet log");
  }
  const header = JSON.parse(lines[0] ?? "") as Record<string, unknown>;
  if (header.type !== "fleet_log") {
    throw new ProtocolError("missing fleet_log header");
  }
  const events = lines.slice(1).map((l) => JSON.parse(l) as LogEvent);
  return { counters: header.counters as Record<string, number>, events };
}

interface ReplayRobot {
  state: number[] | null;
  mode: Mode;
  report: UncertaintyReport | null;
  subgoal: number[] | null;
}

/** Mode a robot returns to when not under human control. */
function restMode(sessionMode: string): Mode {
  return sessionMode === "unassisted" ? "idle" : "assisting";
}

export function replayMessages(log: FleetLogFile): ServiceMsg[] {
  const start = log.events.find((e) => e.event === "session_start");
  if (start === undefined) {
    throw new ProtocolError("fleet log has no session_start event");
  }
  const sessionMode = start.mode as string;
  const nRobots = start.robots as number;
  const budgetTicks = start.budget_ticks as number;

  const robots: ReplayRobot[] = [];
  for (let i = 0; i < nRobots; i++) {
    robots.push({
      state: null,
      mode: restMode(sessionMode),
      report: null,
      subgoal: null,
    });
  }

  const byTick = new Map<number, LogEvent[]>();
  for (const ev of log.events) {
    const bucket = byTick.get(ev.tick);
    if (bucket === undefined) {
      byTick.set(ev.tick, [ev]);
    } else {
      bucket.push(ev);
    }
  }

  const out: ServiceMsg[] = [];

  const process = (ev: LogEvent) => {
    const r = robots[ev.robot];
    if (r === undefined) {
      return; // session-level events carry robot -1
    }
    switch (ev.event) {
      case "robot_step":
        r.state = ev.state as number[];
        r.report = ev.report as UncertaintyReport | null;
        r.subgoal = ev.subgoal as number[] | null;
        break;
      case "input_request":
        r.mode = sessionMode === "unassisted" ? "idle" : "awaiting_input";
        out.push({
          type: "input_request",
          robot: ev.robot,
          reason: ev.reason as RequestReason,
        });
        break;
      case "control_grant":
        for (const other of robots) {
          if (other !== r && other.mode === "human_controlled") {
            other.mode = restMode(sessionMode);
          }
        }
        r.mode = "human_controlled";
        out.push({ type: "control_grant", robot: ev.robot });
        break;
      case "release":
        r.mode = restMode(sessionMode);
        r.subgoal = null;
        break;
      case "episode_start":
        r.state = ev.state as number[];
        r.report = null;
        r.subgoal = null;
        if (r.mode !== "human_controlled") {
          r.mode = restMode(sessionMode);
        }
        break;
      default:
        // episode_done, session_start, session_end carry no frame state
        break;
    }
  };

  // Session setup is logged at tick 0 before the first frames go out:
  // session_start, one episode_start per robot, and (unassisted only) one
  // input_request per robot.  Those requests reach a live console before
  // any frame does, so they replay in the same position.
  const tickZero = byTick.get(0) ?? [];
  const setupLen = 1 + nRobots + (sessionMode === "unassisted" ? nRobots : 0);
  for (const ev of tickZero.slice(0, setupLen)) {
    process(ev);
  }

  const frame = (robot: number, tick: number): ObservationFrame => {
    const r = robots[robot];
    if (r === undefined) {
      throw new ProtocolError(`robot ${robot} outside the session roster`);
    }
    return {
      type: "observation_frame",
      robot,
      tick,
      state: r.state ?? [],
      mode: r.mode,
      report: r.report,
      subgoal: r.subgoal,
    };
  };

  for (let tick = 0; tick < budgetTicks; tick++) {
    const events = tick === 0 ? tickZero.slice(setupLen) : byTick.get(tick);
    if (tick > 0 && (events === undefined || events.length === 0)) {
      // nothing logged: the operator was disconnected this tick, so no
      // frames went out and every active robot was parked awaiting input
      for (const r of robots) {
        if (r.mode !== "done" && r.mode !== "awaiting_input") {
          r.mode = "awaiting_input";
        }
      }
      continue;
    }
    for (let robot = 0; robot < nRobots; robot++) {
      out.push(frame(robot, tick));
    }
    for (const ev of events ?? []) {
      process(ev);
    }
  }

  out.push({
    type: "session_stats",
    tick: budgetTicks,
    counters: log.counters,
  });
  return out;
}
