/**
 * Console state as a pure function of the received message log.
 *
 * `apply` is a reducer: feeding the same messages in the same order always
 * yields the same state, so a recorded session replays to the identical
 * view.  No mutation escapes: every transition returns a fresh state.
 */

import type {
  Mode,
  RequestReason,
  ServiceMsg,
  UncertaintyReport,
} from "./protocol.js";

export const HISTORY_LIMIT = 600;

export interface SparkPoint {
  tick: number;
  policy: number;
  task: number;
  gamma: number;
  omega: number;
}

export interface PanelState {
  robot: number;
  tick: number;
  state: number[] | null;
  mode: Mode;
  subgoal: number[] | null;
  report: UncertaintyReport | null;
  /** Red indicator: set the instant an input_request arrives. */
  request: RequestReason | null;
  history: SparkPoint[];
}

export type Connection = "connecting" | "open" | "closed";

export interface ConsoleState {
  panels: Map<number, PanelState>;
  controlled: number | null;
  connection: Connection;
  stats: Record<string, number> | null;
  finalTick: number | null;
}

export function initialState(): ConsoleState {
  return {
    panels: new Map(),
    controlled: null,
    connection: "connecting",
    stats: null,
    finalTick: null,
  };
}

function emptyPanel(robot: number): PanelState {
  return {
    robot,
    tick: -1,
    state: null,
    mode: "idle",
    subgoal: null,
    report: null,
    request: null,
    history: [],
  };
}

function panel(state: ConsoleState, robot: number): PanelState {
  return state.panels.get(robot) ?? emptyPanel(robot);
}

function withPanel(state: ConsoleState, next: PanelState): ConsoleState {
  const panels = new Map(state.panels);
  panels.set(next.robot, next);
  return { ...state, panels };
}

export function apply(state: ConsoleState, msg: ServiceMsg): ConsoleState {
  switch (msg.type) {
    case "observation_frame": {
      const prev = panel(state, msg.robot);
      let history = prev.history;
      if (msg.report !== null) {
        history = [
          ...history,
          {
            tick: msg.tick,
            policy: msg.report.policy_uncertainty,
            task: msg.report.task_uncertainty,
            gamma: msg.report.gamma,
            omega: msg.report.omega,
          },
        ];
        if (history.length > HISTORY_LIMIT) {
          history = history.slice(history.length - HISTORY_LIMIT);
        }
      }
      // a robot back under assistance or human control has been answered;
      // the red indicator tracks the latest message for the robot
      const request =
        msg.mode === "awaiting_input" || msg.mode === "idle"
          ? prev.request
          : null;
      let next = withPanel(state, {
        ...prev,
        tick: msg.tick,
        state: msg.state,
        mode: msg.mode,
        subgoal: msg.subgoal,
        report: msg.report,
        request,
        history,
      });
      // the service released this robot (e.g. its episode ended): the green
      // indicator follows the authoritative mode in the frame
      if (next.controlled === msg.robot && msg.mode !== "human_controlled") {
        next = { ...next, controlled: null };
      }
      return next;
    }
    case "input_request":
      return withPanel(state, {
        ...panel(state, msg.robot),
        request: msg.reason,
      });
    case "control_grant": {
      let next: ConsoleState = state;
      if (state.controlled !== null && state.controlled !== msg.robot) {
        // exactly one green indicator: the previous holder loses it
        const old = panel(next, state.controlled);
        next = withPanel(next, { ...old });
      }
      next = withPanel(next, { ...panel(next, msg.robot), request: null });
      return { ...next, controlled: msg.robot };
    }
    case "session_stats":
      return { ...state, stats: msg.counters, finalTick: msg.tick };
  }
}

export function applyAll(
  state: ConsoleState,
  msgs: Iterable<ServiceMsg>,
): ConsoleState {
  let s = state;
  for (const m of msgs) {
    s = apply(s, m);
  }
  return s;
}

export function setConnection(
  state: ConsoleState,
  connection: Connection,
): ConsoleState {
  return { ...state, connection };
}

/** Panels go grey when the stream is down: their data is stale. */
export function isStale(state: ConsoleState): boolean {
  return state.connection !== "open";
}

export function controlledRobot(state: ConsoleState): number | null {
  // a finished session has no controllable robot
  if (state.finalTick !== null) {
    return null;
  }
  return state.controlled;
}
