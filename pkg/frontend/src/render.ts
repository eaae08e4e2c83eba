/**
 * Pure render model: turns console state into plain data the DOM layer
 * draws.  Nothing here touches the document, so the exact pixels-worth
 * of content is testable and replay-equal by construction.
 */

import type { ConsoleState, PanelState, SparkPoint } from "./state.js";
import { controlledRobot, isStale } from "./state.js";

export interface WorkspaceMarker {
  kind: "eef" | "object" | "pad" | "subgoal";
  x: number;
  y: number;
  /** Object markers: whether the gripper currently holds this object. */
  held?: boolean;
}

export interface SparklineModel {
  /** Uncertainty trace in arrival order, capped by the state history. */
  points: SparkPoint[];
  gamma: number | null;
  omega: number | null;
  /** Indices of points breaching their threshold, for highlighting. */
  policyBreaches: number[];
  taskBreaches: number[];
}

export interface PanelModel {
  robot: number;
  title: string;
  modeBadge: string;
  /** Red light: an unanswered input request. */
  requesting: boolean;
  requestReason: string | null;
  /** Green light: this robot is under the console's control. */
  controlled: boolean;
  stale: boolean;
  tick: number;
  markers: WorkspaceMarker[];
  sparkline: SparklineModel;
}

export interface ViewModel {
  panels: PanelModel[];
  banner: string | null;
  statsLine: string | null;
}

const MODE_BADGES: Record<string, string> = {
  assisting: "ASSIST",
  awaiting_input: "WAITING",
  human_controlled: "HUMAN",
  idle: "IDLE",
  done: "DONE",
};

/**
 * State layout: [eef_x, eef_y, gripper, then (x, y, attached) per object].
 * Pad positions are workspace constants, passed in separately when known.
 */
export function markersFromState(
  state: number[] | null,
  subgoal: number[] | null,
  pads: readonly [number, number][] = [],
): WorkspaceMarker[] {
  const out: WorkspaceMarker[] = [];
  for (const [px, py] of pads) {
    out.push({ kind: "pad", x: px, y: py });
  }
  if (state !== null && state.length >= 3) {
    out.push({ kind: "eef", x: state[0] ?? 0, y: state[1] ?? 0 });
    for (let i = 3; i + 2 < state.length; i += 3) {
      out.push({
        kind: "object",
        x: state[i] ?? 0,
        y: state[i + 1] ?? 0,
        held: (state[i + 2] ?? 0) > 0.5,
      });
    }
  }
  if (subgoal !== null && subgoal.length >= 2) {
    out.push({ kind: "subgoal", x: subgoal[0] ?? 0, y: subgoal[1] ?? 0 });
  }
  return out;
}

export function sparklineModel(panel: PanelState): SparklineModel {
  const points = panel.history;
  const last = points[points.length - 1];
  const gamma = last?.gamma ?? null;
  const omega = last?.omega ?? null;
  const policyBreaches: number[] = [];
  const taskBreaches: number[] = [];
  points.forEach((p, i) => {
    if (p.policy > p.gamma) {
      policyBreaches.push(i);
    }
    if (p.task > p.omega) {
      taskBreaches.push(i);
    }
  });
  return { points, gamma, omega, policyBreaches, taskBreaches };
}

export function viewModel(
  state: ConsoleState,
  pads: readonly [number, number][] = [],
): ViewModel {
  const stale = isStale(state);
  const controlled = controlledRobot(state);
  const panels = [...state.panels.values()]
    .sort((a, b) => a.robot - b.robot)
    .map((p) => ({
      robot: p.robot,
      title: `robot ${p.robot}`,
      modeBadge: MODE_BADGES[p.mode] ?? p.mode.toUpperCase(),
      requesting: p.request !== null,
      requestReason: p.request,
      controlled: controlled === p.robot,
      stale,
      tick: p.tick,
      markers: markersFromState(p.state, p.subgoal, pads),
      sparkline: sparklineModel(p),
    }));
  let banner: string | null = null;
  if (state.connection === "closed") {
    banner = "connection lost - retrying";
  } else if (state.connection === "connecting") {
    banner = "connecting";
  } else if (state.finalTick !== null) {
    banner = `session finished at tick ${state.finalTick}`;
  }
  let statsLine: string | null = null;
  if (state.stats !== null) {
    statsLine = Object.entries(state.stats)
      .map(([k, v]) => `${k}=${v}`)
      .join("  ");
  }
  return { panels, banner, statsLine };
}
