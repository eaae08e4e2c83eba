/**
 * Wire protocol shared with the fleet service: newline-delimited JSON, one
 * message per line, discriminated by the "type" field.  The console is a
 * thin client of this schema and never computes policy or gating logic.
 */

export const PROTOCOL_VERSION = 1;

export type Mode =
  | "assisting"
  | "awaiting_input"
  | "human_controlled"
  | "idle"
  | "done";

export type RequestReason = "unseen_state" | "uncertain_task";

export interface UncertaintyReport {
  policy_uncertainty: number;
  task_uncertainty: number;
  gamma: number;
  omega: number;
  human_override: boolean;
  assist: boolean;
  tick: number;
}

/** Service -> console. */
export interface ObservationFrame {
  type: "observation_frame";
  robot: number;
  tick: number;
  state: number[];
  mode: Mode;
  report: UncertaintyReport | null;
  subgoal: number[] | null;
}

export interface InputRequest {
  type: "input_request";
  robot: number;
  reason: RequestReason;
}

export interface ControlGrant {
  type: "control_grant";
  robot: number;
}

export interface SessionStats {
  type: "session_stats";
  tick: number;
  counters: Record<string, number>;
}

export type ServiceMsg =
  | ObservationFrame
  | InputRequest
  | ControlGrant
  | SessionStats;

/** Console -> service. */
export interface SwitchRobot {
  type: "switch_robot";
  robot: number;
}

export interface Release {
  type: "release";
  robot: number;
}

export interface OperatorAction {
  type: "operator_action";
  robot: number;
  action: [number, number, number];
}

export interface OverrideToggle {
  type: "override_toggle";
  robot: number;
  on: boolean;
}

export type OperatorMsg = SwitchRobot | Release | OperatorAction | OverrideToggle;

const SERVICE_TYPES = new Set([
  "observation_frame",
  "input_request",
  "control_grant",
  "session_stats",
]);

export class ProtocolError extends Error {}

export function parseServiceMsg(line: string): ServiceMsg {
  let raw: unknown;
  try {
    raw = JSON.parse(line);
  } catch {
    throw new ProtocolError(`not valid JSON: ${line.slice(0, 80)}`);
  }
  if (typeof raw !== "object" || raw === null) {
    throw new ProtocolError("message is not an object");
  }
  const msg = raw as Record<string, unknown>;
  if (typeof msg.type !== "string" || !SERVICE_TYPES.has(msg.type)) {
    throw new ProtocolError(`unknown message type ${String(msg.type)}`);
  }
  return raw as ServiceMsg;
}

export function serialize(msg: OperatorMsg): string {
  return JSON.stringify(msg) + "\n";
}

/**
 * Incremental NDJSON splitter: feed raw chunks, get complete lines.
 * Carries the trailing partial line between feeds.
 */
export class LineBuffer {
  private partial = "";

  feed(chunk: string): string[] {
    const data = this.partial + chunk;
    const parts = data.split("\n");
    this.partial = parts.pop() ?? "";
    return parts.filter((p) => p.trim().length > 0);
  }
}
