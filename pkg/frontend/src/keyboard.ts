/**
 * Keyboard teleoperation: maps key state to operator messages.
 *
 * Held arrows steer, space toggles the gripper, Tab cycles the focused
 * panel, Enter takes control of the focused robot, Escape releases it,
 * and O toggles the override latch.  Bindings are configurable.
 *
 * Actions are emitted on a fixed 10 Hz ticker (one per service tick) and
 * only while a robot is actually under this console's control; no teleop
 * message ever goes out for an uncontrolled robot.
 */

import type { OperatorMsg } from "./protocol.js";

export interface KeyBindings {
  up: string;
  down: string;
  left: string;
  right: string;
  gripToggle: string;
  cyclePanel: string;
  takeControl: string;
  release: string;
  overrideToggle: string;
}

export const DEFAULT_BINDINGS: KeyBindings = {
  up: "ArrowUp",
  down: "ArrowDown",
  left: "ArrowLeft",
  right: "ArrowRight",
  gripToggle: " ",
  cyclePanel: "Tab",
  takeControl: "Enter",
  release: "Escape",
  overrideToggle: "o",
};

export const ACTION_INTERVAL_MS = 100; // one action per 10 Hz service tick

/** Gripper command channel: close -1, hold 0, open +1. */
const GRIP_CLOSE = -1;
const GRIP_HOLD = 0;
const GRIP_OPEN = 1;

export interface TeleopView {
  /** Robot this console currently controls, or null. */
  controlled: number | null;
  /** Robots available for focus cycling, in panel order. */
  robots: number[];
}

export class KeyboardTeleop {
  readonly bindings: KeyBindings;
  private readonly send: (msg: OperatorMsg) => void;
  private readonly view: () => TeleopView;
  private readonly held = new Set<string>();
  private focus = 0;
  private gripClosed = false;
  private override = false;
  private pendingGrip: number = GRIP_HOLD;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    send: (msg: OperatorMsg) => void,
    view: () => TeleopView,
    bindings: Partial<KeyBindings> = {},
  ) {
    this.send = send;
    this.view = view;
    this.bindings = { ...DEFAULT_BINDINGS, ...bindings };
  }

  /** Robot the panel focus is on; switch requests target this robot. */
  focusedRobot(): number | null {
    const { robots } = this.view();
    if (robots.length === 0) {
      return null;
    }
    return robots[this.focus % robots.length] ?? null;
  }

  keyDown(key: string): void {
    const b = this.bindings;
    if (key === b.cyclePanel) {
      const { robots } = this.view();
      if (robots.length > 0) {
        this.focus = (this.focus + 1) % robots.length;
      }
      return;
    }
    if (key === b.takeControl) {
      const robot = this.focusedRobot();
      if (robot !== null && robot !== this.view().controlled) {
        this.send({ type: "switch_robot", robot });
      }
      return;
    }
    if (key === b.release) {
      const robot = this.view().controlled;
      if (robot !== null) {
        this.send({ type: "release", robot });
        this.gripClosed = false;
        this.pendingGrip = GRIP_HOLD;
      }
      return;
    }
    if (key === b.overrideToggle) {
      const robot = this.view().controlled ?? this.focusedRobot();
      if (robot !== null) {
        this.override = !this.override;
        this.send({ type: "override_toggle", robot, on: this.override });
      }
      return;
    }
    if (key === b.gripToggle) {
      if (!this.held.has(key)) {
        // edge-triggered: latch the command for the next action tick
        this.gripClosed = !this.gripClosed;
        this.pendingGrip = this.gripClosed ? GRIP_CLOSE : GRIP_OPEN;
      }
      this.held.add(key);
      return;
    }
    this.held.add(key);
  }

  keyUp(key: string): void {
    this.held.delete(key);
  }

  /** One 10 Hz tick: emit the current action for the controlled robot. */
  tick(): void {
    const robot = this.view().controlled;
    if (robot === null) {
      this.pendingGrip = GRIP_HOLD;
      return;
    }
    const b = this.bindings;
    const dx =
      (this.held.has(b.right) ? 1 : 0) - (this.held.has(b.left) ? 1 : 0);
    const dy = (this.held.has(b.up) ? 1 : 0) - (this.held.has(b.down) ? 1 : 0);
    const grip = this.pendingGrip;
    this.pendingGrip = GRIP_HOLD;
    if (dx === 0 && dy === 0 && grip === GRIP_HOLD) {
      return; // idle hands: the service holds position on its own
    }
    this.send({ type: "operator_action", robot, action: [dx, dy, grip] });
  }

  start(): void {
    if (this.timer === null) {
      this.timer = setInterval(() => this.tick(), ACTION_INTERVAL_MS);
    }
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}
