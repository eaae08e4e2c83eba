/**
 * End-to-end round trip against a real fleet session: a local 4-robot
 * unassisted session paced at 10 Hz behind a TCP socket.  The console
 * takes control of a requesting robot, drives it with the keyboard
 * model for a stretch, and the next frames reflect the motion.
 */

import { spawn } from "node:child_process";
import type { ChildProcess } from "node:child_process";
import { join } from "node:path";
import { afterAll, beforeAll, expect, it } from "vitest";

import { ConsoleClient } from "../src/client.js";
import { tcpTransport } from "../src/client_node.js";
import { KeyboardTeleop } from "../src/keyboard.js";
import type { ServiceMsg } from "../src/protocol.js";
import { apply, controlledRobot, initialState, setConnection } from "../src/state.js";
import type { ConsoleState } from "../src/state.js";

const ROBOTS = 4;
const BUDGET = 150; // 15 seconds at 10 Hz

let proc: ChildProcess;
let port: number;
let client: ConsoleClient;
let state: ConsoleState = initialState();
const received: ServiceMsg[] = [];
let done: Promise<string>;

function waitFor(pred: () => boolean, what: string, ms = 10000): Promise<void> {
  return new Promise((resolve, reject) => {
    const t0 = Date.now();
    const poll = setInterval(() => {
      if (pred()) {
        clearInterval(poll);
        resolve();
      } else if (Date.now() - t0 > ms) {
        clearInterval(poll);
        reject(new Error(`timed out waiting for ${what}`));
      }
    }, 20);
  });
}

beforeAll(async () => {
  const script = join(__dirname, "..", "scripts", "live_session.py");
  proc = spawn("python3", [script, String(ROBOTS), String(BUDGET)], {
    cwd: join(__dirname, "..", ".."),
  });
  let stdout = "";
  done = new Promise((resolve) => {
    proc.stdout!.on("data", (chunk: Buffer) => {
      stdout += String(chunk);
      if (stdout.includes("DONE")) {
        resolve(stdout);
      }
    });
  });
  await waitFor(() => /PORT \d+/.test(stdout), "the session port", 15000);
  port = Number(/PORT (\d+)/.exec(stdout)![1]);

  client = new ConsoleClient(tcpTransport("127.0.0.1", port), {
    onMessage: (msg) => {
      received.push(msg);
      state = apply(state, msg);
    },
    onConnection: (c) => {
      state = setConnection(state, c);
    },
  });
  client.connect();
  await waitFor(() => state.connection === "open", "the connection", 15000);
}, 30000);

afterAll(() => {
  client.close();
  proc.kill();
});

it("streams frames for every robot and requests input immediately", async () => {
  await waitFor(
    () => state.panels.size === ROBOTS,
    "frames from all robots",
  );
  // unassisted robots ask for help from the very first tick
  await waitFor(
    () => [...state.panels.values()].every((p) => p.request !== null),
    "input requests on all panels",
  );
}, 15000);

it("grants control on switch_robot and reflects keyboard motion", async () => {
  client.send({ type: "switch_robot", robot: 2 });
  await waitFor(() => controlledRobot(state) === 2, "the control grant");
  expect(state.panels.get(2)!.request).toBe(null);

  const before = state.panels.get(2)!.state![1]!;
  const teleop = new KeyboardTeleop(
    (msg) => client.send(msg),
    () => ({ controlled: controlledRobot(state), robots: [0, 1, 2, 3] }),
  );
  teleop.keyDown("ArrowDown");
  // drive at the service's own 10 Hz cadence for about a second
  for (let i = 0; i < 10; i++) {
    teleop.tick();
    await new Promise((r) => setTimeout(r, 100));
  }
  teleop.keyUp("ArrowDown");
  await waitFor(
    () => state.panels.get(2)!.state![1]! < before - 0.05,
    "the eef to move down",
  );
  client.send({ type: "release", robot: 2 });
  await waitFor(() => controlledRobot(state) === null, "the release");
}, 20000);

it("only the controlled robot ever saw teleop actions", async () => {
  const out = await done;
  const human = Number(/DONE (\d+)/.exec(out)![1]);
  expect(human).toBeGreaterThan(0);
  // the session ends with its stats; the view drops control
  await waitFor(() => state.stats !== null, "session stats", 20000);
  expect(state.finalTick).toBe(BUDGET);
}, 30000);
