/**
 * Browser bootstrap.  Two entry modes, picked by query parameter:
 *
 *   ?ws=ws://host:port   live console over a WebSocket bridge to the
 *                        service's NDJSON port
 *   ?log=path.ndjson     replay of a stored fleet log, rendered through
 *                        the same reducer as the live view
 *
 * All view content comes from the pure render model; this file only
 * copies it into the DOM.
 */

import { ConsoleClient, webSocketTransport } from "./client.js";
import { DEFAULT_BINDINGS, KeyboardTeleop } from "./keyboard.js";
import type { KeyBindings } from "./keyboard.js";
import { parseFleetLog, replayMessages } from "./replay.js";
import {
  apply,
  controlledRobot,
  initialState,
  setConnection,
} from "./state.js";
import type { ConsoleState } from "./state.js";
import { viewModel } from "./render.js";
import type { PanelModel } from "./render.js";

const MARKER_GLYPHS: Record<string, string> = {
  eef: "+",
  object: "o",
  pad: "_",
  subgoal: "x",
};

function panelHtml(p: PanelModel): string {
  const cls = [
    "panel",
    p.stale ? "stale" : "",
    p.controlled ? "controlled" : "",
    p.requesting ? "requesting" : "",
  ]
    .filter(Boolean)
    .join(" ");
  const markers = p.markers
    .map((m) => {
      const glyph = MARKER_GLYPHS[m.kind] ?? "?";
      const left = (m.x * 100).toFixed(1);
      const top = ((1 - m.y) * 100).toFixed(1);
      return `<span class="marker ${m.kind}" style="left:${left}%;top:${top}%">${glyph}</span>`;
    })
    .join("");
  const spark = sparkSvg(p);
  return `
    <div class="${cls}" data-robot="${p.robot}">
      <div class="panel-head">
        <span class="title">${p.title}</span>
        <span class="badge">${p.modeBadge}</span>
        <span class="light red ${p.requesting ? "on" : ""}"
              title="${p.requestReason ?? ""}"></span>
        <span class="light green ${p.controlled ? "on" : ""}"></span>
      </div>
      <div class="workspace">${markers}</div>
      ${spark}
      <div class="tickline">tick ${p.tick}</div>
    </div>`;
}

function sparkSvg(p: PanelModel): string {
  const { points, gamma, omega, policyBreaches, taskBreaches } = p.sparkline;
  if (points.length === 0) {
    return `<svg class="spark" viewBox="0 0 100 24"></svg>`;
  }
  const values = points.flatMap((pt) => [pt.policy, pt.task]);
  const top = Math.max(...values, gamma ?? 0, omega ?? 0) * 1.1 || 1;
  const sx = 100 / Math.max(points.length - 1, 1);
  const y = (v: number) => (24 - (v / top) * 24).toFixed(2);
  const path = (pick: (pt: (typeof points)[number]) => number) =>
    points
      .map((pt, i) => `${i === 0 ? "M" : "L"}${(i * sx).toFixed(2)},${y(pick(pt))}`)
      .join(" ");
  const breachDots = (idx: number[], pick: (pt: (typeof points)[number]) => number, cls: string) =>
    idx
      .map((i) => {
        const pt = points[i];
        if (pt === undefined) {
          return "";
        }
        return `<circle class="${cls}" cx="${(i * sx).toFixed(2)}" cy="${y(pick(pt))}" r="1.2"/>`;
      })
      .join("");
  const lines = [
    gamma !== null
      ? `<line class="gamma" x1="0" x2="100" y1="${y(gamma)}" y2="${y(gamma)}"/>`
      : "",
    omega !== null
      ? `<line class="omega" x1="0" x2="100" y1="${y(omega)}" y2="${y(omega)}"/>`
      : "",
  ].join("");
  return `<svg class="spark" viewBox="0 0 100 24">
    ${lines}
    <path class="policy" d="${path((pt) => pt.policy)}"/>
    <path class="task" d="${path((pt) => pt.task)}"/>
    ${breachDots(policyBreaches, (pt) => pt.policy, "breach policy")}
    ${breachDots(taskBreaches, (pt) => pt.task, "breach task")}
  </svg>`;
}

class App {
  state: ConsoleState = initialState();
  private frame: number | null = null;

  constructor(private root: HTMLElement) {}

  update(next: ConsoleState): void {
    this.state = next;
    // one render per animation frame: the red indicator appears on the
    // first frame after its input_request
    if (this.frame === null) {
      this.frame = requestAnimationFrame(() => {
        this.frame = null;
        this.render();
      });
    }
  }

  render(): void {
    const vm = viewModel(this.state);
    const banner = vm.banner !== null ? `<div class="banner">${vm.banner}</div>` : "";
    const stats =
      vm.statsLine !== null ? `<div class="stats">${vm.statsLine}</div>` : "";
    this.root.innerHTML =
      banner + `<div class="panels">${vm.panels.map(panelHtml).join("")}</div>` + stats;
  }
}

function bindingsFromStorage(): Partial<KeyBindings> {
  try {
    const raw = localStorage.getItem("teleassist-bindings");
    return raw === null ? {} : (JSON.parse(raw) as Partial<KeyBindings>);
  } catch {
    return {};
  }
}

export function start(): void {
  const root = document.getElementById("console");
  if (root === null) {
    throw new Error("missing #console element");
  }
  const app = new App(root);
  const params = new URLSearchParams(window.location.search);
  const logUrl = params.get("log");
  const wsUrl = params.get("ws");

  if (logUrl !== null) {
    void fetch(logUrl)
      .then((resp) => resp.text())
      .then((text) => {
        let s = setConnection(app.state, "open");
        for (const msg of replayMessages(parseFleetLog(text))) {
          s = apply(s, msg);
        }
        app.update(s);
      });
    return;
  }

  const client: ConsoleClient = new ConsoleClient(
    webSocketTransport(wsUrl ?? `ws://${window.location.host}/session`),
    {
      onMessage: (msg) => app.update(apply(app.state, msg)),
      onConnection: (c) => app.update(setConnection(app.state, c)),
    },
  );
  const teleop = new KeyboardTeleop(
    (msg) => client.send(msg),
    () => ({
      controlled: controlledRobot(app.state),
      robots: [...app.state.panels.keys()].sort((a, b) => a - b),
    }),
    { ...DEFAULT_BINDINGS, ...bindingsFromStorage() },
  );
  window.addEventListener("keydown", (ev) => {
    teleop.keyDown(ev.key);
    if (ev.key === teleop.bindings.cyclePanel) {
      ev.preventDefault(); // keep Tab on panel cycling, not focus traversal
    }
  });
  window.addEventListener("keyup", (ev) => teleop.keyUp(ev.key));
  teleop.start();
  client.connect();
}

if (typeof document !== "undefined" && document.getElementById("console")) {
  start();
}
