/** Teleop panel wiring: WebSocket session with reconnect, commander lease,
 * keyboard/gamepad steering, strip charts, tiles, and the path trace. */

import { drawPathTrace, drawStripChart } from "./charts.js";
import { CommandSender, KeyboardSteering, SEND_HZ, gamepadCommand } from "./input.js";
import {
  backoffDelay,
  commandMessage,
  DEFAULT_RANGES,
  parseServerMessage,
  Telemetry,
} from "./protocol.js";
import { FrameSlot, RingBuffer } from "./ring.js";

const HISTORY_S = 60;
const TELEMETRY_HZ = 20;
const STALE_MS = 2000;

type Status = "connecting" | "connected" | "view-only" | "reconnecting";

class Panel {
  ws: WebSocket | null = null;
  status: Status = "connecting";
  hasLease = false;
  attempt = 0;
  steering = new KeyboardSteering();
  sender = new CommandSender();
  slot = new FrameSlot<Telemetry>();
  history = new RingBuffer<Telemetry>(HISTORY_S * TELEMETRY_HZ);
  path = new RingBuffer<[number, number]>(HISTORY_S * TELEMETRY_HZ);
  lastFrameAt = 0;
  reconnectTimer: number | null = null;

  constructor(readonly doc: Document) {
    doc.addEventListener("keydown", (e) => {
      if (!e.repeat) this.steering.keyDown(e.key);
    });
    doc.addEventListener("keyup", (e) => this.steering.keyUp(e.key));
    addEventListener("blur", () => this.steering.clear());
    this.connect();
    setInterval(() => this.commandTick(), 1000 / SEND_HZ);
    const render = () => {
      this.render();
      requestAnimationFrame(render);
    };
    requestAnimationFrame(render);
  }

  url(): string {
    return location.origin.replace(/^http/, "ws") + "/ws";
  }

  connect(): void {
    this.setStatus("connecting");
    const ws = new WebSocket(this.url());
    this.ws = ws;
    ws.onopen = () => {
      this.attempt = 0;
      ws.send(JSON.stringify({ type: "hello", role: "commander" }));
    };
    ws.onmessage = (ev) => this.onMessage(String(ev.data));
    ws.onclose = () => this.scheduleReconnect();
    ws.onerror = () => ws.close();
  }

  scheduleReconnect(): void {
    this.setStatus("reconnecting");
    this.hasLease = false;
    if (this.reconnectTimer !== null) return;
    const delay = backoffDelay(this.attempt++);
    const tile = this.doc.getElementById("status-detail");
    if (tile) tile.textContent = `retry in ${(delay / 1000).toFixed(1)} s`;
    this.reconnectTimer = setTimeout(() => {
      this.reconnectTimer = null;
      this.connect();
    }, delay) as unknown as number;
  }

  onMessage(raw: string): void {
    const msg = parseServerMessage(raw);
    if (msg === null) return;
    switch (msg.type) {
      case "welcome":
        this.hasLease = msg.lease;
        this.steering.ranges = msg.ranges ?? DEFAULT_RANGES;
        this.setStatus(msg.lease ? "connected" : "view-only");
        break;
      case "lease_rejected":
        this.hasLease = false;
        this.setStatus("view-only");
        break;
      case "telemetry":
        this.lastFrameAt = performance.now();
        this.slot.offer(msg);
        break;
      case "error":
        console.warn("service error:", msg.message);
        break;
    }
  }

  commandTick(): void {
    if (!this.hasLease || this.ws === null || this.ws.readyState !== WebSocket.OPEN) return;
    const pads = navigator.getGamepads ? navigator.getGamepads() : [];
    const pad = pads && pads[0];
    const cmd = pad
      ? gamepadCommand(pad.axes, this.steering.ranges)
      : this.steering.command();
    const decision = this.sender.decide(cmd, performance.now());
    if (decision.send) {
      this.ws.send(commandMessage(cmd, Date.now() / 1000));
    }
  }

  setStatus(s: Status): void {
    this.status = s;
    const el = this.doc.getElementById("status");
    if (el) {
      el.textContent = s + (s === "view-only" ? " (lease held elsewhere)" : "");
      el.className = `status ${s}`;
    }
  }

  render(): void {
    const frame = this.slot.take();
    if (frame !== null) {
      this.history.push(frame);
      this.path.push([frame.base_pos[0], frame.base_pos[1]]);
      this.updateTiles(frame);
    }
    const stale = performance.now() - this.lastFrameAt > STALE_MS;
    const overlay = this.doc.getElementById("stale-overlay");
    if (overlay) overlay.style.display = stale && this.lastFrameAt > 0 ? "flex" : "none";
    this.drawCharts();
  }

  updateTiles(f: Telemetry): void {
    const set = (id: string, text: string) => {
      const el = this.doc.getElementById(id);
      if (el) el.textContent = text;
    };
    const err = Math.hypot(
      f.actual_vel[0] - f.commanded_vel[0],
      f.actual_vel[1] - f.commanded_vel[1],
    );
    set("tile-error", err.toFixed(3) + " m/s");
    set("tile-force-l", f.foot_forces[0].toFixed(0) + " N");
    set("tile-force-r", f.foot_forces[1].toFixed(0) + " N");
    set("tile-reward", f.reward_total.toFixed(3));
    set("tile-sim-time", f.sim_time.toFixed(1) + " s");
  }

  chart(id: string): CanvasRenderingContext2D | null {
    const canvas = this.doc.getElementById(id) as HTMLCanvasElement | null;
    return canvas ? canvas.getContext("2d") : null;
  }

  drawCharts(): void {
    const frames = this.history.items();
    const axes: { id: string; title: string; cmd: (f: Telemetry) => number; act: (f: Telemetry) => number; range: [number, number] }[] = [
      { id: "chart-vx", title: "v_x [m/s]", cmd: (f) => f.commanded_vel[0], act: (f) => f.actual_vel[0], range: [-1.2, 1.2] },
      { id: "chart-vy", title: "v_y [m/s]", cmd: (f) => f.commanded_vel[1], act: (f) => f.actual_vel[1], range: [-0.7, 0.7] },
      { id: "chart-wz", title: "w_z [rad/s]", cmd: (f) => f.commanded_vel[2], act: (f) => f.actual_vel[2], range: [-1.2, 1.2] },
    ];
    for (const a of axes) {
      const ctx = this.chart(a.id);
      if (!ctx) continue;
      drawStripChart(
        ctx, ctx.canvas.width, ctx.canvas.height,
        [
          { label: "commanded", color: "#58a6ff", values: frames.map(a.cmd) },
          { label: "actual", color: "#f2cc60", values: frames.map(a.act) },
        ],
        a.range, a.title,
      );
    }
    const ctx = this.chart("chart-path");
    if (ctx) drawPathTrace(ctx, ctx.canvas.width, ctx.canvas.height, this.path.items());
  }
}

declare global {
  interface Window {
    panel: Panel;
  }
}

if (typeof document !== "undefined") {
  window.panel = new Panel(document);
}
