/** Keyboard and gamepad steering: held keys map to velocity commands.
 *
 * W/S (or up/down) drive forward/backward, A/D (or left/right) strafe,
 * Q/E yaw. Releasing everything commands an immediate stop. While the
 * command is changing it is sent at 10 Hz; a keepalive refresh goes out
 * once a second so the service's staleness window never zeroes a held
 * command.
 */

import { clampCommand, Command, CommandRanges, DEFAULT_RANGES } from "./protocol.js";

export const SEND_HZ = 10;
export const KEEPALIVE_MS = 1000;

const FORWARD_KEYS = ["w", "arrowup"];
const BACKWARD_KEYS = ["s", "arrowdown"];
const LEFT_KEYS = ["a", "arrowleft"];
const RIGHT_KEYS = ["d", "arrowright"];
const YAW_LEFT_KEYS = ["q"];
const YAW_RIGHT_KEYS = ["e"];

export class KeyboardSteering {
  private held = new Set<string>();
  ranges: CommandRanges = DEFAULT_RANGES;

  keyDown(key: string): void {
    this.held.add(key.toLowerCase());
  }

  keyUp(key: string): void {
    this.held.delete(key.toLowerCase());
  }

  clear(): void {
    this.held.clear();
  }

  private axis(pos: string[], neg: string[]): number {
    const p = pos.some((k) => this.held.has(k)) ? 1 : 0;
    const n = neg.some((k) => this.held.has(k)) ? 1 : 0;
    return p - n;
  }

  /** Current command from held keys, clamped to the advertised ranges. */
  command(): Command {
    const cmd = {
      vx: this.axis(FORWARD_KEYS, BACKWARD_KEYS) * this.ranges.v_x[1],
      vy: this.axis(LEFT_KEYS, RIGHT_KEYS) * this.ranges.v_y[1],
      wz: this.axis(YAW_LEFT_KEYS, YAW_RIGHT_KEYS) * this.ranges.omega_z[1],
    };
    return clampCommand(cmd, this.ranges);
  }
}

/** Left stick strafes, right stick x yaws; small deadzone. */
export function gamepadCommand(axes: readonly number[], ranges: CommandRanges, deadzone = 0.1): Command {
  const shape = (v: number) => (Math.abs(v) < deadzone ? 0 : v);
  const nz = (v: number) => (v === 0 ? 0 : v); // fold -0 into +0
  return clampCommand(
    {
      vx: nz(-shape(axes[1] ?? 0) * ranges.v_x[1]),
      vy: nz(-shape(axes[0] ?? 0) * ranges.v_y[1]),
      wz: nz(-shape(axes[2] ?? 0) * ranges.omega_z[1]),
    },
    ranges,
  );
}

export interface SendDecision {
  send: boolean;
  reason: "changed" | "keepalive" | "rate-limited" | "idle";
}

/** Rate limiter: send on change (at most SEND_HZ), refresh held commands. */
export class CommandSender {
  private lastSent: Command | null = null;
  private lastSendTime = -Infinity;

  decide(cmd: Command, nowMs: number): SendDecision {
    const minGap = 1000 / SEND_HZ;
    const changed =
      this.lastSent === null ||
      cmd.vx !== this.lastSent.vx ||
      cmd.vy !== this.lastSent.vy ||
      cmd.wz !== this.lastSent.wz;
    if (changed && nowMs - this.lastSendTime >= minGap) {
      this.lastSent = { ...cmd };
      this.lastSendTime = nowMs;
      return { send: true, reason: "changed" };
    }
    if (changed) {
      return { send: false, reason: "rate-limited" };
    }
    const active = cmd.vx !== 0 || cmd.vy !== 0 || cmd.wz !== 0;
    if (active && nowMs - this.lastSendTime >= KEEPALIVE_MS) {
      this.lastSendTime = nowMs;
      return { send: true, reason: "keepalive" };
    }
    return { send: false, reason: "idle" };
  }
}
