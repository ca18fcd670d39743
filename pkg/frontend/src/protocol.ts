/** Wire types and helpers for the teleop JSON protocol (schema version 1). */

export interface CommandRanges {
  v_x: [number, number];
  v_y: [number, number];
  omega_z: [number, number];
}

export interface Welcome {
  type: "welcome";
  schema_version: number;
  lease: boolean;
  ranges: CommandRanges;
  telemetry_hz?: number;
}

export interface Telemetry {
  type: "telemetry";
  schema_version: number;
  timestamp: number;
  sim_time: number;
  base_pos: [number, number, number];
  base_quat: [number, number, number, number];
  joint_pos: number[];
  actual_vel: [number, number, number];
  estimated_vel: [number, number, number];
  commanded_vel: [number, number, number];
  foot_forces: [number, number];
  reward_total: number;
  reward_terms: Record<string, number>;
  paused?: boolean;
}

export interface LeaseRejected {
  type: "lease_rejected";
  reason?: string;
}

export interface ErrorMessage {
  type: "error";
  message: string;
}

export type ServerMessage = Welcome | Telemetry | LeaseRejected | ErrorMessage;

export interface Command {
  vx: number;
  vy: number;
  wz: number;
}

export const DEFAULT_RANGES: CommandRanges = {
  v_x: [-1.0, 1.0],
  v_y: [-0.5, 0.5],
  omega_z: [-1.0, 1.0],
};

const clip = (x: number, lo: number, hi: number) => Math.min(hi, Math.max(lo, x));

/** Commands leaving the panel always respect the service-advertised ranges. */
export function clampCommand(cmd: Command, ranges: CommandRanges): Command {
  return {
    vx: clip(cmd.vx, ranges.v_x[0], ranges.v_x[1]),
    vy: clip(cmd.vy, ranges.v_y[0], ranges.v_y[1]),
    wz: clip(cmd.wz, ranges.omega_z[0], ranges.omega_z[1]),
  };
}

export function parseServerMessage(raw: string): ServerMessage | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const t = (data as { type?: unknown }).type;
  if (t === "welcome" || t === "telemetry" || t === "lease_rejected" || t === "error") {
    return data as ServerMessage;
  }
  return null;
}

export function commandMessage(cmd: Command, now: number): string {
  return JSON.stringify({ type: "command", ...cmd, timestamp: now });
}

/** Reconnect backoff: 0.5 s doubling to a 10 s ceiling. */
export function backoffDelay(attempt: number): number {
  return Math.min(10_000, 500 * 2 ** Math.max(0, attempt));
}
