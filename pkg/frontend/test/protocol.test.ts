import { describe, expect, it } from "vitest";

import {
  backoffDelay,
  clampCommand,
  commandMessage,
  DEFAULT_RANGES,
  parseServerMessage,
} from "../src/protocol.js";

describe("protocol", () => {
  it("clamps commands into the advertised box", () => {
    const c = clampCommand({ vx: 3, vy: -9, wz: 0.2 }, DEFAULT_RANGES);
    expect(c).toEqual({ vx: 1.0, vy: -0.5, wz: 0.2 });
  });

  it("parses known server messages and rejects junk", () => {
    expect(parseServerMessage('{"type":"telemetry","sim_time":1}')?.type).toBe("telemetry");
    expect(parseServerMessage('{"type":"welcome","lease":true}')?.type).toBe("welcome");
    expect(parseServerMessage("not json")).toBeNull();
    expect(parseServerMessage('{"type":"mystery"}')).toBeNull();
    expect(parseServerMessage("42")).toBeNull();
  });

  it("serializes commands with a timestamp", () => {
    const msg = JSON.parse(commandMessage({ vx: 0.5, vy: 0, wz: -0.1 }, 12.5));
    expect(msg).toEqual({ type: "command", vx: 0.5, vy: 0, wz: -0.1, timestamp: 12.5 });
  });

  it("backs off exponentially to a ceiling", () => {
    expect(backoffDelay(0)).toBe(500);
    expect(backoffDelay(1)).toBe(1000);
    expect(backoffDelay(3)).toBe(4000);
    expect(backoffDelay(10)).toBe(10_000);
  });
});
