import { describe, expect, it } from "vitest";

import { FrameSlot, RingBuffer } from "../src/ring.js";

describe("ring buffer", () => {
  it("stays bounded at capacity", () => {
    const rb = new RingBuffer<number>(5);
    for (let i = 0; i < 100; i++) rb.push(i);
    expect(rb.length).toBe(5);
    expect(rb.items()).toEqual([95, 96, 97, 98, 99]);
    expect(rb.last()).toBe(99);
  });

  it("yields oldest-to-newest before wrap", () => {
    const rb = new RingBuffer<number>(4);
    rb.push(1);
    rb.push(2);
    expect(rb.items()).toEqual([1, 2]);
    expect(rb.last()).toBe(2);
  });

  it("handles the empty state", () => {
    const rb = new RingBuffer<number>(3);
    expect(rb.items()).toEqual([]);
    expect(rb.last()).toBeUndefined();
  });
});

describe("frame slot", () => {
  it("is latest-wins and counts drops", () => {
    const slot = new FrameSlot<number>();
    slot.offer(1);
    slot.offer(2);
    slot.offer(3);
    expect(slot.take()).toBe(3);
    expect(slot.dropped).toBe(2);
    expect(slot.take()).toBeNull();
  });
});
