/** Bounded telemetry history for the strip charts (last 60 s) and a
 * latest-wins slot decoupling the network thread from the render loop. */

export class RingBuffer<T> {
  private buf: (T | undefined)[];
  private head = 0;
  private count = 0;

  constructor(readonly capacity: number) {
    this.buf = new Array(capacity);
  }

  push(item: T): void {
    this.buf[this.head] = item;
    this.head = (this.head + 1) % this.capacity;
    if (this.count < this.capacity) this.count++;
  }

  get length(): number {
    return this.count;
  }

  /** Oldest-to-newest snapshot. */
  items(): T[] {
    const out: T[] = [];
    const start = (this.head - this.count + this.capacity) % this.capacity;
    for (let i = 0; i < this.count; i++) {
      out.push(this.buf[(start + i) % this.capacity] as T);
    }
    return out;
  }

  last(): T | undefined {
    if (this.count === 0) return undefined;
    return this.buf[(this.head - 1 + this.capacity) % this.capacity] as T;
  }
}

/** Latest-wins mailbox: the producer overwrites, the consumer drains.
 * Rendering drops frames rather than queueing unboundedly. */
export class FrameSlot<T> {
  private value: T | null = null;
  dropped = 0;

  offer(frame: T): void {
    if (this.value !== null) this.dropped++;
    this.value = frame;
  }

  take(): T | null {
    const v = this.value;
    this.value = null;
    return v;
  }
}
