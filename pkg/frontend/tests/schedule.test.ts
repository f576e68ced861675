import { describe, expect, it, vi } from "vitest";

import { debounce, LastWriteWins } from "../src/schedule.js";

function tick(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

describe("debounce", () => {
  it("collapses a burst into one trailing call", async () => {
    vi.useFakeTimers();
    const calls: number[] = [];
    const fn = debounce((v: number) => calls.push(v), 100);
    fn(1);
    fn(2);
    fn(3);
    expect(calls).toEqual([]);
    await vi.advanceTimersByTimeAsync(99);
    expect(calls).toEqual([]);
    await vi.advanceTimersByTimeAsync(1);
    expect(calls).toEqual([3]);
    vi.useRealTimers();
  });

  it("fires again after the quiet period", async () => {
    vi.useFakeTimers();
    const calls: string[] = [];
    const fn = debounce((v: string) => calls.push(v), 50);
    fn("a");
    await vi.advanceTimersByTimeAsync(60);
    fn("b");
    await vi.advanceTimersByTimeAsync(60);
    expect(calls).toEqual(["a", "b"]);
    vi.useRealTimers();
  });
});

describe("LastWriteWins", () => {
  it("applies the result of the latest request only", async () => {
    const seq = new LastWriteWins();
    const applied: string[] = [];

    // Older request resolves after the newer one: its result must be dropped.
    const slow = seq.run(
      async () => {
        await tick(40);
        return "slow";
      },
      (v) => applied.push(v),
    );
    const fast = seq.run(
      async () => {
        await tick(5);
        return "fast";
      },
      (v) => applied.push(v),
    );
    await Promise.all([slow, fast]);
    expect(applied).toEqual(["fast"]);
  });

  it("applies results in submission order when they resolve in order", async () => {
    const seq = new LastWriteWins();
    const applied: string[] = [];
    await seq.run(async () => "first", (v) => applied.push(v));
    await seq.run(async () => "second", (v) => applied.push(v));
    expect(applied).toEqual(["first", "second"]);
  });

  it("routes failures to onError, and only for the current request", async () => {
    const seq = new LastWriteWins();
    const failures: string[] = [];
    const applied: string[] = [];

    const stale = seq.run(
      async () => {
        await tick(30);
        throw new Error("stale failure");
      },
      () => applied.push("stale"),
      (e) => failures.push(String(e)),
    );
    const current = seq.run(
      async () => {
        await tick(5);
        throw new Error("current failure");
      },
      () => applied.push("current"),
      (e) => failures.push(String(e)),
    );
    await Promise.all([stale, current]);
    expect(applied).toEqual([]);
    expect(failures).toEqual(["Error: current failure"]);
  });
});
