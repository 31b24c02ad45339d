/** Pure state-machine invariants: no service needed. */

import { describe, expect, it } from "vitest";
import { FramePlayer, LatestOnly, StudioState } from "../src/state.js";
import type { MeanResponse, SpliceResponse } from "../src/api.js";

const MEAN: MeanResponse = {
  asserted: 10, total: 192, pattern: "C".repeat(10) + "-".repeat(182),
  tau: 0.5, frames: ["a", "b"], final: "b",
};

const SPLICE: SpliceResponse = {
  dna: "CGAT".repeat(48), asserted: 10, tau: 0.5, frames: ["x", "y"], final: "y",
};

describe("StudioState", () => {
  it("blocks splicing with zero sources", () => {
    const s = new StudioState();
    s.setTarget("t");
    expect(s.canSplice).toBe(false);
    expect(() => s.spliceRequestBody()).toThrow();
  });

  it("requires a fresh mean before splicing after a tau change", () => {
    const s = new StudioState([0.5, 0.7, 0.9]);
    s.toggleSource("a");
    s.setTarget("t");
    expect(s.canSplice).toBe(false); // mean never computed
    s.applyMean(MEAN);
    expect(s.canSplice).toBe(true);
    s.setTau(0.7); // threshold moved: mean is stale again
    expect(s.meanStale).toBe(true);
    expect(s.canSplice).toBe(false);
    s.applyMean({ ...MEAN, tau: 0.7 });
    expect(s.canSplice).toBe(true);
  });

  it("mean goes stale when the source set changes", () => {
    const s = new StudioState();
    s.toggleSource("a");
    s.applyMean(MEAN);
    s.toggleSource("b");
    expect(s.meanStale).toBe(true);
  });

  it("rejects a tau outside the configured stops", () => {
    const s = new StudioState([0.5, 0.7]);
    expect(() => s.setTau(0.8)).toThrow();
  });

  it("history entries are immutable and keep the exact request body", () => {
    const s = new StudioState();
    s.toggleSource("b");
    s.toggleSource("a");
    s.setTarget("t");
    s.applyMean(MEAN);
    const body = s.spliceRequestBody();
    const recipe = s.recordSplice(body, SPLICE);
    expect(recipe.bodyJson).toBe(body);
    expect(JSON.parse(recipe.bodyJson).source_ids).toEqual(["a", "b"]);
    expect(Object.isFrozen(recipe)).toBe(true);
    expect(s.history).toHaveLength(1);
    // a later selection change must not affect the recorded recipe
    s.toggleSource("c");
    expect(JSON.parse(s.history[0].bodyJson).source_ids).toEqual(["a", "b"]);
  });

  it("loadRecipe restores selection and marks the mean stale", () => {
    const s = new StudioState();
    s.toggleSource("a");
    s.setTarget("t");
    s.applyMean(MEAN);
    const recipe = s.recordSplice(s.spliceRequestBody(), SPLICE);
    s.toggleSource("zz");
    s.loadRecipe(recipe);
    expect(s.sourceIds).toEqual(["a"]);
    expect(s.targetId).toBe("t");
    expect(s.meanStale).toBe(true);
  });
});

describe("LatestOnly", () => {
  it("discards stale responses by sequence number", async () => {
    const gate = new LatestOnly();
    let releaseFirst!: (v: string) => void;
    const first = gate.run(
      () => new Promise<string>((resolve) => { releaseFirst = resolve; }),
    );
    const second = gate.run(() => Promise.resolve("new"));
    releaseFirst("old");
    expect(await second).toBe("new");
    expect(await first).toBeNull(); // superseded
  });
});

describe("FramePlayer", () => {
  it("starts on the final frame and clamps scrubbing", () => {
    const p = new FramePlayer();
    p.setFrames(["f0", "f1", "f2"]);
    expect(p.current()).toBe("f2");
    expect(p.scrub(0)).toBe("f0");
    expect(p.scrub(99)).toBe("f2");
    expect(p.scrub(-3)).toBe("f0");
  });

  it("is empty-safe", () => {
    const p = new FramePlayer();
    expect(p.current()).toBeNull();
    expect(p.scrub(1)).toBeNull();
  });
});
