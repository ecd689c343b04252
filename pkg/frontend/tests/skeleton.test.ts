import { describe, expect, it } from "vitest";

import { Playback } from "../src/messages";
import {
  Ctx2D,
  JOINT_COUNT,
  L_ANKLE,
  SKELETON_EDGES,
  drawFrame,
  kickingAnkleIndex,
  nextFrame,
  toPixels,
} from "../src/skeleton";

function recordingCtx() {
  const calls: string[] = [];
  const ctx: Ctx2D = {
    lineWidth: 0,
    strokeStyle: "",
    fillStyle: "",
    beginPath: () => calls.push("beginPath"),
    moveTo: () => calls.push("moveTo"),
    lineTo: () => calls.push("lineTo"),
    stroke: () => calls.push("stroke"),
    arc: () => calls.push("arc"),
    fill: () => calls.push("fill"),
    strokeRect: () => calls.push("strokeRect"),
    clearRect: () => calls.push("clearRect"),
  };
  return { ctx, calls };
}

function playbackWithMovingLeftAnkle(frames = 30): Playback {
  return {
    fps: 60,
    frames: Array.from({ length: frames }, (_, k) => {
      const joints = Array.from({ length: JOINT_COUNT }, () => [0.5, 1.0] as [number, number]);
      joints[L_ANKLE] = [0.5 + 0.05 * k, 0.1 + 0.04 * k];
      return joints;
    }),
    head: Array.from({ length: frames }, () => [1.0, 1.6] as [number, number]),
    head_box_side: 0.25,
    foot_box_side: 0.25,
  };
}

describe("skeleton geometry", () => {
  it("edges stay within the 18-joint layout", () => {
    expect(SKELETON_EDGES.length).toBeGreaterThanOrEqual(13);
    for (const [a, b] of SKELETON_EDGES) {
      expect(a).toBeGreaterThanOrEqual(0);
      expect(b).toBeLessThan(JOINT_COUNT);
    }
  });

  it("court meters map to pixels with a y-flip", () => {
    const view = { scale: 100, originX: 50, originY: 400 };
    expect(toPixels([0, 0], view)).toEqual([50, 400]);
    expect(toPixels([1, 1], view)).toEqual([150, 300]);
  });

  it("identifies the moving ankle as the kicking one", () => {
    expect(kickingAnkleIndex(playbackWithMovingLeftAnkle())).toBe(L_ANKLE);
  });

  it("draws every bone and joint plus the head box", () => {
    const { ctx, calls } = recordingCtx();
    const playback = playbackWithMovingLeftAnkle();
    drawFrame(ctx, playback, 0, { scale: 100, originX: 0, originY: 400 }, { width: 720, height: 420 });
    expect(calls.filter((c) => c === "clearRect")).toHaveLength(1);
    expect(calls.filter((c) => c === "lineTo")).toHaveLength(SKELETON_EDGES.length);
    // 18 joint dots plus the highlighted kicking ankle.
    expect(calls.filter((c) => c === "arc")).toHaveLength(JOINT_COUNT + 1);
    expect(calls.filter((c) => c === "strokeRect")).toHaveLength(1);
  });

  it("playback loops across exactly the window frames", () => {
    const playback = playbackWithMovingLeftAnkle(30);
    expect(playback.frames).toHaveLength(30);
    let frame = 0;
    const seen = new Set<number>();
    for (let i = 0; i < 60; i++) {
      seen.add(frame);
      frame = nextFrame(frame, playback.frames.length);
    }
    expect(seen.size).toBe(30);
  });
});
