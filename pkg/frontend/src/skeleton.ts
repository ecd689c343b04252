// 2D skeleton rendering on a canvas context. Court meters map to pixels
// with a fixed scale and a y-flip (court y grows upward). Only the minimal
// context surface is required so tests can pass a recording stub.

import { Playback } from "./messages";

export const JOINT_COUNT = 18;

// nose-neck, arms, torso, legs, face.
export const SKELETON_EDGES: [number, number][] = [
  [0, 1],
  [1, 2], [2, 3], [3, 4],
  [1, 5], [5, 6], [6, 7],
  [1, 8], [8, 9], [9, 10],
  [1, 11], [11, 12], [12, 13],
  [0, 14], [0, 15], [14, 16], [15, 17],
];

export const R_ANKLE = 10;
export const L_ANKLE = 13;

export interface Ctx2D {
  lineWidth: number;
  strokeStyle: string;
  fillStyle: string;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fill(): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  clearRect(x: number, y: number, w: number, h: number): void;
}

export interface ViewTransform {
  scale: number; // pixels per meter
  originX: number; // pixel x of court x=0
  originY: number; // pixel y of court y=0 (floor)
}

export function toPixels(p: [number, number], view: ViewTransform): [number, number] {
  return [view.originX + p[0] * view.scale, view.originY - p[1] * view.scale];
}

export function kickingAnkleIndex(playback: Playback): number {
  // The faster ankle over the window is the kicking one.
  let best = R_ANKLE;
  let bestDist = -1;
  for (const idx of [R_ANKLE, L_ANKLE]) {
    let dist = 0;
    for (let k = 1; k < playback.frames.length; k++) {
      const a = playback.frames[k - 1][idx];
      const b = playback.frames[k][idx];
      dist += Math.hypot(b[0] - a[0], b[1] - a[1]);
    }
    if (dist > bestDist) {
      bestDist = dist;
      best = idx;
    }
  }
  return best;
}

export function drawFrame(
  ctx: Ctx2D,
  playback: Playback,
  frameIndex: number,
  view: ViewTransform,
  size: { width: number; height: number },
): void {
  const frame = playback.frames[frameIndex];
  if (!frame) return;
  ctx.clearRect(0, 0, size.width, size.height);

  ctx.lineWidth = 2;
  ctx.strokeStyle = "#9ad";
  for (const [i, j] of SKELETON_EDGES) {
    const a = toPixels(frame[i], view);
    const b = toPixels(frame[j], view);
    ctx.beginPath();
    ctx.moveTo(a[0], a[1]);
    ctx.lineTo(b[0], b[1]);
    ctx.stroke();
  }

  ctx.fillStyle = "#def";
  for (const joint of frame) {
    const [x, y] = toPixels(joint, view);
    ctx.beginPath();
    ctx.arc(x, y, 3, 0, 2 * Math.PI);
    ctx.fill();
  }

  // Kicking ankle highlighted.
  const ankle = frame[kickingAnkleIndex(playback)];
  const [ax, ay] = toPixels(ankle, view);
  ctx.fillStyle = "#f66";
  ctx.beginPath();
  ctx.arc(ax, ay, 5, 0, 2 * Math.PI);
  ctx.fill();

  // Defender head box for the impact geometry.
  const head = playback.head[frameIndex];
  if (head) {
    const side = playback.head_box_side * view.scale;
    const [hx, hy] = toPixels(head, view);
    ctx.strokeStyle = "#fa3";
    ctx.strokeRect(hx - side / 2, hy - side / 2, side, side);
  }
}

/** Frame stepper for looping playback. */
export function nextFrame(current: number, total: number): number {
  return total <= 0 ? 0 : (current + 1) % total;
}
