// Display labels and the class/score consistency table. The console never
// computes a score of its own: this table only mirrors the server-side rule
// so inconsistent overrides are rejected before they hit the wire.

import { ActionClassName } from "./messages";

export const CLASS_LABELS: Record<ActionClassName, string> = {
  slide: "Slide",
  standard_head_kick: "Standard Head Kick",
  turning_head_kick: "Turning Head Kick",
};

// Scores a jury override may pair with each class; 0 is always allowed
// because the jury can void any action.
export const VALID_SCORES: Record<ActionClassName, number[]> = {
  slide: [0],
  standard_head_kick: [0, 3],
  turning_head_kick: [0, 5],
};

export function isConsistentOverride(cls: ActionClassName, score: number): boolean {
  return (VALID_SCORES[cls] ?? []).includes(score);
}

export function cardTitle(cls: ActionClassName, score: number, conf: number): string {
  const pct = Math.round(conf * 100);
  return `${CLASS_LABELS[cls]} — ${score} points — ${pct}%`;
}
