// Wire message schemas for the /jury websocket channel.

export type ActionClassName = "slide" | "standard_head_kick" | "turning_head_kick";

export interface ImpactEvidence {
  decel: number;
  iou: number;
  rot_deg: number;
  impact: boolean;
}

export interface LatencyMs {
  pose: number;
  class: number;
  impact: number;
  total: number;
}

export interface DecisionPackage {
  event: string;
  class: ActionClassName;
  score: number;
  conf: number;
  evidence: ImpactEvidence;
  latency_ms: LatencyMs;
  model_version: number;
  flags: string[];
}

export interface Playback {
  fps: number;
  frames: [number, number][][]; // per frame: 18 keypoints [x, y] in meters
  head: ([number, number] | null)[];
  head_box_side: number;
  foot_box_side: number;
}

export interface DecisionMessage {
  type: "decision";
  match?: string;
  decision: DecisionPackage;
  playback?: Playback;
}

export interface FinalRecordWire {
  event: string;
  class: ActionClassName;
  score: number;
  source: string;
  verdict: string;
  juror: string;
  flags: string[];
}

export interface FinalMessage {
  type: "final";
  match?: string;
  final: FinalRecordWire;
}

export interface AckMessage {
  type: "ack";
  event: string;
  final: FinalRecordWire;
}

export interface NackMessage {
  type: "nack";
  event: string | null;
  reason: string;
}

export type ServerMessage = DecisionMessage | FinalMessage | AckMessage | NackMessage;

export interface VerdictWire {
  event: string;
  verdict: "confirm" | "override";
  juror: string;
  t: number;
  class?: ActionClassName;
  score?: number;
}

const CLASS_NAMES = new Set(["slide", "standard_head_kick", "turning_head_kick"]);

function isDecisionPackage(d: unknown): d is DecisionPackage {
  if (typeof d !== "object" || d === null) return false;
  const p = d as Record<string, unknown>;
  return (
    typeof p.event === "string" &&
    typeof p.class === "string" &&
    CLASS_NAMES.has(p.class) &&
    typeof p.score === "number" &&
    typeof p.conf === "number" &&
    typeof p.evidence === "object" &&
    p.evidence !== null &&
    typeof p.latency_ms === "object" &&
    p.latency_ms !== null
  );
}

/** Parse one websocket message; returns null for anything malformed. */
export function parseServerMessage(raw: string): ServerMessage | null {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof doc !== "object" || doc === null) return null;
  const msg = doc as Record<string, unknown>;
  switch (msg.type) {
    case "decision":
      return isDecisionPackage(msg.decision) ? (doc as DecisionMessage) : null;
    case "final":
      return typeof msg.final === "object" && msg.final !== null ? (doc as FinalMessage) : null;
    case "ack":
      return typeof msg.event === "string" ? (doc as AckMessage) : null;
    case "nack":
      return typeof msg.reason === "string" ? (doc as NackMessage) : null;
    default:
      return null;
  }
}
