import { describe, expect, it } from "vitest";

import { parseServerMessage } from "../src/messages";

const decisionEnvelope = {
  type: "decision",
  match: "SIM",
  decision: {
    event: "E17",
    class: "turning_head_kick",
    score: 5,
    conf: 0.9,
    evidence: { decel: 106.1, iou: 0.36, rot_deg: 156.0, impact: true },
    latency_ms: { pose: 9, class: 43, impact: 8, total: 60 },
    model_version: 3,
    flags: [],
  },
  playback: {
    fps: 60,
    frames: [Array.from({ length: 18 }, () => [0, 0])],
    head: [[1.0, 1.6]],
    head_box_side: 0.25,
    foot_box_side: 0.25,
  },
};

describe("parseServerMessage", () => {
  it("accepts a decision envelope", () => {
    const msg = parseServerMessage(JSON.stringify(decisionEnvelope));
    expect(msg).not.toBeNull();
    expect(msg!.type).toBe("decision");
    if (msg!.type === "decision") {
      expect(msg!.decision.event).toBe("E17");
      expect(msg!.decision.score).toBe(5);
    }
  });

  it("accepts ack, nack and final", () => {
    const final = { event: "E17", class: "slide", score: 0, source: "jury", verdict: "override", juror: "J2", flags: [] };
    expect(parseServerMessage(JSON.stringify({ type: "ack", event: "E17", final }))?.type).toBe("ack");
    expect(parseServerMessage(JSON.stringify({ type: "nack", event: "E17", reason: "unknown_event" }))?.type).toBe("nack");
    expect(parseServerMessage(JSON.stringify({ type: "final", final }))?.type).toBe("final");
  });

  it("rejects malformed payloads", () => {
    expect(parseServerMessage("{oops")).toBeNull();
    expect(parseServerMessage("42")).toBeNull();
    expect(parseServerMessage(JSON.stringify({ type: "mystery" }))).toBeNull();
    expect(parseServerMessage(JSON.stringify({ type: "decision", decision: { event: 1 } }))).toBeNull();
    expect(
      parseServerMessage(JSON.stringify({ type: "decision", decision: { ...decisionEnvelope.decision, class: "axe_kick" } })),
    ).toBeNull();
  });
});
