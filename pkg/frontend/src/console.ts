// Console view model: pending-decision queue, advisory countdown, verdict
// lifecycle with exactly-once submission, and an offline outbox.
//
// No DOM access here; main.ts renders this state and the tests drive it
// directly.

import {
  ActionClassName,
  DecisionMessage,
  FinalRecordWire,
  Playback,
  DecisionPackage,
  ServerMessage,
  VerdictWire,
} from "./messages";
import { isConsistentOverride } from "./scoring";

export const ADVISORY_WINDOW_S = 5;

export type CardState = "pending" | "sending";

export interface DecisionCard {
  decision: DecisionPackage;
  playback: Playback | null;
  receivedAtMs: number;
  state: CardState;
}

export interface SubmitResult {
  ok: boolean;
  reason?: string;
  queuedOffline?: boolean;
}

export interface Notice {
  event: string;
  text: string;
}

export class ConsoleViewModel {
  readonly cards = new Map<string, DecisionCard>();
  readonly notices: Notice[] = [];
  readonly finals: FinalRecordWire[] = [];
  connected = false;

  private outbox: VerdictWire[] = [];
  private readonly juror: string;
  private readonly sendRaw: (verdict: VerdictWire) => void;
  private readonly now: () => number;

  constructor(opts: {
    juror: string;
    send: (verdict: VerdictWire) => void;
    now?: () => number;
  }) {
    this.juror = opts.juror;
    this.sendRaw = opts.send;
    this.now = opts.now ?? (() => Date.now());
  }

  get offlineQueueLength(): number {
    return this.outbox.length;
  }

  setConnected(connected: boolean): void {
    this.connected = connected;
    if (connected) {
      const queued = this.outbox;
      this.outbox = [];
      for (const verdict of queued) this.sendRaw(verdict);
    }
  }

  onServerMessage(msg: ServerMessage): void {
    switch (msg.type) {
      case "decision":
        this.onDecision(msg);
        return;
      case "ack":
        this.onAck(msg.event, msg.final);
        return;
      case "nack":
        this.onNack(msg.event, msg.reason);
        return;
      case "final":
        this.onFinal(msg.final);
        return;
    }
  }

  private onDecision(msg: DecisionMessage): void {
    this.cards.set(msg.decision.event, {
      decision: msg.decision,
      playback: msg.playback ?? null,
      receivedAtMs: this.now(),
      state: "pending",
    });
  }

  /** Advisory seconds remaining; 0 after expiry but the card stays
   * actionable until the server auto-finalizes it. */
  countdownSeconds(event: string): number {
    const card = this.cards.get(event);
    if (!card) return 0;
    const elapsed = (this.now() - card.receivedAtMs) / 1000;
    return Math.max(0, ADVISORY_WINDOW_S - elapsed);
  }

  submitConfirm(event: string): SubmitResult {
    return this.dispatch(event, { event, verdict: "confirm", juror: this.juror, t: this.now() / 1000 });
  }

  submitOverride(event: string, cls: ActionClassName, score: number): SubmitResult {
    if (!isConsistentOverride(cls, score)) {
      return { ok: false, reason: "inconsistent" };
    }
    return this.dispatch(event, {
      event,
      verdict: "override",
      juror: this.juror,
      t: this.now() / 1000,
      class: cls,
      score,
    });
  }

  private dispatch(event: string, verdict: VerdictWire): SubmitResult {
    const card = this.cards.get(event);
    if (!card) return { ok: false, reason: "unknown_event" };
    if (card.state === "sending") return { ok: false, reason: "already_sent" };
    card.state = "sending";
    if (!this.connected) {
      this.outbox.push(verdict);
      return { ok: true, queuedOffline: true };
    }
    this.sendRaw(verdict);
    return { ok: true };
  }

  private onAck(event: string, final: FinalRecordWire): void {
    this.cards.delete(event);
    this.finals.push(final);
  }

  private onNack(event: string | null, reason: string): void {
    if (!event) return;
    const card = this.cards.get(event);
    if (reason === "already_resolved") {
      // Server auto-finalized (or another juror got there first).
      this.cards.delete(event);
      this.notices.push({ event, text: "auto-finalized" });
      return;
    }
    if (card) card.state = "pending"; // re-enable the card for another try
    this.notices.push({ event, text: reason });
  }

  private onFinal(final: FinalRecordWire): void {
    if (this.cards.delete(final.event)) {
      this.notices.push({ event: final.event, text: `finalized: ${final.verdict}` });
    }
    this.finals.push(final);
  }
}
