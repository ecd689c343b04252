// DOM wiring for the jury console.

import { ConsoleViewModel } from "./console";
import { JuryConnection } from "./net";
import { ActionClassName, VerdictWire } from "./messages";
import { CLASS_LABELS, VALID_SCORES, cardTitle } from "./scoring";
import { Ctx2D, ViewTransform, drawFrame, nextFrame } from "./skeleton";

const jurorId = new URLSearchParams(location.search).get("juror") ?? "J1";
const matchScope = new URLSearchParams(location.search).get("match");

const statusEl = document.getElementById("status") as HTMLElement;
const cardsEl = document.getElementById("cards") as HTMLElement;
const noticesEl = document.getElementById("notices") as HTMLElement;
const canvas = document.getElementById("overlay") as HTMLCanvasElement;
const detailEl = document.getElementById("detail") as HTMLElement;

const connection = new JuryConnection(
  juryUrl(),
  {
    onMessage: (msg) => {
      vm.onServerMessage(msg);
      render();
    },
    onStatus: (connected) => {
      vm.setConnected(connected);
      render();
    },
    onMalformed: () => pushToast("malformed message dropped"),
  },
  (url) => new WebSocket(url) as unknown as import("./net").SocketLike,
);

const vm = new ConsoleViewModel({
  juror: jurorId,
  send: (verdict: VerdictWire) => connection.send(verdict),
});

let selectedEvent: string | null = null;
let playbackFrame = 0;
let playbackTimer: number | null = null;

function juryUrl(): string {
  const proto = location.protocol === "https:" ? "wss" : "ws";
  const scope = matchScope ? `?match=${encodeURIComponent(matchScope)}` : "";
  return `${proto}://${location.host}/jury${scope}`;
}

function pushToast(text: string): void {
  const div = document.createElement("div");
  div.className = "toast";
  div.textContent = text;
  noticesEl.appendChild(div);
  setTimeout(() => div.remove(), 4000);
}

function select(event: string): void {
  selectedEvent = event;
  playbackFrame = 0;
  render();
}

function startPlaybackLoop(): void {
  if (playbackTimer !== null) return;
  playbackTimer = window.setInterval(() => {
    const card = selectedEvent ? vm.cards.get(selectedEvent) : undefined;
    if (card?.playback) {
      playbackFrame = nextFrame(playbackFrame, card.playback.frames.length);
      paintOverlay();
    }
  }, 50);
}

function paintOverlay(): void {
  const card = selectedEvent ? vm.cards.get(selectedEvent) : undefined;
  const ctx = canvas.getContext("2d") as unknown as Ctx2D | null;
  if (!ctx) return;
  if (!card?.playback) {
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    return;
  }
  const view: ViewTransform = { scale: 150, originX: 120, originY: canvas.height - 30 };
  drawFrame(ctx, card.playback, playbackFrame, view, {
    width: canvas.width,
    height: canvas.height,
  });
}

function render(): void {
  statusEl.textContent = vm.connected
    ? `connected as ${jurorId}`
    : `offline (${vm.offlineQueueLength} queued)`;
  statusEl.className = vm.connected ? "status ok" : "status offline";

  cardsEl.replaceChildren();
  for (const [event, card] of vm.cards) {
    const d = card.decision;
    const el = document.createElement("div");
    el.className = "card" + (event === selectedEvent ? " selected" : "");
    const countdown = vm.countdownSeconds(event);
    const flags = d.flags.length ? `<span class="badges">${d.flags.map((f) => `<span class="badge">${f}</span>`).join("")}</span>` : "";
    el.innerHTML = `
      <div class="title">${cardTitle(d.class, d.score, d.conf)}</div>
      <div class="meta">rot ${d.evidence.rot_deg.toFixed(0)}&deg; &middot;
        decel ${d.evidence.decel.toFixed(0)} m/s&sup2; &middot;
        IoU ${d.evidence.iou.toFixed(2)} &middot;
        ${d.latency_ms.total.toFixed(0)} ms</div>
      <div class="countdown">${countdown > 0 ? countdown.toFixed(1) + " s" : "review window passed"}</div>
      ${flags}`;
    el.onclick = () => select(event);
    cardsEl.appendChild(el);
  }

  renderDetail();
  paintOverlay();
}

function renderDetail(): void {
  detailEl.replaceChildren();
  const card = selectedEvent ? vm.cards.get(selectedEvent) : undefined;
  if (!card) {
    detailEl.textContent = "select a decision";
    return;
  }
  const event = card.decision.event;
  const sending = card.state === "sending";

  const confirm = document.createElement("button");
  confirm.textContent = "Confirm";
  confirm.disabled = sending;
  confirm.onclick = () => {
    const res = vm.submitConfirm(event);
    if (!res.ok) pushToast(res.reason ?? "rejected");
    if (res.queuedOffline) pushToast("offline: verdict queued");
    render();
  };

  const classSel = document.createElement("select");
  for (const cls of Object.keys(CLASS_LABELS) as ActionClassName[]) {
    const opt = document.createElement("option");
    opt.value = cls;
    opt.textContent = CLASS_LABELS[cls];
    classSel.appendChild(opt);
  }
  const scoreSel = document.createElement("select");
  const refreshScores = () => {
    scoreSel.replaceChildren();
    for (const s of VALID_SCORES[classSel.value as ActionClassName]) {
      const opt = document.createElement("option");
      opt.value = String(s);
      opt.textContent = `${s} points`;
      scoreSel.appendChild(opt);
    }
  };
  classSel.onchange = refreshScores;
  refreshScores();

  const override = document.createElement("button");
  override.textContent = "Override";
  override.disabled = sending;
  override.onclick = () => {
    const res = vm.submitOverride(
      event,
      classSel.value as ActionClassName,
      Number(scoreSel.value),
    );
    if (!res.ok) pushToast(res.reason === "inconsistent" ? "inconsistent class/score" : res.reason ?? "rejected");
    if (res.queuedOffline) pushToast("offline: verdict queued");
    render();
  };

  detailEl.append(confirm, document.createTextNode(" "), classSel, scoreSel, override);
  if (sending) {
    const note = document.createElement("span");
    note.className = "sending";
    note.textContent = " awaiting server";
    detailEl.appendChild(note);
  }
}

connection.open();
startPlaybackLoop();
window.setInterval(render, 500); // countdown refresh
render();
