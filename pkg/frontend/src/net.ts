// Jury-channel connection with automatic reconnect. The WebSocket
// constructor is injected so tests can substitute a fake.

import { parseServerMessage, ServerMessage, VerdictWire } from "./messages";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface JuryConnectionHandlers {
  onMessage(msg: ServerMessage): void;
  onStatus(connected: boolean): void;
  onMalformed?(raw: string): void;
}

export class JuryConnection {
  private socket: SocketLike | null = null;
  private closed = false;

  constructor(
    private readonly url: string,
    private readonly handlers: JuryConnectionHandlers,
    private readonly factory: SocketFactory,
    private readonly reconnectDelayMs = 1000,
  ) {}

  open(): void {
    this.closed = false;
    this.connect();
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
  }

  send(verdict: VerdictWire): void {
    this.socket?.send(JSON.stringify(verdict));
  }

  private connect(): void {
    const socket = this.factory(this.url);
    this.socket = socket;
    socket.onopen = () => this.handlers.onStatus(true);
    socket.onclose = () => {
      this.handlers.onStatus(false);
      if (!this.closed) {
        setTimeout(() => this.connect(), this.reconnectDelayMs);
      }
    };
    socket.onerror = () => {
      // onclose follows; nothing extra to do.
    };
    socket.onmessage = (ev) => {
      const raw = typeof ev.data === "string" ? ev.data : "";
      const msg = parseServerMessage(raw);
      if (msg === null) {
        this.handlers.onMalformed?.(raw);
        return;
      }
      this.handlers.onMessage(msg);
    };
  }
}
