/**
 * Socket wrapper for the guidance service: auto-reconnect, subscription
 * replay, and acknowledgement tracking so instructions are never silently
 * dropped (an unacked send is surfaced to the UI after a timeout).
 */

import { ClientMsg, ServerMsg, parseServerMsg } from "./protocol.js";

export type SocketFactory = (url: string) => WebSocket;

export interface PendingSend {
  message: ClientMsg;
  sentAt: number;
  acked: boolean;
  failed: boolean;
}

export interface GuidanceSocketOptions {
  /** Injectable for tests (node `ws`); defaults to the browser WebSocket. */
  socketFactory?: SocketFactory;
  ackTimeoutMs?: number;
  reconnectDelayMs?: number;
}

export class GuidanceSocket {
  readonly url: string;
  connected = false;
  pending: PendingSend[] = [];
  private ws: WebSocket | null = null;
  private listeners = new Set<(msg: ServerMsg) => void>();
  private statusListeners = new Set<(connected: boolean) => void>();
  private subscriptions = new Set<string>();
  private outbox: ClientMsg[] = [];
  private closed = false;
  private readonly factory: SocketFactory;
  private readonly ackTimeoutMs: number;
  private readonly reconnectDelayMs: number;

  constructor(url: string, options: GuidanceSocketOptions = {}) {
    this.url = url;
    this.factory = options.socketFactory
      ?? ((u: string) => new WebSocket(u));
    this.ackTimeoutMs = options.ackTimeoutMs ?? 2000;
    this.reconnectDelayMs = options.reconnectDelayMs ?? 1000;
    this.connect();
  }

  private connect(): void {
    if (this.closed) return;
    const ws = this.factory(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.connected = true;
      this.statusListeners.forEach((fn) => fn(true));
      // Re-attach to sessions we were watching before the drop.
      for (const session of this.subscriptions) {
        this.sendRaw({ type: "subscribe", session });
      }
      // Flush messages queued while the socket was down or still opening.
      const queued = this.outbox;
      this.outbox = [];
      for (const message of queued) {
        this.sendRaw(message);
      }
    };
    ws.onmessage = (event: MessageEvent) => {
      const msg = parseServerMsg(String(event.data));
      if (!msg) return;
      if (msg.type === "ack") {
        for (const p of this.pending) {
          if (!p.acked && !p.failed && "session" in p.message
              && (p.message as { session?: string }).session === msg.session) {
            p.acked = true;
            break;
          }
        }
      }
      this.listeners.forEach((fn) => fn(msg));
    };
    ws.onclose = () => {
      this.connected = false;
      this.statusListeners.forEach((fn) => fn(false));
      if (!this.closed) {
        setTimeout(() => this.connect(), this.reconnectDelayMs);
      }
    };
    ws.onerror = () => {
      /* onclose follows; reconnect handled there */
    };
  }

  onMessage(fn: (msg: ServerMsg) => void): () => void {
    this.listeners.add(fn);
    return () => this.listeners.delete(fn);
  }

  onStatus(fn: (connected: boolean) => void): () => void {
    this.statusListeners.add(fn);
    return () => this.statusListeners.delete(fn);
  }

  subscribe(session: string): void {
    this.subscriptions.add(session);
    this.sendRaw({ type: "subscribe", session });
  }

  /** Send with ack tracking; returns the pending record for UI display. */
  send(message: ClientMsg): PendingSend {
    const record: PendingSend = { message, sentAt: Date.now(), acked: false, failed: false };
    if (message.type === "instruction" || message.type === "plan") {
      this.pending.push(record);
      setTimeout(() => {
        if (!record.acked) record.failed = true;
      }, this.ackTimeoutMs);
    } else {
      record.acked = true;
    }
    this.sendRaw(message);
    return record;
  }

  private sendRaw(message: ClientMsg): void {
    if (this.ws && this.ws.readyState === 1 /* OPEN */) {
      this.ws.send(JSON.stringify(message));
    } else {
      this.outbox.push(message);  // flushed on (re)connect, never dropped
    }
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
  }
}
