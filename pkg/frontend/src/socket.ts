/**
 * Reconnecting WebSocket wrapper: binary frames in, typed messages out,
 * exponential backoff on loss, visible status transitions.
 */

import { decodeMessage, type ServerMessage, WireError } from "./protocol.js";
import { backoffDelayMs, type ConnectionStatus } from "./session.js";

export interface SocketCallbacks {
  onMessage(msg: ServerMessage): void;
  onStatus(status: ConnectionStatus): void;
  onDecodeError?(error: WireError): void;
}

export class ReconnectingSocket {
  private ws: WebSocket | null = null;
  private attempt = 0;
  private closed = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly url: string,
    private readonly callbacks: SocketCallbacks,
  ) {}

  open(): void {
    this.closed = false;
    this.connect();
  }

  private connect(): void {
    this.callbacks.onStatus("connecting");
    const ws = new WebSocket(this.url);
    ws.binaryType = "arraybuffer";
    this.ws = ws;

    ws.onopen = () => {
      this.attempt = 0;
      this.callbacks.onStatus("connected");
    };
    ws.onmessage = (event: MessageEvent) => {
      try {
        this.callbacks.onMessage(decodeMessage(event.data as ArrayBuffer));
      } catch (error) {
        if (error instanceof WireError && this.callbacks.onDecodeError) {
          this.callbacks.onDecodeError(error);
        }
      }
    };
    ws.onclose = () => {
      this.ws = null;
      if (this.closed) return;
      this.callbacks.onStatus("disconnected");
      const delay = backoffDelayMs(this.attempt++);
      this.timer = setTimeout(() => this.connect(), delay);
    };
    ws.onerror = () => {
      ws.close();
    };
  }

  /** Send raw bytes; returns false (and drops) when not connected. */
  send(data: Uint8Array): boolean {
    if (this.ws === null || this.ws.readyState !== WebSocket.OPEN) {
      return false;
    }
    this.ws.send(data);
    return true;
  }

  close(): void {
    this.closed = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.ws?.close();
  }
}
