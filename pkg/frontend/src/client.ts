/**
 * Reconnecting NDJSON client over a pluggable transport.
 *
 * The console does not care whether bytes arrive over a raw TCP socket
 * (node) or a WebSocket bridge (browser); a Transport adapts either.  On
 * disconnect the client reports the connection as closed (the view greys
 * its panels and shows a banner) and retries with a fixed backoff until
 * the session comes back or `close` is called.
 */

import { LineBuffer, parseServiceMsg, serialize } from "./protocol.js";
import type { OperatorMsg, ServiceMsg } from "./protocol.js";
import type { Connection } from "./state.js";

export interface Transport {
  send(data: string): void;
  close(): void;
}

export interface TransportHandlers {
  onOpen(): void;
  onData(chunk: string): void;
  onClose(): void;
}

export type TransportFactory = (handlers: TransportHandlers) => Transport;

export interface ClientHandlers {
  onMessage(msg: ServiceMsg): void;
  onConnection(state: Connection): void;
}

export const RECONNECT_DELAY_MS = 500;

export class ConsoleClient {
  private readonly factory: TransportFactory;
  private readonly handlers: ClientHandlers;
  private transport: Transport | null = null;
  private buffer = new LineBuffer();
  private closed = false;
  private retry: ReturnType<typeof setTimeout> | null = null;

  constructor(factory: TransportFactory, handlers: ClientHandlers) {
    this.factory = factory;
    this.handlers = handlers;
  }

  connect(): void {
    this.closed = false;
    this.buffer = new LineBuffer();
    this.handlers.onConnection("connecting");
    this.transport = this.factory({
      onOpen: () => this.handlers.onConnection("open"),
      onData: (chunk) => {
        for (const line of this.buffer.feed(chunk)) {
          this.handlers.onMessage(parseServiceMsg(line));
        }
      },
      onClose: () => {
        this.transport = null;
        this.handlers.onConnection("closed");
        if (!this.closed) {
          this.retry = setTimeout(() => this.connect(), RECONNECT_DELAY_MS);
        }
      },
    });
  }

  send(msg: OperatorMsg): void {
    if (this.transport !== null) {
      this.transport.send(serialize(msg));
    }
  }

  close(): void {
    this.closed = true;
    if (this.retry !== null) {
      clearTimeout(this.retry);
      this.retry = null;
    }
    if (this.transport !== null) {
      this.transport.close();
      this.transport = null;
    }
  }
}

/** WebSocket transport for the browser build. */
export function webSocketTransport(url: string): TransportFactory {
  return (handlers) => {
    const ws = new WebSocket(url);
    ws.onopen = () => handlers.onOpen();
    ws.onmessage = (ev) => handlers.onData(String(ev.data));
    ws.onclose = () => handlers.onClose();
    return {
      send: (data: string) => ws.send(data),
      close: () => ws.close(),
    };
  };
}
