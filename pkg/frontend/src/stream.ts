import type { WireEvent } from './types.js';

/**
 * Minimal socket surface so tests (and non-browser hosts) can supply a
 * fake transport; a browser WebSocket satisfies it directly.
 */
export interface StreamSocket {
  onmessage: ((event: { data: string }) => void) | null;
  onclose: (() => void) | null;
  close(): void;
}

export type SocketFactory = (fromSeq: number) => StreamSocket;

export interface StreamHandlers {
  onEvent: (event: WireEvent) => void;
  onEnded?: () => void;
}

export function wsUrl(baseUrl: string, instanceId: string, token: string, fromSeq: number): string {
  const ws = baseUrl.replace(/^http/, 'ws');
  return `${ws}/api/instances/${instanceId}/stream?token=${encodeURIComponent(token)}&from_seq=${fromSeq}`;
}

/**
 * Ordered event stream with sequence-number resumption. Every delivered
 * seq equals its position in the local buffer, so after any number of
 * drops the buffer is exactly the server log prefix: reconnects resume
 * from the buffer length, duplicates are skipped, and a gap (which the
 * server never produces, but a proxy might) forces a resubscribe.
 */
export class ResumingStream {
  readonly received: WireEvent[] = [];
  reconnects = 0;
  ended = false;

  private socket: StreamSocket | null = null;
  private closedByUs = false;

  constructor(
    private factory: SocketFactory,
    private handlers: StreamHandlers,
  ) {}

  connect(): void {
    this.closedByUs = false;
    this.open();
  }

  close(): void {
    this.closedByUs = true;
    this.socket?.close();
    this.socket = null;
  }

  private open(): void {
    const socket = this.factory(this.received.length);
    this.socket = socket;
    socket.onmessage = (message) => {
      const event = JSON.parse(message.data) as WireEvent;
      if (event.seq < this.received.length) return; // duplicate replay
      if (event.seq > this.received.length) {
        // Gap: drop this connection and resubscribe from the last good seq.
        socket.onclose = null;
        socket.close();
        this.reconnect();
        return;
      }
      this.received.push(event);
      this.handlers.onEvent(event);
      if (event.kind === 'session_ended') {
        this.ended = true;
        this.handlers.onEnded?.();
      }
    };
    socket.onclose = () => {
      if (this.ended || this.closedByUs) return;
      this.reconnect();
    };
  }

  private reconnect(): void {
    this.reconnects += 1;
    this.open();
  }
}
