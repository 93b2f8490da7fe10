import { beforeEach, describe, expect, it } from 'vitest';

import { ResearcherConsole } from '../src/console.js';
import { GatewayClient } from '../src/gateway.js';
import { SessionStore } from '../src/store.js';
import { ResumingStream, type StreamSocket } from '../src/stream.js';
import type { WireEvent } from '../src/types.js';
import { post, resetSeq, started } from './helpers.js';

/**
 * In-memory gateway: answers the REST calls the console makes and pushes
 * the resulting events down the live stream, mimicking the server's
 * manual-trigger flow (202 now, agent events on the tape shortly after).
 */
class FakeGateway {
  log: WireEvent[] = [];
  requests: Array<{ path: string; body: unknown }> = [];
  private sockets: StreamSocket[] = [];
  private cursors = new Map<StreamSocket, number>();

  fetchImpl = async (url: string, init?: RequestInit): Promise<Response> => {
    const path = new URL(url).pathname;
    const body = init?.body ? JSON.parse(init.body as string) : null;
    this.requests.push({ path, body });
    if (path.endsWith('/manual-trigger')) {
      this.queueAgentResponse(body.agent_id as string, body.prompt_text as string);
      return new Response(JSON.stringify({ status: 'queued' }), { status: 202 });
    }
    if (path.endsWith('/stop')) {
      this.push('session_ended', { reason: 'force_stop', outcomes: {} });
      return new Response(JSON.stringify({ status: 'stopped' }), { status: 200 });
    }
    return new Response(JSON.stringify({ error: 'NotFoundError', detail: path }), { status: 404 });
  };

  factory = (fromSeq: number): StreamSocket => {
    const socket: StreamSocket = { onmessage: null, onclose: null, close: () => {} };
    this.sockets.push(socket);
    this.cursors.set(socket, fromSeq);
    queueMicrotask(() => this.flush());
    return socket;
  };

  push(kind: WireEvent['kind'], payload: Record<string, unknown>): void {
    this.log.push({ v: 1, seq: this.log.length, at: this.log.length * 1000, kind, payload });
    this.flush();
  }

  private queueAgentResponse(agentId: string, promptText: string): void {
    this.push('manual_trigger', {
      agent_id: agentId,
      researcher_id: 'r1',
      prompt_text: promptText,
    });
    const itemId = `c-bot-${this.log.length}`;
    this.push('agent_response_emitted', {
      agent_id: agentId,
      item_id: itemId,
      trigger_seq: this.log.length - 1,
      chain_depth: 1,
    });
    this.push('content_created', {
      item_id: itemId,
      author_user_id: 'u-alex',
      source_role: 'bot',
      content_kind: 'post',
      parent_id: null,
      body: 'Here is a neutral summary of the thread so far.',
      media: [],
      flair: null,
      chain_depth: 1,
    });
  }

  private flush(): void {
    for (const socket of this.sockets) {
      let cursor = this.cursors.get(socket) ?? 0;
      while (cursor < this.log.length) {
        socket.onmessage?.({ data: JSON.stringify(this.log[cursor]) });
        cursor += 1;
      }
      this.cursors.set(socket, cursor);
    }
  }
}

async function settle(): Promise<void> {
  for (let i = 0; i < 50; i++) await Promise.resolve();
}

describe('researcher console', () => {
  beforeEach(() => {
    resetSeq();
    document.body.innerHTML = '';
  });

  function setup() {
    const server = new FakeGateway();
    for (const event of [started('reddit'), post('p1', 'u1', 'First post')]) {
      server.log.push(event);
    }
    const gateway = new GatewayClient('http://server.test', server.fetchImpl);
    gateway.token = 'tok';
    const store = new SessionStore('r1', { 'u-alex': 'Alex', u1: 'Ann', u2: 'Ben' });
    const stream = new ResumingStream(server.factory, { onEvent: (e) => store.apply(e) });
    stream.connect();
    const console_ = new ResearcherConsole(gateway, store, 'i1', [
      { id: 'a1', name: 'Alex' },
    ]);
    const root = document.createElement('div');
    document.body.append(root);
    return { server, store, console_, root };
  }

  it('manual trigger produces a visible bot message on the tape, end to end', async () => {
    const { server, store, console_, root } = setup();
    await settle();
    console_.render(root);
    expect(root.querySelectorAll('.tape-event.source-bot')).toHaveLength(0);

    // Fill the form and submit, as a researcher would.
    root.querySelector<HTMLSelectElement>('.agent-select')!.value = 'a1';
    root.querySelector<HTMLTextAreaElement>('.prompt-text')!.value = 'Summarize the thread.';
    root.querySelector('form.manual-trigger')!.dispatchEvent(new Event('submit'));
    await settle();

    expect(server.requests).toContainEqual({
      path: '/api/instances/i1/manual-trigger',
      body: { agent_id: 'a1', prompt_text: 'Summarize the thread.' },
    });
    console_.render(root);
    const botLine = root.querySelector('.tape-event.source-bot')!;
    expect(botLine.textContent).toContain('Alex: Here is a neutral summary');
    // The same item is in the content projection, so participant views see it too.
    expect(store.allItems().some((i) => i.body.includes('neutral summary'))).toBe(true);
  });

  it('shows roster, counters, and the live tape', async () => {
    const { console_, root } = setup();
    await settle();
    console_.render(root);
    expect([...root.querySelectorAll('.roster-entry')].map((n) => n.textContent)).toEqual([
      'Ann',
      'Ben',
    ]);
    expect(root.querySelector('.status-bar')!.textContent).toContain('running');
    expect(root.querySelectorAll('.tape-event').length).toBeGreaterThanOrEqual(2);
    expect(root.querySelector('.export-link')!.getAttribute('href')).toBe(
      'http://server.test/api/instances/i1/export?format=json',
    );
  });

  it('force stop ends the session on the tape and surfaces redirect state', async () => {
    const { console_, store, root } = setup();
    await settle();
    console_.render(root);
    root.querySelector<HTMLButtonElement>('.force-stop')!.dispatchEvent(
      new MouseEvent('click', { bubbles: true }),
    );
    await settle();
    expect(store.phase).toBe('ended');
    console_.render(root);
    expect(root.querySelector('.status-bar')!.textContent).toContain('ended');
  });

  it('surfaces gateway errors as a visible notice, never silently', async () => {
    const { console_, root } = setup();
    await settle();
    // Point at a path the fake server 404s.
    await console_.trigger('a1', '');
    console_.lastError = null; // manual trigger path exists; force an error via content()
    const gateway = new GatewayClient('http://server.test', async () =>
      new Response(JSON.stringify({ error: 'AuthorizationError', detail: 'researcher role required' }), {
        status: 403,
      }),
    );
    const store = new SessionStore('u9');
    const denied = new ResearcherConsole(gateway, store, 'i1', []);
    await denied.trigger('a1', 'hi');
    denied.render(root);
    expect(root.querySelector('.error-notice')!.textContent).toContain('researcher role required');
  });
});
