import type { GatewayClient } from './gateway.js';
import type { SessionStore } from './store.js';
import type { WireEvent } from './types.js';

export interface AgentOption {
  id: string;
  name: string;
}

function summarize(store: SessionStore, event: WireEvent): string {
  const p = event.payload;
  switch (event.kind) {
    case 'content_created':
    case 'script_released':
      return `${store.displayName(p.author_user_id as string)}: ${(p.body as string) ?? ''}`;
    case 'moderation_flagged':
      return `flagged ${p.item_id} (${p.label})`;
    case 'moderation_deleted':
      return `deleted ${p.item_id}`;
    case 'moderation_popup':
      return `popup → ${store.displayName((p.target_user_id as string) ?? '')}`;
    case 'user_banned':
      return `banned ${store.displayName(p.user_id as string)}`;
    case 'manual_trigger':
      return `manual trigger for ${p.agent_id}`;
    case 'agent_response_emitted':
      return `agent ${p.agent_id} responded`;
    case 'session_ended':
      return `session ended (${p.reason})`;
    default:
      return '';
  }
}

/**
 * Researcher operations view for one instance: live event tape,
 * participant roster, flag/ban counters, a manual-trigger form, and
 * force-stop / export controls. Everything goes through the gateway; the
 * console holds no authority of its own.
 */
export class ResearcherConsole {
  lastError: string | null = null;

  constructor(
    private gateway: GatewayClient,
    private store: SessionStore,
    private instanceId: string,
    private agents: AgentOption[],
  ) {}

  async trigger(agentId: string, promptText: string): Promise<void> {
    this.lastError = null;
    try {
      await this.gateway.manualTrigger(this.instanceId, agentId, promptText);
    } catch (error) {
      this.lastError = error instanceof Error ? error.message : String(error);
    }
  }

  async forceStop(): Promise<void> {
    this.lastError = null;
    try {
      await this.gateway.stop(this.instanceId);
    } catch (error) {
      this.lastError = error instanceof Error ? error.message : String(error);
    }
  }

  render(root: HTMLElement): void {
    const doc = root.ownerDocument;
    root.textContent = '';
    const panel = doc.createElement('section');
    panel.className = 'console';

    const counters = this.store.counters();
    const status = doc.createElement('div');
    status.className = 'status-bar';
    status.textContent =
      `${this.store.phase} · ${this.store.participantIds.length} participants · ` +
      `${counters.flags} flags · ${counters.bans} bans`;
    panel.append(status);

    const roster = doc.createElement('ul');
    roster.className = 'roster';
    for (const userId of this.store.participantIds) {
      const entry = doc.createElement('li');
      entry.className = 'roster-entry';
      entry.textContent = this.store.displayName(userId);
      roster.append(entry);
    }
    panel.append(roster);

    const tape = doc.createElement('ol');
    tape.className = 'tape';
    for (const event of this.store.events) {
      const line = doc.createElement('li');
      line.className = `tape-event kind-${event.kind}`;
      if (event.kind === 'content_created' || event.kind === 'script_released') {
        line.classList.add(`source-${(event.payload.source_role as string) ?? 'user'}`);
      }
      line.dataset.seq = String(event.seq);
      line.textContent = `${event.kind} ${summarize(this.store, event)}`.trim();
      tape.append(line);
    }
    panel.append(tape);

    panel.append(this.renderTriggerForm(doc));

    const controls = doc.createElement('div');
    controls.className = 'controls';
    const stopButton = doc.createElement('button');
    stopButton.className = 'force-stop';
    stopButton.textContent = 'Force stop';
    stopButton.addEventListener('click', () => void this.forceStop());
    controls.append(stopButton);
    const exportLink = doc.createElement('a');
    exportLink.className = 'export-link';
    exportLink.textContent = 'Export';
    exportLink.setAttribute('href', this.gateway.exportUrl(this.instanceId, 'json'));
    controls.append(exportLink);
    panel.append(controls);

    if (this.lastError) {
      const notice = doc.createElement('p');
      notice.className = 'error-notice';
      notice.textContent = this.lastError;
      panel.append(notice);
    }
    root.append(panel);
  }

  private renderTriggerForm(doc: Document): HTMLElement {
    const form = doc.createElement('form');
    form.className = 'manual-trigger';
    const select = doc.createElement('select');
    select.className = 'agent-select';
    for (const agent of this.agents) {
      const option = doc.createElement('option');
      option.value = agent.id;
      option.textContent = agent.name;
      select.append(option);
    }
    const prompt = doc.createElement('textarea');
    prompt.className = 'prompt-text';
    const submit = doc.createElement('button');
    submit.setAttribute('type', 'submit');
    submit.textContent = 'Trigger agent';
    form.append(select, prompt, submit);
    form.addEventListener('submit', (event) => {
      event.preventDefault();
      void this.trigger(select.value, prompt.value);
    });
    return form;
  }
}
