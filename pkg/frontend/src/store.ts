import type {
  Engagement,
  EventKindName,
  ItemView,
  LayoutId,
  PopupNotice,
  WireEvent,
} from './types.js';
import { emptyEngagement } from './types.js';

export type SessionPhase = 'waiting' | 'running' | 'ended';

/**
 * Event-sourced client state for one session. Feed content, engagement
 * counters, flags, deletions, popups, and the lifecycle are all pure
 * projections of the ordered WireEvent stream, so a reconnect that
 * replays the log reconstructs exactly the same view.
 */
export class SessionStore {
  readonly viewerId: string;
  phase: SessionPhase = 'waiting';
  layout: LayoutId | null = null;
  endsAt: number | null = null;
  endReason: string | null = null;
  redirectUrl: string | null = null;
  participantIds: string[] = [];
  popups: PopupNotice[] = [];
  events: WireEvent[] = [];

  private items = new Map<string, ItemView>();
  private order: string[] = [];
  private names = new Map<string, string>();

  constructor(viewerId: string, displayNames?: Record<string, string>) {
    this.viewerId = viewerId;
    for (const [id, name] of Object.entries(displayNames ?? {})) {
      this.names.set(id, name);
    }
  }

  displayName(userId: string): string {
    return this.names.get(userId) ?? userId;
  }

  setDisplayName(userId: string, name: string): void {
    this.names.set(userId, name);
  }

  item(id: string): ItemView | undefined {
    return this.items.get(id);
  }

  /** All items in arrival order (chronological; the server log is ordered). */
  allItems(): ItemView[] {
    return this.order.map((id) => this.items.get(id)!);
  }

  /** Root items with children nested, for threaded rendering. */
  threads(): ItemView[] {
    return this.allItems().filter((item) => item.parentId === null);
  }

  counters(): { flags: number; bans: number } {
    let flags = 0;
    let bans = 0;
    for (const event of this.events) {
      if (event.kind === 'moderation_flagged') flags += 1;
      if (event.kind === 'user_banned') bans += 1;
    }
    return { flags, bans };
  }

  apply(event: WireEvent): void {
    this.events.push(event);
    const handler = this.handlers[event.kind];
    if (handler) handler(event.payload, event);
  }

  applyAll(events: Iterable<WireEvent>): void {
    for (const event of events) this.apply(event);
  }

  private handlers: Partial<
    Record<EventKindName, (payload: Record<string, unknown>, event: WireEvent) => void>
  > = {
    session_started: (payload) => {
      this.phase = 'running';
      this.layout = (payload.layout as LayoutId) ?? null;
      this.endsAt = (payload.ends_at as number) ?? null;
      this.participantIds = (payload.participant_ids as string[]) ?? [];
    },
    content_created: (payload, event) => this.addItem(payload, event),
    script_released: (payload, event) => {
      this.addItem(payload, event, payload.initial_engagement as Partial<Engagement> | undefined);
    },
    reaction_changed: (payload) => {
      const item = this.items.get(payload.item_id as string);
      if (!item) return;
      const reaction = payload.reaction as string;
      const delta = payload.active ? 1 : -1;
      if (reaction === 'like') item.engagement.likes += delta;
      else if (reaction === 'upvote') item.engagement.upvotes += delta;
      else if (reaction === 'downvote') item.engagement.downvotes += delta;
      else if (reaction === 'share') item.engagement.shares += delta;
      else {
        const next = (item.engagement.reactions[reaction] ?? 0) + delta;
        if (next <= 0) delete item.engagement.reactions[reaction];
        else item.engagement.reactions[reaction] = next;
      }
    },
    moderation_flagged: (payload, event) => {
      const item = this.items.get(payload.item_id as string);
      if (!item) return;
      item.flags.push({
        ruleId: payload.rule_id as string,
        label: (payload.label as string) ?? '',
        at: event.at,
      });
    },
    moderation_deleted: (payload) => {
      const item = this.items.get(payload.item_id as string);
      if (!item) return;
      item.deleted = true;
      item.body = '';
    },
    moderation_popup: (payload, event) => {
      // Non-addressees receive the seq with an empty payload; only a
      // payload targeting the viewer produces a modal.
      if (payload.target_user_id !== this.viewerId) return;
      this.popups.push({
        seq: event.seq,
        message: (payload.message as string) ?? '',
        ackRequired: Boolean(payload.ack_required),
        acknowledged: false,
      });
    },
    session_ended: (payload) => {
      this.phase = 'ended';
      this.endReason = (payload.reason as string) ?? null;
      const outcomes = (payload.outcomes as Record<string, string>) ?? {};
      this.redirectUrl = outcomes[this.viewerId] || null;
    },
  };

  private addItem(
    payload: Record<string, unknown>,
    event: WireEvent,
    initial?: Partial<Engagement>,
  ): void {
    const id = payload.item_id as string;
    if (this.items.has(id)) return;
    const engagement = emptyEngagement();
    if (initial) {
      engagement.likes = initial.likes ?? 0;
      engagement.upvotes = initial.upvotes ?? 0;
      engagement.downvotes = initial.downvotes ?? 0;
      engagement.shares = initial.shares ?? 0;
      engagement.reactions = { ...(initial.reactions ?? {}) };
    }
    const item: ItemView = {
      id,
      contentKind: (payload.content_kind as ItemView['contentKind']) ?? 'post',
      parentId: (payload.parent_id as string | null) ?? null,
      authorUserId: (payload.author_user_id as string) ?? '',
      body: payload.deleted ? '' : ((payload.body as string) ?? ''),
      media: (payload.media as string[]) ?? [],
      flair: (payload.flair as string | null) ?? null,
      createdAt: event.at,
      deleted: Boolean(payload.deleted),
      flags: [],
      engagement,
      children: [],
    };
    this.items.set(id, item);
    this.order.push(id);
    if (item.parentId) {
      this.items.get(item.parentId)?.children.push(item);
    }
  }
}
