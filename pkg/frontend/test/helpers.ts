import type { EventKindName, WireEvent } from '../src/types.js';

let seqCounter = 0;

export function resetSeq(): void {
  seqCounter = 0;
}

export function event(
  kind: EventKindName,
  payload: Record<string, unknown>,
  at = seqCounter * 1000,
): WireEvent {
  return { v: 1, seq: seqCounter++, at, kind, payload };
}

export function started(layout: string, participantIds: string[] = ['u1', 'u2']): WireEvent {
  return event('session_started', {
    template_id: 't1',
    layout,
    participant_ids: participantIds,
    ends_at: 600_000,
  });
}

export function post(
  id: string,
  author: string,
  body: string,
  extra: Record<string, unknown> = {},
): WireEvent {
  return event('content_created', {
    item_id: id,
    author_user_id: author,
    source_role: 'user',
    content_kind: 'post',
    parent_id: null,
    body,
    media: [],
    flair: null,
    chain_depth: 0,
    ...extra,
  });
}

export function comment(
  id: string,
  author: string,
  parent: string,
  body: string,
  extra: Record<string, unknown> = {},
): WireEvent {
  return post(id, author, body, { content_kind: 'comment', parent_id: parent, ...extra });
}

export function message(
  id: string,
  author: string,
  body: string,
  extra: Record<string, unknown> = {},
): WireEvent {
  return post(id, author, body, { content_kind: 'message', ...extra });
}
