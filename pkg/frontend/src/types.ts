// Wire types mirroring docs/api.md. The server is the single source of
// truth; the client renders what it is sent and enforces nothing extra.

export type EventKindName =
  | 'participant_joined'
  | 'session_started'
  | 'content_created'
  | 'script_released'
  | 'reaction_changed'
  | 'moderation_flagged'
  | 'moderation_deleted'
  | 'moderation_popup'
  | 'user_banned'
  | 'agent_response_scheduled'
  | 'agent_response_emitted'
  | 'manual_trigger'
  | 'session_ended'
  | 'action_dropped';

export interface WireEvent {
  v: number;
  seq: number;
  at: number;
  kind: EventKindName;
  // Payloads are viewer-filtered server-side (e.g. another user's popup
  // arrives as {}), so every field read must tolerate absence.
  payload: Record<string, unknown>;
}

export type LayoutId = 'instagram' | 'facebook' | 'reddit' | 'whatsapp' | 'messenger';

export interface Engagement {
  likes: number;
  upvotes: number;
  downvotes: number;
  shares: number;
  reactions: Record<string, number>;
}

export interface FlagLabel {
  ruleId: string;
  label: string;
  at: number;
}

/** Client-side projection of one content item, built from the event stream. */
export interface ItemView {
  id: string;
  contentKind: 'post' | 'comment' | 'message';
  parentId: string | null;
  authorUserId: string;
  body: string;
  media: string[];
  flair: string | null;
  createdAt: number;
  deleted: boolean;
  flags: FlagLabel[];
  engagement: Engagement;
  children: ItemView[];
}

export interface PopupNotice {
  seq: number;
  message: string;
  ackRequired: boolean;
  acknowledged: boolean;
}

export interface LoginResponse {
  token: string;
  user_id: string;
  role: 'participant' | 'researcher' | 'agent_identity';
  expires_at: number;
}

export interface JoinResponse {
  status: 'waiting' | 'started' | 'rejected';
  position: number | null;
  instance_id: string | null;
  reason: string | null;
}

export function emptyEngagement(): Engagement {
  return { likes: 0, upvotes: 0, downvotes: 0, shares: 0, reactions: {} };
}
