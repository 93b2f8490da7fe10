import type { LayoutId } from './types.js';

/**
 * Which affordances a platform skin exposes. The gateway gates every
 * action server-side; this descriptor only decides what to draw, and is
 * derived from the `session_started` payload plus template visuals so the
 * client never invents affordances the server would reject.
 */
export interface LayoutDescriptor {
  id: LayoutId;
  kind: 'feed' | 'chat';
  votes: boolean;
  likes: boolean;
  emojiReactions: boolean;
  shares: boolean;
  flairs: boolean;
  nestedThreads: boolean;
  carousels: boolean;
  replyQuoting: boolean;
  /** Reaction picker contents; when unset, chat skins fall back to this default. */
  emojiSet: string[] | null;
  chatBackground: string | null;
}

export const DEFAULT_EMOJI_SET = ['👍', '❤️', '😂', '😮', '😢'];

const BASE: Record<LayoutId, Omit<LayoutDescriptor, 'emojiSet' | 'chatBackground'>> = {
  instagram: {
    id: 'instagram',
    kind: 'feed',
    votes: false,
    likes: true,
    emojiReactions: false,
    shares: false,
    flairs: false,
    nestedThreads: false,
    carousels: true,
    replyQuoting: false,
  },
  facebook: {
    id: 'facebook',
    kind: 'feed',
    votes: false,
    likes: true,
    emojiReactions: true,
    shares: true,
    flairs: false,
    nestedThreads: false,
    carousels: false,
    replyQuoting: false,
  },
  reddit: {
    id: 'reddit',
    kind: 'feed',
    votes: true,
    likes: false,
    emojiReactions: false,
    shares: false,
    flairs: true,
    nestedThreads: true,
    carousels: false,
    replyQuoting: false,
  },
  whatsapp: {
    id: 'whatsapp',
    kind: 'chat',
    votes: false,
    likes: false,
    emojiReactions: true,
    shares: false,
    flairs: false,
    nestedThreads: false,
    carousels: false,
    replyQuoting: true,
  },
  messenger: {
    id: 'messenger',
    kind: 'chat',
    votes: false,
    likes: false,
    emojiReactions: true,
    shares: false,
    flairs: false,
    nestedThreads: false,
    carousels: false,
    replyQuoting: true,
  },
};

export interface LayoutVisual {
  emojiSet?: string[] | null;
  chatBackground?: string | null;
}

export function describeLayout(layout: LayoutId, visual: LayoutVisual = {}): LayoutDescriptor {
  return {
    ...BASE[layout],
    emojiSet: visual.emojiSet ?? null,
    chatBackground: visual.chatBackground ?? null,
  };
}

/** The reaction symbols the picker offers for a chat layout. */
export function pickerEmoji(descriptor: LayoutDescriptor): string[] {
  if (descriptor.emojiSet && descriptor.emojiSet.length > 0) {
    return descriptor.emojiSet;
  }
  return DEFAULT_EMOJI_SET;
}
