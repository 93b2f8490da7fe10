import type { LayoutDescriptor } from '../layouts.js';
import { pickerEmoji } from '../layouts.js';
import type { SessionStore } from '../store.js';
import type { ItemView } from '../types.js';

export interface ChatCallbacks {
  onReact?: (itemId: string, emoji: string) => void;
}

const QUOTE_SNIPPET_LENGTH = 80;

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderBubble(
  doc: Document,
  store: SessionStore,
  layout: LayoutDescriptor,
  item: ItemView,
  callbacks: ChatCallbacks,
): HTMLElement {
  const mine = item.authorUserId === store.viewerId;
  const bubble = el(doc, 'div', `bubble ${mine ? 'mine' : 'theirs'}`);
  bubble.dataset.itemId = item.id;
  bubble.append(el(doc, 'span', 'sender', store.displayName(item.authorUserId)));

  if (layout.replyQuoting && item.parentId) {
    const parent = store.item(item.parentId);
    if (parent) {
      const snippet = parent.deleted
        ? '[removed by moderator]'
        : parent.body.slice(0, QUOTE_SNIPPET_LENGTH);
      const quote = el(doc, 'blockquote', 'reply-quote', snippet);
      quote.dataset.quotedId = parent.id;
      bubble.append(quote);
    }
  }

  if (item.deleted) {
    bubble.classList.add('removed');
    bubble.append(el(doc, 'p', 'body placeholder', '[removed by moderator]'));
    return bubble;
  }
  bubble.append(el(doc, 'p', 'body', item.body));
  for (const flag of item.flags) {
    bubble.append(el(doc, 'span', 'flag-label', flag.label));
  }

  const tallies = el(doc, 'div', 'reaction-tallies');
  for (const [emoji, count] of Object.entries(item.engagement.reactions)) {
    tallies.append(el(doc, 'span', 'reaction-tally', `${emoji} ${count}`));
  }
  bubble.append(tallies);

  if (layout.emojiReactions) {
    // The picker offers exactly the template's emoji set when one is
    // configured; the server rejects anything outside it anyway.
    const picker = el(doc, 'div', 'reaction-picker');
    for (const emoji of pickerEmoji(layout)) {
      const option = el(doc, 'button', 'reaction-option', emoji);
      option.addEventListener('click', () => callbacks.onReact?.(item.id, emoji));
      picker.append(option);
    }
    bubble.append(picker);
  }
  return bubble;
}

/**
 * Message list for the chat-kind skins: bubbles in arrival order,
 * reply-quoting of the parent snippet, emoji reactions restricted to the
 * template set, and the configured chat background.
 */
export function renderChat(
  root: HTMLElement,
  store: SessionStore,
  layout: LayoutDescriptor,
  callbacks: ChatCallbacks = {},
): void {
  const doc = root.ownerDocument;
  root.textContent = '';
  const pane = el(doc, 'section', `chat layout-${layout.id}`);
  if (layout.chatBackground) {
    pane.style.backgroundImage = `url(${layout.chatBackground})`;
  }
  for (const item of store.allItems()) {
    pane.append(renderBubble(doc, store, layout, item, callbacks));
  }
  root.append(pane);
}
