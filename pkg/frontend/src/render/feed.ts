import type { LayoutDescriptor } from '../layouts.js';
import type { SessionStore } from '../store.js';
import type { ItemView } from '../types.js';

export interface FeedCallbacks {
  onReact?: (itemId: string, reaction: string) => void;
}

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

function renderItem(
  doc: Document,
  store: SessionStore,
  layout: LayoutDescriptor,
  item: ItemView,
  depth: number,
  callbacks: FeedCallbacks,
): HTMLElement {
  const article = el(doc, 'article', `item layout-${layout.id}`);
  article.dataset.itemId = item.id;
  article.dataset.depth = String(depth);
  article.style.marginLeft = `${depth * 16}px`;

  const header = el(doc, 'header', 'item-header');
  header.append(el(doc, 'span', 'author', store.displayName(item.authorUserId)));
  if (layout.flairs && item.flair) {
    header.append(el(doc, 'span', 'flair', item.flair));
  }
  article.append(header);

  if (item.deleted) {
    article.classList.add('removed');
    article.append(el(doc, 'p', 'body placeholder', '[removed by moderator]'));
  } else {
    article.append(el(doc, 'p', 'body', item.body));
    if (layout.carousels && item.media.length > 1) {
      const carousel = el(doc, 'div', 'carousel');
      for (const ref of item.media) {
        const img = el(doc, 'img', 'carousel-slide');
        img.setAttribute('src', ref);
        carousel.append(img);
      }
      article.append(carousel);
    }
    for (const flag of item.flags) {
      article.append(el(doc, 'span', 'flag-label', flag.label));
    }
    article.append(renderActions(doc, layout, item, callbacks));
  }

  if (layout.nestedThreads) {
    for (const child of item.children) {
      article.append(renderItem(doc, store, layout, child, depth + 1, callbacks));
    }
  }
  return article;
}

function renderActions(
  doc: Document,
  layout: LayoutDescriptor,
  item: ItemView,
  callbacks: FeedCallbacks,
): HTMLElement {
  const actions = el(doc, 'div', 'actions');
  const bind = (button: HTMLButtonElement, reaction: string) => {
    button.addEventListener('click', () => callbacks.onReact?.(item.id, reaction));
    actions.append(button);
  };
  if (layout.votes) {
    const up = el(doc, 'button', 'vote-up', '▲');
    up.setAttribute('aria-label', 'upvote');
    bind(up, 'upvote');
    actions.append(
      el(doc, 'span', 'score', String(item.engagement.upvotes - item.engagement.downvotes)),
    );
    const down = el(doc, 'button', 'vote-down', '▼');
    down.setAttribute('aria-label', 'downvote');
    bind(down, 'downvote');
  }
  if (layout.likes) {
    bind(el(doc, 'button', 'like', `♥ ${item.engagement.likes}`), 'like');
  }
  if (layout.shares) {
    bind(el(doc, 'button', 'share', `↗ ${item.engagement.shares}`), 'share');
  }
  return actions;
}

/**
 * Chronological feed for the feed-kind skins. Reddit nests comment
 * threads with one indentation step per depth and draws vote arrows and
 * flairs; Instagram shows likes and carousels; Facebook shows reactions
 * and shares. Soft-deleted items render as a placeholder, never the body.
 */
export function renderFeed(
  root: HTMLElement,
  store: SessionStore,
  layout: LayoutDescriptor,
  callbacks: FeedCallbacks = {},
): void {
  const doc = root.ownerDocument;
  root.textContent = '';
  const feed = el(doc, 'section', `feed layout-${layout.id}`);
  feed.setAttribute('role', 'feed');
  const roots = layout.nestedThreads
    ? store.threads()
    : store.allItems().filter((item) => item.parentId === null);
  for (const item of roots) {
    feed.append(renderItem(doc, store, layout, item, 0, callbacks));
    if (!layout.nestedThreads) {
      // Flat skins list comments under their root, single level.
      for (const child of item.children) {
        feed.append(renderItem(doc, store, layout, child, 1, callbacks));
      }
    }
  }
  root.append(feed);
}
