import { beforeEach, describe, expect, it } from 'vitest';

import { describeLayout } from '../src/layouts.js';
import { renderFeed } from '../src/render/feed.js';
import { SessionStore } from '../src/store.js';
import { comment, event, post, resetSeq, started } from './helpers.js';

function mount(): HTMLElement {
  const root = document.createElement('div');
  document.body.append(root);
  return root;
}

describe('reddit skin', () => {
  beforeEach(() => {
    resetSeq();
    document.body.innerHTML = '';
  });

  function threadStore(): SessionStore {
    const store = new SessionStore('u1', { u1: 'Ann', u2: 'Ben' });
    store.applyAll([
      started('reddit'),
      post('p1', 'u2', 'Budget memo dropped today', { flair: 'News' }),
      comment('c1', 'u1', 'p1', 'Finally some numbers'),
      comment('c2', 'u2', 'c1', 'Page 12 is the interesting part'),
      comment('c3', 'u1', 'c2', 'Good catch'),
    ]);
    return store;
  }

  it('renders nested threads to depth 3 with one indent step per level', () => {
    const root = mount();
    renderFeed(root, threadStore(), describeLayout('reddit'));
    const depths = [...root.querySelectorAll<HTMLElement>('.item')].map(
      (node) => node.dataset.depth,
    );
    expect(depths).toEqual(['0', '1', '2', '3']);
    const deepest = root.querySelector<HTMLElement>('[data-item-id="c3"]')!;
    expect(deepest.dataset.depth).toBe('3');
    expect(deepest.style.marginLeft).toBe('48px');
    // c3 really is nested inside c2 inside c1 inside p1.
    expect(deepest.closest('[data-item-id="c2"]')).not.toBeNull();
    expect(deepest.closest('[data-item-id="p1"]')).not.toBeNull();
  });

  it('draws vote arrows with a score on every item', () => {
    const root = mount();
    const store = threadStore();
    store.apply(event('reaction_changed', { item_id: 'p1', user_id: 'u1', reaction: 'upvote', active: true }));
    renderFeed(root, store, describeLayout('reddit'));
    expect(root.querySelectorAll('.vote-up')).toHaveLength(4);
    expect(root.querySelectorAll('.vote-down')).toHaveLength(4);
    const rootItem = root.querySelector('[data-item-id="p1"]')!;
    expect(rootItem.querySelector('.score')!.textContent).toBe('1');
  });

  it('renders flairs and flag labels', () => {
    const root = mount();
    const store = threadStore();
    store.apply(
      event('moderation_flagged', { rule_id: 'r1', item_id: 'c1', label: 'disputed' }),
    );
    renderFeed(root, store, describeLayout('reddit'));
    expect(root.querySelector('[data-item-id="p1"] .flair')!.textContent).toBe('News');
    expect(root.querySelector('[data-item-id="c1"] .flag-label')!.textContent).toBe('disputed');
  });

  it('replaces deleted items with a placeholder, never the body', () => {
    const root = mount();
    const store = threadStore();
    store.apply(event('moderation_deleted', { rule_id: 'r1', item_id: 'c2' }));
    renderFeed(root, store, describeLayout('reddit'));
    const removed = root.querySelector('[data-item-id="c2"]')!;
    expect(removed.classList.contains('removed')).toBe(true);
    expect(removed.querySelector('.placeholder')!.textContent).toBe('[removed by moderator]');
    expect(root.textContent).not.toContain('Page 12 is the interesting part');
    // Children of a removed item stay visible.
    expect(removed.querySelector('[data-item-id="c3"]')).not.toBeNull();
  });

  it('wires vote arrows to the reaction callback', () => {
    const root = mount();
    const calls: Array<[string, string]> = [];
    renderFeed(root, threadStore(), describeLayout('reddit'), {
      onReact: (itemId, reaction) => calls.push([itemId, reaction]),
    });
    root
      .querySelector<HTMLButtonElement>('[data-item-id="p1"] .vote-up')!
      .dispatchEvent(new MouseEvent('click', { bubbles: true }));
    expect(calls).toEqual([['p1', 'upvote']]);
  });
});

describe('other feed skins', () => {
  beforeEach(() => {
    resetSeq();
    document.body.innerHTML = '';
  });

  it('instagram shows likes and carousels but no votes or flairs', () => {
    const store = new SessionStore('u1');
    store.applyAll([
      started('instagram'),
      post('p1', 'u2', 'Sunset', { media: ['a.jpg', 'b.jpg'], flair: 'News' }),
    ]);
    const root = mount();
    renderFeed(root, store, describeLayout('instagram'));
    expect(root.querySelector('.like')).not.toBeNull();
    expect(root.querySelectorAll('.carousel-slide')).toHaveLength(2);
    expect(root.querySelector('.vote-up')).toBeNull();
    expect(root.querySelector('.flair')).toBeNull();
  });

  it('facebook shows shares', () => {
    const store = new SessionStore('u1');
    store.applyAll([started('facebook'), post('p1', 'u2', 'Hello')]);
    const root = mount();
    renderFeed(root, store, describeLayout('facebook'));
    expect(root.querySelector('.share')).not.toBeNull();
    expect(root.querySelector('.vote-up')).toBeNull();
  });
});
