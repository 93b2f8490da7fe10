import { beforeEach, describe, expect, it } from 'vitest';

import { renderPopups } from '../src/render/popup.js';
import { SessionStore } from '../src/store.js';
import { message, resetSeq, started } from './helpers.js';
import type { WireEvent } from '../src/types.js';

function mount(): HTMLElement {
  const root = document.createElement('div');
  document.body.append(root);
  return root;
}

describe('moderation popups', () => {
  beforeEach(() => {
    resetSeq();
    document.body.innerHTML = '';
  });

  // Two clients of the same session: the server delivers the same seq to
  // both, but redacts the payload for everyone except the addressee.
  function twoViewers(): { addressee: SessionStore; bystander: SessionStore } {
    const base = [started('whatsapp'), message('m1', 'u1', 'total scam, wake up')];
    const popupSeq = base.length;
    const forAddressee: WireEvent = {
      v: 1,
      seq: popupSeq,
      at: 9000,
      kind: 'moderation_popup',
      payload: {
        rule_id: 'r1',
        item_id: 'm1',
        target_user_id: 'u1',
        message: 'Please keep the discussion civil.',
        ack_required: true,
      },
    };
    const forBystander: WireEvent = { ...forAddressee, payload: {} };
    const addressee = new SessionStore('u1');
    addressee.applyAll([...base, forAddressee]);
    const bystander = new SessionStore('u2');
    bystander.applyAll([...base, forBystander]);
    return { addressee, bystander };
  }

  it('renders a modal only for the addressee', () => {
    const { addressee, bystander } = twoViewers();
    const rootA = mount();
    const rootB = mount();
    renderPopups(rootA, addressee);
    renderPopups(rootB, bystander);
    expect(rootA.querySelectorAll('.moderation-popup')).toHaveLength(1);
    expect(rootA.querySelector('.modal-message')!.textContent).toBe(
      'Please keep the discussion civil.',
    );
    expect(rootB.querySelectorAll('.moderation-popup')).toHaveLength(0);
    // Both clients still saw the same number of events.
    expect(addressee.events).toHaveLength(bystander.events.length);
  });

  it('acknowledgement dismisses the modal and it stays dismissed', () => {
    const { addressee } = twoViewers();
    const root = mount();
    renderPopups(root, addressee);
    const button = root.querySelector<HTMLButtonElement>('.modal-ack')!;
    expect(button.textContent).toBe('I understand');
    button.dispatchEvent(new MouseEvent('click', { bubbles: true }));
    expect(root.querySelectorAll('.moderation-popup')).toHaveLength(0);
    renderPopups(root, addressee);
    expect(root.querySelectorAll('.moderation-popup')).toHaveLength(0);
  });

  it('does not target the viewer just because they are in the room', () => {
    const { bystander } = twoViewers();
    expect(bystander.popups).toHaveLength(0);
  });
});
