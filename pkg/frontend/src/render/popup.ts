import type { SessionStore } from '../store.js';

/**
 * Moderation popups as modal overlays. The store only collects popups
 * addressed to the viewer (other users' popups arrive with an empty
 * payload), so bystanders never get a modal for someone else's warning.
 */
export function renderPopups(root: HTMLElement, store: SessionStore): void {
  const doc = root.ownerDocument;
  root.querySelectorAll('.modal-overlay').forEach((node) => node.remove());
  const pending = store.popups.filter((popup) => !popup.acknowledged);
  for (const popup of pending) {
    const overlay = doc.createElement('div');
    overlay.className = 'modal-overlay';
    const modal = doc.createElement('div');
    modal.className = 'modal moderation-popup';
    modal.setAttribute('role', 'alertdialog');
    const message = doc.createElement('p');
    message.className = 'modal-message';
    message.textContent = popup.message;
    modal.append(message);
    const button = doc.createElement('button');
    button.className = 'modal-ack';
    button.textContent = popup.ackRequired ? 'I understand' : 'Dismiss';
    button.addEventListener('click', () => {
      popup.acknowledged = true;
      overlay.remove();
    });
    modal.append(button);
    overlay.append(modal);
    root.append(overlay);
  }
}
