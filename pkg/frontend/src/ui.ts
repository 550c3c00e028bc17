// Session-level chrome: the lock modal (names the holder; the server made
// the call, we just render it) and the stale-revision banner shown while
// the event stream is down.

import { el } from "./dom.js";
import type { StreamStatus } from "./sse.js";
import type { WorkbenchStore } from "./store.js";

export interface Chrome {
  modal: HTMLElement;
  banner: HTMLElement;
  showLockModal(holder: string, subject: string | null): void;
  setStreamStatus(status: StreamStatus, store: WorkbenchStore): void;
}

export function createChrome(doc: Document, store: WorkbenchStore): Chrome {
  const banner = el(doc, "div", "stale-banner");
  banner.hidden = true;

  const modal = el(doc, "div", "lock-modal");
  modal.hidden = true;
  const message = el(doc, "p", "lock-modal-message");
  const dismiss = el(doc, "button", "", "OK");
  dismiss.type = "button";
  dismiss.addEventListener("click", () => {
    modal.hidden = true;
  });
  modal.append(message, dismiss);

  function showLockModal(holder: string, subject: string | null): void {
    const what = subject ? `${subject} is` : "This item is";
    message.textContent = `${what} locked by ${holder}. Your edit was not applied.`;
    modal.hidden = false;
  }

  function setStreamStatus(status: StreamStatus, current: WorkbenchStore): void {
    if (status === "live") {
      banner.hidden = true;
      banner.textContent = "";
      return;
    }
    banner.textContent =
      `Disconnected: showing revision ${current.revision}, which may be stale. Reconnecting.`;
    banner.hidden = false;
  }

  store.listen({
    onEditRejected: (result) => {
      if (result.code === "LockHeldByOther" && result.holder) {
        showLockModal(result.holder, result.subject);
      }
    },
  });

  return { modal, banner, showLockModal, setStreamStatus };
}
