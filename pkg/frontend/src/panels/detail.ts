// Item detail pane: the navigation target for evidence citations, badges,
// and finding subjects. Fetched on demand from /items/{id}; offers rename
// plus advisory lock and release.

import { el, setInlineError } from "../dom.js";
import type { WorkbenchStore } from "../store.js";
import type { ItemPayload, ViewEditRequest } from "../types.js";

export interface DetailPanel {
  root: HTMLElement;
  show(itemId: string): Promise<void>;
  refresh(): Promise<void>;
}

function viewForType(type: string): ViewEditRequest["view"] {
  if (type.startsWith("Gsn")) return "gsn";
  if (["FailureMode", "FailureEffect", "DetectionMethod", "FhaEffect"].includes(type)) {
    return "fmea-tree";
  }
  return "system";
}

export function createDetailPanel(doc: Document, store: WorkbenchStore): DetailPanel {
  const root = el(doc, "aside", "panel detail-panel");
  root.append(el(doc, "h2", "panel-title", "Detail"));
  const body = el(doc, "div", "detail-body");
  body.append(el(doc, "p", "empty-hint", "Select an item."));
  root.append(body);

  let currentId: string | null = null;

  function linkRow(link: { relation: string; source: string; target: string }): HTMLElement {
    return el(doc, "li", "detail-link", `${link.source} ${link.relation} ${link.target}`);
  }

  function renderPayload(payload: ItemPayload): void {
    body.replaceChildren();
    const { item } = payload;
    body.append(el(doc, "h3", "detail-name", `${item.id} (${item.type})`));

    const renameForm = el(doc, "form", "rename-form");
    const nameInput = el(doc, "input");
    nameInput.value = String(item.attributes.name ?? "");
    const renameButton = el(doc, "button", "", "Rename");
    renameButton.type = "submit";
    const renameError = el(doc, "span", "inline-error");
    renameForm.append(nameInput, renameButton, renameError);
    renameForm.addEventListener("submit", (event) => {
      event.preventDefault();
      setInlineError(renameError, null);
      const name = nameInput.value.trim();
      if (!name || name === item.attributes.name) return;
      void store
        .submitEdit({
          view: viewForType(item.type),
          verb: "rename",
          payload: { id: item.id, name },
        })
        .then((result) => {
          if (!result.ok) setInlineError(renameError, result.message);
        });
    });
    body.append(renameForm);

    const lockRow = el(doc, "div", "lock-row");
    const badge = store.locks.get(item.id);
    if (badge) {
      lockRow.append(
        el(doc, "span", "lock-badge", badge.own ? "locked by you" : `locked by ${badge.holder}`),
      );
    }
    const lockButton = el(doc, "button", "", badge?.own ? "Release lock" : "Lock");
    lockButton.type = "button";
    lockButton.addEventListener("click", () => {
      const action = store.locks.get(item.id)?.own
        ? store.releaseLock(item.id)
        : store.acquireLock(item.id).then(() => undefined);
      void action.then(() => refresh());
    });
    lockRow.append(lockButton);
    body.append(lockRow);

    const attrs = el(doc, "dl", "detail-attrs");
    for (const [key, value] of Object.entries(item.attributes)) {
      attrs.append(el(doc, "dt", "", key));
      attrs.append(el(doc, "dd", "", Array.isArray(value) ? value.join(", ") : String(value)));
    }
    body.append(attrs);

    if (payload.outgoing.length + payload.incoming.length > 0) {
      const links = el(doc, "ul", "detail-links");
      for (const link of payload.outgoing) links.append(linkRow(link));
      for (const link of payload.incoming) links.append(linkRow(link));
      body.append(links);
    }
    body.append(
      el(doc, "p", "detail-revs", `created r${item.created_rev}, modified r${item.modified_rev}`),
    );
  }

  async function show(itemId: string): Promise<void> {
    currentId = itemId;
    renderPayload(await store.api.item(itemId));
  }

  async function refresh(): Promise<void> {
    if (currentId !== null) await show(currentId);
  }

  // The shown item may have changed in the revision just rendered.
  store.listen({ onRender: () => void refresh() });

  return { root, show, refresh };
}
