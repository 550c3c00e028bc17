// System block diagram: nested part boxes with failure-mode badges, plus a
// palette to add parts and physical connections. Content renders only from
// the store's pinned projection; the palette posts edits and waits for the
// server's event like everyone else.

import { el, fillSelect, setInlineError } from "../dom.js";
import type { WorkbenchStore } from "../store.js";
import type { SystemPart, SystemProjection } from "../types.js";

export interface SystemPanel {
  root: HTMLElement;
  render(store: WorkbenchStore): void;
}

export function createSystemPanel(
  doc: Document,
  store: WorkbenchStore,
  onNavigate: (itemId: string) => void,
): SystemPanel {
  const root = el(doc, "section", "panel system-panel");
  root.append(el(doc, "h2", "panel-title", "System"));
  const canvas = el(doc, "div", "system-canvas");
  const connectionList = el(doc, "ul", "connection-list");
  root.append(canvas, connectionList);

  // Palette: new parts and physical connections. Lives outside the
  // re-rendered region so a form in progress survives refreshes.
  const palette = el(doc, "form", "palette system-palette");
  const partName = el(doc, "input");
  partName.placeholder = "new part name";
  partName.name = "part-name";
  const partUnder = el(doc, "select");
  partUnder.name = "part-under";
  const addPart = el(doc, "button", "", "Add part");
  addPart.type = "submit";
  const partError = el(doc, "span", "inline-error");
  palette.append(partName, partUnder, addPart, partError);

  const connectForm = el(doc, "form", "palette connect-palette");
  const connectSource = el(doc, "select");
  connectSource.name = "connect-source";
  const connectTarget = el(doc, "select");
  connectTarget.name = "connect-target";
  const addConnection = el(doc, "button", "", "Connect");
  addConnection.type = "submit";
  const connectError = el(doc, "span", "inline-error");
  connectForm.append(connectSource, connectTarget, addConnection, connectError);
  root.append(palette, connectForm);

  palette.addEventListener("submit", (event) => {
    event.preventDefault();
    setInlineError(partError, null);
    const name = partName.value.trim();
    if (!name) return;
    const payload: Record<string, unknown> = { name };
    if (partUnder.value) payload.under = partUnder.value;
    void store
      .submitEdit({ view: "system", verb: "add-node", payload })
      .then((result) => {
        if (result.ok) partName.value = "";
        else setInlineError(partError, result.message);
      });
  });

  connectForm.addEventListener("submit", (event) => {
    event.preventDefault();
    setInlineError(connectError, null);
    if (!connectSource.value || !connectTarget.value) return;
    void store
      .submitEdit({
        view: "system",
        verb: "add-edge",
        payload: {
          relation: "connection",
          source: connectSource.value,
          target: connectTarget.value,
        },
      })
      .then((result) => {
        if (!result.ok) setInlineError(connectError, result.message);
      });
  });

  function partBox(part: SystemPart): HTMLElement {
    const box = el(doc, "div", "part");
    box.dataset.id = part.id;
    const label = el(doc, "span", "part-name", part.name);
    label.addEventListener("click", () => onNavigate(part.id));
    box.append(label);
    const lock = store.locks.get(part.id);
    if (lock) {
      box.append(el(doc, "span", "lock-badge", `locked by ${lock.holder}`));
    }
    for (const badge of part.badges) {
      const chip = el(doc, "span", "badge failure-mode-badge", badge.name);
      chip.dataset.id = badge.id;
      chip.addEventListener("click", () => onNavigate(badge.id));
      box.append(chip);
    }
    for (const sub of part.subparts) box.append(partBox(sub));
    return box;
  }

  function flatten(parts: SystemPart[], out: [string, string][]): [string, string][] {
    for (const part of parts) {
      out.push([part.id, part.name]);
      flatten(part.subparts, out);
    }
    return out;
  }

  function render(current: WorkbenchStore): void {
    const projection: SystemProjection | undefined = current.projections?.system;
    canvas.replaceChildren();
    connectionList.replaceChildren();
    if (!projection) return;
    if (projection.parts.length === 0) {
      canvas.append(el(doc, "p", "empty-hint", "No parts yet. Add one below."));
    }
    for (const part of projection.parts) canvas.append(partBox(part));
    const names = flatten(projection.parts, []);
    const nameOf = new Map(names);
    for (const [source, target] of projection.connections) {
      const label = `${nameOf.get(source) ?? source} <-> ${nameOf.get(target) ?? target}`;
      connectionList.append(el(doc, "li", "connection", label));
    }
    fillSelect(doc, partUnder, names, "(top level)");
    fillSelect(doc, connectSource, names, "source part");
    fillSelect(doc, connectTarget, names, "target part");
  }

  return { root, render };
}
