// GSN argument graph: goals, strategies, and evidence laid out in layers.
// Evidence nodes list their cited analyses ("Fmea"); clicking a citation
// navigates to that analysis item's detail. Positions come from the layered
// layout plus any manual overrides the user dragged into local storage.

import { el } from "../dom.js";
import { applyOverrides, layoutGsn, loadOverrides } from "../layout.js";
import type { OverrideStorage } from "../layout.js";
import type { WorkbenchStore } from "../store.js";
import type { GsnNode } from "../types.js";

export interface GsnPanel {
  root: HTMLElement;
  render(store: WorkbenchStore): void;
}

export function createGsnPanel(
  doc: Document,
  store: WorkbenchStore,
  onNavigate: (itemId: string) => void,
  storage?: OverrideStorage,
): GsnPanel {
  const root = el(doc, "section", "panel gsn-panel");
  root.append(el(doc, "h2", "panel-title", "Safety case"));
  const canvas = el(doc, "div", "gsn-canvas");
  root.append(canvas);

  function nodeBox(node: GsnNode): HTMLElement {
    const box = el(doc, "div", `gsn-node gsn-${node.role}`);
    box.dataset.id = node.id;
    const label = el(doc, "span", "node-label", node.name);
    label.addEventListener("click", () => onNavigate(node.id));
    box.append(label);
    const lock = store.locks.get(node.id);
    if (lock) box.append(el(doc, "span", "lock-badge", `locked by ${lock.holder}`));
    if (node.role === "evidence") {
      const refs = el(doc, "span", "fmea-refs");
      refs.append(doc.createTextNode("Fmea: "));
      node.fmea.forEach((ref, index) => {
        if (index > 0) refs.append(doc.createTextNode(", "));
        const link = el(doc, "a", "fmea-ref", ref.name);
        link.dataset.id = ref.id;
        link.href = "#";
        link.addEventListener("click", (event) => {
          event.preventDefault();
          onNavigate(ref.id);
        });
        refs.append(link);
      });
      if (node.fmea.length === 0) refs.append(doc.createTextNode("(none cited)"));
      box.append(refs);
    }
    return box;
  }

  function render(current: WorkbenchStore): void {
    const projection = current.projections?.gsn;
    canvas.replaceChildren();
    if (!projection) return;
    if (projection.nodes.length === 0) {
      canvas.append(el(doc, "p", "empty-hint", "No argument yet."));
      return;
    }
    const layout = applyOverrides(
      layoutGsn(projection),
      storage ? loadOverrides(storage) : new Map(),
    );
    canvas.style.width = `${layout.width}px`;
    canvas.style.height = `${layout.height}px`;
    for (const node of projection.nodes) {
      const box = nodeBox(node);
      const point = layout.positions.get(node.id);
      if (point) {
        box.style.left = `${point.x}px`;
        box.style.top = `${point.y}px`;
      }
      canvas.append(box);
    }
    const edgeList = el(doc, "ul", "gsn-edges");
    for (const [relation, source, target] of projection.edges) {
      edgeList.append(el(doc, "li", "gsn-edge", `${source} ${relation} ${target}`));
    }
    canvas.append(edgeList);
  }

  return { root, render };
}
