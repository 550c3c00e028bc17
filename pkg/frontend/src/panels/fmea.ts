// FMEA tree: four visual tiers (element, failure mode, effect, detection),
// each tier tagged with its own class so the styling distinguishes them.
// Add affordances follow the tree's shape: failure modes under elements,
// effects and detection methods under failure modes.

import { el, setInlineError } from "../dom.js";
import type { WorkbenchStore } from "../store.js";
import type { FmeaTreeNode, ViewEditRequest } from "../types.js";

const TIER_CLASS: Record<number, string> = {
  1: "tier-element",
  2: "tier-failure-mode",
  3: "tier-effect",
  4: "tier-detection",
};

export interface FmeaPanel {
  root: HTMLElement;
  render(store: WorkbenchStore): void;
}

export function createFmeaPanel(
  doc: Document,
  store: WorkbenchStore,
  onNavigate: (itemId: string) => void,
): FmeaPanel {
  const root = el(doc, "section", "panel fmea-panel");
  root.append(el(doc, "h2", "panel-title", "FMEA"));
  const tree = el(doc, "ul", "fmea-tree");
  root.append(tree);

  function addForm(parent: FmeaTreeNode): HTMLElement {
    // Tier decides what may hang underneath; tier 2 offers the type choice.
    const form = el(doc, "form", "add-under");
    const name = el(doc, "input");
    name.placeholder = parent.tier === 1 ? "new failure mode" : "new child";
    let typeSelect: HTMLSelectElement | null = null;
    if (parent.tier === 2) {
      typeSelect = el(doc, "select");
      for (const [value, label] of [
        ["FailureEffect", "effect"],
        ["DetectionMethod", "detection"],
      ] as const) {
        const opt = doc.createElement("option");
        opt.value = value;
        opt.textContent = label;
        typeSelect.append(opt);
      }
      form.append(typeSelect);
    }
    const submit = el(doc, "button", "", "Add");
    submit.type = "submit";
    const error = el(doc, "span", "inline-error");
    form.append(name, submit, error);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      setInlineError(error, null);
      const value = name.value.trim();
      if (!value) return;
      const payload: Record<string, unknown> = { under: parent.id, name: value };
      if (typeSelect) payload.type = typeSelect.value;
      const edit: ViewEditRequest = { view: "fmea-tree", verb: "add-node", payload };
      void store.submitEdit(edit).then((result) => {
        if (result.ok) name.value = "";
        else setInlineError(error, result.message);
      });
    });
    return form;
  }

  function nodeItem(node: FmeaTreeNode): HTMLElement {
    const item = el(doc, "li", `fmea-node ${TIER_CLASS[node.tier] ?? ""}`);
    item.dataset.id = node.id;
    item.dataset.tier = String(node.tier);
    const label = el(doc, "span", "node-label", node.name);
    label.addEventListener("click", () => onNavigate(node.id));
    item.append(label, el(doc, "span", "node-role", node.role));
    const lock = store.locks.get(node.id);
    if (lock) item.append(el(doc, "span", "lock-badge", `locked by ${lock.holder}`));
    if (node.tier <= 2) item.append(addForm(node));
    if (node.children.length > 0) {
      const children = el(doc, "ul", "fmea-children");
      for (const child of node.children) children.append(nodeItem(child));
      item.append(children);
    }
    return item;
  }

  function render(current: WorkbenchStore): void {
    const projection = current.projections?.fmeaTree;
    tree.replaceChildren();
    if (!projection) return;
    if (projection.roots.length === 0) {
      tree.append(el(doc, "li", "empty-hint", "No analysed elements yet."));
    }
    for (const node of projection.roots) tree.append(nodeItem(node));
  }

  return { root, render };
}
