// Tiny DOM builders; panels stay readable without a framework.

export function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function option(doc: Document, value: string, label: string): HTMLOptionElement {
  const node = doc.createElement("option");
  node.value = value;
  node.textContent = label;
  return node;
}

// Repopulate a select while keeping the user's current choice when it still
// exists; re-render must not steal a half-filled form.
export function fillSelect(
  doc: Document,
  select: HTMLSelectElement,
  entries: [string, string][],
  placeholder?: string,
): void {
  const previous = select.value;
  select.replaceChildren();
  if (placeholder !== undefined) select.append(option(doc, "", placeholder));
  for (const [value, label] of entries) select.append(option(doc, value, label));
  if (previous && entries.some(([value]) => value === previous)) select.value = previous;
}

export function setInlineError(slot: HTMLElement, message: string | null): void {
  slot.textContent = message ?? "";
  slot.classList.toggle("visible", message !== null);
}
