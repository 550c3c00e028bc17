// Consistency findings sidebar. The rules engine stays server-side; the
// store polls /checks (debounced) after each change event and hands the
// findings here. Subjects link to the item detail pane.

import { el } from "../dom.js";
import type { WorkbenchStore } from "../store.js";
import type { Finding } from "../types.js";

export interface FindingsPanel {
  root: HTMLElement;
  render(findings: Finding[], rev: number): void;
}

export function createFindingsPanel(
  doc: Document,
  store: WorkbenchStore,
  onNavigate: (itemId: string) => void,
): FindingsPanel {
  const root = el(doc, "aside", "panel findings-panel");
  root.append(el(doc, "h2", "panel-title", "Findings"));
  const status = el(doc, "p", "findings-status", "No checks run yet.");
  const list = el(doc, "ul", "findings-list");
  root.append(status, list);

  function render(findings: Finding[], rev: number): void {
    list.replaceChildren();
    status.textContent =
      findings.length === 0
        ? `Clean at revision ${rev}.`
        : `${findings.length} finding(s) at revision ${rev}.`;
    for (const finding of findings) {
      const item = el(doc, "li", `finding severity-${finding.severity}`);
      item.append(el(doc, "span", "finding-rule", finding.rule));
      const subject = el(doc, "a", "finding-subject", finding.subject);
      subject.href = "#";
      subject.addEventListener("click", (event) => {
        event.preventDefault();
        onNavigate(finding.subject);
      });
      item.append(subject, el(doc, "span", "finding-message", finding.message));
      list.append(item);
    }
  }

  store.listen({ onFindings: render });
  return { root, render };
}
