// Assembles the workbench: one store, one event-stream connection, three
// live panels plus findings and detail. Pure composition so tests can run
// it against any Document and fetch implementation.

import { ApiClient } from "./api.js";
import { el } from "./dom.js";
import type { OverrideStorage } from "./layout.js";
import { createDetailPanel } from "./panels/detail.js";
import { createFindingsPanel } from "./panels/findings.js";
import { createFmeaPanel } from "./panels/fmea.js";
import { createGsnPanel } from "./panels/gsn.js";
import { createSystemPanel } from "./panels/system.js";
import { EventStreamClient } from "./sse.js";
import { WorkbenchStore } from "./store.js";
import { createChrome } from "./ui.js";

export interface WorkbenchOptions {
  fetchFn?: typeof fetch;
  storage?: OverrideStorage;
  timers?: ConstructorParameters<typeof WorkbenchStore>[1];
  retryMs?: number;
}

export interface Workbench {
  root: HTMLElement;
  store: WorkbenchStore;
  stream: EventStreamClient;
  openDetail: (itemId: string) => Promise<void>;
  start(): Promise<void>;
  stop(): void;
}

export function createWorkbench(
  doc: Document,
  api: ApiClient,
  options: WorkbenchOptions = {},
): Workbench {
  const store = new WorkbenchStore(api, options.timers);
  const chrome = createChrome(doc, store);

  const detail = createDetailPanel(doc, store);
  const navigate = (itemId: string) => void detail.show(itemId);
  const system = createSystemPanel(doc, store, navigate);
  const fmea = createFmeaPanel(doc, store, navigate);
  const gsn = createGsnPanel(doc, store, navigate, options.storage);
  const findings = createFindingsPanel(doc, store, navigate);

  const status = el(doc, "span", "revision-indicator", "revision 0");

  // All three representations re-render together, pinned to one revision.
  store.listen({
    onRender: (current) => {
      system.render(current);
      fmea.render(current);
      gsn.render(current);
      status.textContent = `revision ${current.revision}`;
    },
  });

  const root = el(doc, "div", "workbench");
  const header = el(doc, "header", "workbench-header");
  header.append(el(doc, "h1", "", "Workbench"), status);
  root.append(chrome.banner, chrome.modal, header);
  const grid = el(doc, "div", "workbench-grid");
  grid.append(system.root, fmea.root, gsn.root, findings.root, detail.root);
  root.append(grid);

  // The single stream connection; panels never poll projections themselves.
  const stream = new EventStreamClient(
    (since) => api.eventsUrl(since),
    0,
    {
      onChange: (event) => store.handleEvent(event),
      onStatus: (s) => chrome.setStreamStatus(s, store),
    },
    { fetchFn: options.fetchFn, retryMs: options.retryMs },
  );

  return {
    root,
    store,
    stream,
    openDetail: (itemId) => detail.show(itemId),
    async start() {
      await store.load();
      stream.start(store.revision);
    },
    stop() {
      stream.stop();
      store.dispose();
    },
  };
}
