// Client-side view state. Invariants, enforced here and nowhere else:
//
// - No optimistic UI: panels advance only when a server ChangeEvent names a
//   new revision. Posting an edit never mutates displayed state.
// - The rendered revision never exceeds the server head; every refresh is
//   pinned to an event's revision, so all three panels always show the same
//   instant.
// - Pending edits are flushed before a revision advance is displayed: an
//   event arriving while our own POST is in flight waits for the POST.
// - Event handling is idempotent per revision: duplicates and replays of
//   already-rendered revisions are ignored.
//
// Displayed facts are exactly (projections at revision, pending edit count,
// lock knowledge); snapshot() serializes them so a rehydrated store can be
// compared field for field.

import type { ApiClient } from "./api.js";
import type {
  ChangeEventData,
  EditResult,
  Finding,
  Projections,
  ViewEditRequest,
} from "./types.js";

export interface LockBadge {
  holder: string;
  own: boolean;
}

export interface StoreListener {
  onRender?: (store: WorkbenchStore) => void;
  onFindings?: (findings: Finding[], rev: number) => void;
  onEditRejected?: (result: Extract<EditResult, { ok: false }>, edit: ViewEditRequest) => void;
}

interface Timers {
  set: (fn: () => void, ms: number) => unknown;
  clear: (handle: unknown) => void;
}

const FINDINGS_DEBOUNCE_MS = 500;

export class WorkbenchStore {
  readonly api: ApiClient;
  revision = 0;
  projections: Projections | null = null;
  findings: Finding[] = [];
  findingsRev = 0;
  // Item id -> badge; from our own acquisitions and from 423 rejections.
  readonly locks = new Map<string, LockBadge>();

  private listeners: StoreListener[] = [];
  private readonly timers: Timers;
  private pendingEdits = 0;
  private seenRevision = 0; // highest event revision observed (idempotency)
  private deferredRevision = 0; // event revision waiting on a pending edit
  private refreshing: Promise<void> = Promise.resolve();
  private findingsTimer: unknown = null;

  constructor(api: ApiClient, timers?: Timers) {
    this.api = api;
    this.timers = timers ?? {
      set: (fn, ms) => setTimeout(fn, ms),
      clear: (handle) => clearTimeout(handle as Parameters<typeof clearTimeout>[0]),
    };
  }

  listen(listener: StoreListener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  get pending(): number {
    return this.pendingEdits;
  }

  // Initial load: the one refresh not triggered by an event. Uses the head
  // the server reports, so the invariant (never beyond head) holds.
  async load(): Promise<void> {
    const head = await this.api.head();
    this.seenRevision = Math.max(this.seenRevision, head);
    await this.refreshTo(head);
  }

  handleEvent(event: ChangeEventData): void {
    if (event.revision <= this.seenRevision) return; // duplicate or replay
    this.seenRevision = event.revision;
    if (this.pendingEdits > 0) {
      // Our own POST is in flight; display nothing newer until it resolves.
      this.deferredRevision = Math.max(this.deferredRevision, event.revision);
      return;
    }
    this.queueRefresh(event.revision);
  }

  async submitEdit(edit: ViewEditRequest): Promise<EditResult> {
    this.pendingEdits += 1;
    try {
      const result = await this.api.viewEdit(edit, this.revision);
      if (!result.ok) {
        if (result.code === "LockHeldByOther" && result.subject && result.holder) {
          this.locks.set(result.subject, { holder: result.holder, own: false });
          this.notifyRender();
        }
        for (const l of this.listeners) l.onEditRejected?.(result, edit);
      }
      return result;
    } finally {
      this.pendingEdits -= 1;
      if (this.pendingEdits === 0 && this.deferredRevision > this.revision) {
        const target = this.deferredRevision;
        this.deferredRevision = 0;
        this.queueRefresh(target);
      }
    }
  }

  async acquireLock(itemId: string): Promise<LockBadge> {
    try {
      const info = await this.api.lock(itemId);
      const badge = { holder: info.holder, own: true };
      this.locks.set(itemId, badge);
      this.notifyRender();
      return badge;
    } catch (error) {
      const holder = (error as { holder?: string }).holder;
      if (holder) {
        const badge = { holder, own: false };
        this.locks.set(itemId, badge);
        this.notifyRender();
        return badge;
      }
      throw error;
    }
  }

  async releaseLock(itemId: string): Promise<void> {
    await this.api.unlock(itemId);
    this.locks.delete(itemId);
    this.notifyRender();
  }

  // Everything a panel may draw. Two stores with equal snapshots render
  // identical documents; the rehydrate-and-compare test holds us to it.
  snapshot(): string {
    return JSON.stringify({
      revision: this.revision,
      projections: this.projections,
      findings: this.findings,
      findingsRev: this.findingsRev,
      locks: [...this.locks.entries()].sort((a, b) => a[0].localeCompare(b[0])),
    });
  }

  whenIdle(): Promise<void> {
    return this.refreshing;
  }

  private queueRefresh(rev: number): void {
    // Serialize refreshes so an older fetch can never overwrite a newer one.
    this.refreshing = this.refreshing.then(() => this.refreshTo(rev));
  }

  private async refreshTo(rev: number): Promise<void> {
    if (rev <= this.revision && this.projections !== null) return;
    const projections = await this.api.projectionsAt(rev);
    this.projections = projections;
    this.revision = rev;
    this.notifyRender();
    this.scheduleFindings(rev);
  }

  // Panels are torn down with the page; the debounce timer is not. Cancel
  // it so nothing fires into a dead connection.
  dispose(): void {
    if (this.findingsTimer !== null) this.timers.clear(this.findingsTimer);
    this.findingsTimer = null;
  }

  // Findings stay server-computed; poll after each advance, debounced so a
  // burst of events costs one /checks call. A failed poll is dropped: the
  // next change event schedules another, and the stale banner already says
  // when the server is unreachable.
  private scheduleFindings(rev: number): void {
    if (this.findingsTimer !== null) this.timers.clear(this.findingsTimer);
    this.findingsTimer = this.timers.set(() => {
      this.findingsTimer = null;
      this.api
        .checks(rev)
        .then((response) => {
          if (response.rev < this.findingsRev) return;
          this.findings = response.findings;
          this.findingsRev = response.rev;
          for (const l of this.listeners) l.onFindings?.(this.findings, response.rev);
        })
        .catch(() => {});
    }, FINDINGS_DEBOUNCE_MS);
  }

  private notifyRender(): void {
    for (const l of this.listeners) l.onRender?.(this);
  }
}
