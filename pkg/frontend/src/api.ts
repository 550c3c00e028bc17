// Thin client over the wire API. Every displayed fact comes through here;
// there is no other channel to the model.

import type {
  ChecksResponse,
  EditResult,
  FmeaTreeProjection,
  GsnProjection,
  ItemPayload,
  LockInfo,
  Projections,
  SystemProjection,
  ViewEditRequest,
} from "./types.js";

export class WireError extends Error {
  readonly status: number;
  readonly code: string;
  readonly subject: string | null;
  readonly holder: string | null;

  constructor(status: number, body: Record<string, unknown>) {
    super(String(body.message ?? `HTTP ${status}`));
    this.status = status;
    this.code = String(body.code ?? "Error");
    this.subject = (body.subject as string | null) ?? null;
    this.holder = (body.holder as string | null) ?? null;
  }
}

type Fetch = typeof fetch;

export class ApiClient {
  readonly base: string;
  readonly session: string;
  private readonly token: string;
  private readonly fetchFn: Fetch;

  constructor(base: string, token: string, session: string, fetchFn?: Fetch) {
    this.base = base.replace(/\/$/, "");
    this.token = token;
    this.session = session;
    this.fetchFn = fetchFn ?? fetch;
  }

  eventsUrl(since: number): string {
    // EventSource cannot send headers, so the stream authenticates by query.
    return `${this.base}/events?since=${since}&token=${encodeURIComponent(this.token)}`;
  }

  private async request(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<Record<string, unknown>> {
    const response = await this.fetchFn(`${this.base}${path}`, {
      method,
      headers: {
        Authorization: `Bearer ${this.token}`,
        ...(body === undefined ? {} : { "Content-Type": "application/json" }),
      },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = (await response.json()) as Record<string, unknown>;
    if (!response.ok) throw new WireError(response.status, payload);
    return payload;
  }

  async head(): Promise<number> {
    const meta = await this.request("GET", "/meta");
    return meta.head as number;
  }

  async projection<T>(kind: string, rev?: number): Promise<T> {
    const at = rev === undefined ? "" : `?rev=${rev}`;
    return (await this.request("GET", `/projections/${kind}${at}`)) as T;
  }

  // The three panel projections, all pinned to one revision.
  async projectionsAt(rev: number): Promise<Projections> {
    const [system, fmeaTree, gsn] = await Promise.all([
      this.projection<SystemProjection>("system", rev),
      this.projection<FmeaTreeProjection>("fmea-tree", rev),
      this.projection<GsnProjection>("gsn", rev),
    ]);
    return { system, fmeaTree, gsn };
  }

  async checks(rev?: number): Promise<ChecksResponse> {
    const at = rev === undefined ? "" : `?rev=${rev}`;
    return (await this.request("GET", `/checks${at}`)) as unknown as ChecksResponse;
  }

  async item(id: string): Promise<ItemPayload> {
    return (await this.request("GET", `/items/${id}`)) as unknown as ItemPayload;
  }

  // Rejections are results, not exceptions: the server's verdict is data the
  // UI renders (lock holder, conformance message), so only transport-level
  // failures throw.
  async viewEdit(edit: ViewEditRequest, baseRev: number): Promise<EditResult> {
    try {
      const body = await this.request("POST", "/view-edits", {
        session: this.session,
        view: edit.view,
        verb: edit.verb,
        payload: edit.payload,
        base_rev: baseRev,
        client_op_id: `${this.session}-${crypto.randomUUID()}`,
      });
      return {
        ok: true,
        revision: body.revision as number,
        newHead: body.new_head as number,
      };
    } catch (error) {
      if (error instanceof WireError && error.status !== 401) {
        return {
          ok: false,
          code: error.code,
          message: error.message,
          subject: error.subject,
          holder: error.holder,
        };
      }
      throw error;
    }
  }

  async lock(itemId: string): Promise<LockInfo> {
    return (await this.request("POST", `/locks/${itemId}`, {
      session: this.session,
    })) as unknown as LockInfo;
  }

  async unlock(itemId: string): Promise<void> {
    await this.request("DELETE", `/locks/${itemId}`, { session: this.session });
  }
}
