// Server-Sent Events client over streaming fetch. fetch instead of
// EventSource so the parser is testable outside a browser and reconnects
// are under our control (resume from the last revision we actually saw).

import type { ChangeEventData } from "./types.js";

export interface SseFrame {
  event: string;
  id: number | null;
  data: string;
}

// Incremental frame parser; feed it decoded text in arbitrary chunks.
export class SseParser {
  private buffer = "";

  push(text: string): SseFrame[] {
    this.buffer += text;
    const frames: SseFrame[] = [];
    let split;
    while ((split = this.buffer.indexOf("\n\n")) >= 0) {
      const block = this.buffer.slice(0, split);
      this.buffer = this.buffer.slice(split + 2);
      const frame: SseFrame = { event: "message", id: null, data: "" };
      let sawField = false;
      for (const line of block.split("\n")) {
        if (line.startsWith(":")) continue; // comment (keepalive)
        const colon = line.indexOf(":");
        if (colon < 0) continue;
        const field = line.slice(0, colon);
        const value = line.slice(colon + 1).replace(/^ /, "");
        sawField = true;
        if (field === "event") frame.event = value;
        else if (field === "id") frame.id = Number(value);
        else if (field === "data") frame.data += (frame.data ? "\n" : "") + value;
      }
      if (sawField) frames.push(frame);
    }
    return frames;
  }
}

export type StreamStatus = "connecting" | "live" | "stale";

export interface StreamCallbacks {
  onChange: (event: ChangeEventData) => void;
  onStatus?: (status: StreamStatus) => void;
}

export class EventStreamClient {
  private readonly urlFor: (since: number) => string;
  private readonly callbacks: StreamCallbacks;
  private readonly fetchFn: typeof fetch;
  private readonly retryMs: number;
  private controller: AbortController | null = null;
  private running = false;
  lastRevision: number;

  constructor(
    urlFor: (since: number) => string,
    since: number,
    callbacks: StreamCallbacks,
    options?: { fetchFn?: typeof fetch; retryMs?: number },
  ) {
    this.urlFor = urlFor;
    this.lastRevision = since;
    this.callbacks = callbacks;
    this.fetchFn = options?.fetchFn ?? fetch;
    this.retryMs = options?.retryMs ?? 2000;
  }

  start(since?: number): void {
    if (this.running) return;
    if (since !== undefined) this.lastRevision = Math.max(this.lastRevision, since);
    this.running = true;
    void this.loop();
  }

  stop(): void {
    this.running = false;
    this.controller?.abort();
  }

  private status(value: StreamStatus): void {
    this.callbacks.onStatus?.(value);
  }

  private async loop(): Promise<void> {
    while (this.running) {
      this.status("connecting");
      this.controller = new AbortController();
      try {
        const response = await this.fetchFn(this.urlFor(this.lastRevision), {
          signal: this.controller.signal,
          headers: { Accept: "text/event-stream" },
        });
        if (!response.ok || !response.body) {
          await this.pause();
          continue;
        }
        this.status("live");
        const reader = response.body.getReader();
        const decoder = new TextDecoder();
        const parser = new SseParser();
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          for (const frame of parser.push(decoder.decode(value, { stream: true }))) {
            this.handle(frame);
          }
        }
      } catch {
        // aborted or transport failure; fall through to reconnect
      }
      if (!this.running) break;
      this.status("stale");
      await this.pause();
    }
  }

  private handle(frame: SseFrame): void {
    if (frame.event === "change") {
      const data = JSON.parse(frame.data) as ChangeEventData;
      if (data.revision > this.lastRevision) this.lastRevision = data.revision;
      this.callbacks.onChange(data);
      return;
    }
    if (frame.event === "dropped") {
      // Overflowed server queue: the stream is ending; resume from where the
      // server says delivery stopped.
      const data = JSON.parse(frame.data) as { resume_from: number };
      this.lastRevision = Math.max(this.lastRevision, data.resume_from);
      this.controller?.abort();
    }
  }

  private pause(): Promise<void> {
    return new Promise((resolve) => setTimeout(resolve, this.retryMs));
  }
}
