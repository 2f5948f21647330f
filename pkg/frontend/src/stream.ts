// Server-sent-events plumbing. The stream endpoint authenticates with a
// token header, which EventSource cannot send, so frames are read off a
// fetch body instead. LiveFeed reconnects with capped backoff until the
// server announces event_close or the app stops it; every (re)connection
// starts with a fresh snapshot frame the app uses to resync.

/** The one backend call the feed needs. */
export interface StreamSource {
  openStream(eventId: string): Promise<Response>;
}

export interface SseFrame {
  kind: string;
  data: unknown;
}

/** Incremental SSE parser: push chunks in, complete frames come out.
 * Comment lines (keepalive pings) are dropped. */
export class SseParser {
  private buffer = "";

  push(chunk: string): SseFrame[] {
    this.buffer += chunk.replace(/\r\n/g, "\n");
    const frames: SseFrame[] = [];
    let cut: number;
    while ((cut = this.buffer.indexOf("\n\n")) !== -1) {
      const raw = this.buffer.slice(0, cut);
      this.buffer = this.buffer.slice(cut + 2);
      const frame = this.parseFrame(raw);
      if (frame !== null) frames.push(frame);
    }
    return frames;
  }

  private parseFrame(raw: string): SseFrame | null {
    let kind = "message";
    const dataLines: string[] = [];
    for (const line of raw.split("\n")) {
      if (line.startsWith(":") || line === "") continue;
      if (line.startsWith("event:")) kind = line.slice(6).trim();
      else if (line.startsWith("data:")) dataLines.push(line.slice(5).trim());
    }
    if (dataLines.length === 0) return null;
    const text = dataLines.join("\n");
    let data: unknown;
    try {
      data = JSON.parse(text);
    } catch {
      data = text;
    }
    return { kind, data };
  }
}

export interface FeedHandlers {
  onFrame: (frame: SseFrame) => void;
  /** Called with true when (re)connected, false when the link drops. */
  onStatus?: (connected: boolean) => void;
}

const BACKOFF_START_MS = 1000;
const BACKOFF_CAP_MS = 8000;

export class LiveFeed {
  private stopped = false;
  private closedByServer = false;
  private retryMs: number;

  constructor(
    private readonly api: StreamSource,
    private readonly eventId: string,
    private readonly handlers: FeedHandlers,
    private readonly backoffStartMs = BACKOFF_START_MS,
  ) {
    this.retryMs = backoffStartMs;
  }

  get closed(): boolean {
    return this.closedByServer;
  }

  start(): void {
    void this.run();
  }

  stop(): void {
    this.stopped = true;
  }

  private async run(): Promise<void> {
    while (!this.stopped && !this.closedByServer) {
      try {
        const resp = await this.api.openStream(this.eventId);
        this.retryMs = this.backoffStartMs;
        this.handlers.onStatus?.(true);
        await this.consume(resp);
      } catch {
        // connection refused or dropped mid-read; fall through to retry
      }
      if (this.stopped || this.closedByServer) break;
      this.handlers.onStatus?.(false);
      await sleep(this.retryMs);
      this.retryMs = Math.min(this.retryMs * 2, BACKOFF_CAP_MS);
    }
  }

  private async consume(resp: Response): Promise<void> {
    const reader = resp.body!.getReader();
    const decoder = new TextDecoder();
    const parser = new SseParser();
    try {
      while (!this.stopped) {
        const { value, done } = await reader.read();
        if (done) break;
        for (const frame of parser.push(decoder.decode(value, { stream: true }))) {
          if (isEventClose(frame)) this.closedByServer = true;
          this.handlers.onFrame(frame);
        }
      }
    } finally {
      await reader.cancel().catch(() => undefined);
    }
  }
}

function isEventClose(frame: SseFrame): boolean {
  return frame.kind === "event_close";
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
