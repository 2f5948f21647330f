// Application shell: wires the API client, the live event feed, and the
// session store to the DOM. All mutations go through POST order; the
// UI re-reads a server snapshot whenever one of its orders resolves.

import { ApiClient, ApiError } from "./api.js";
import type {
  Action,
  EventSummary,
  RejectionRecord,
  Side,
  TradeRecord,
  TradingApi,
} from "./api.js";
import { LiveFeed, type SseFrame } from "./stream.js";
import { SessionState } from "./state.js";
import { renderLogin, renderSession } from "./view.js";

export interface AppOptions {
  api?: TradingApi;
  /** Where claim full texts live; cards link to claimsBase + claim_id. */
  claimsBase?: string;
  /** Initial reconnect delay, exposed so tests can keep it short. */
  backoffStartMs?: number;
}

export class App {
  readonly api: TradingApi;
  readonly state = new SessionState();
  private readonly claimsBase: string;
  private readonly backoffStartMs: number;
  private feed: LiveFeed | null = null;
  private phase: "login" | "session" = "login";
  private loginError = "";
  private loginBusy = false;
  private renderQueued = false;
  private firstSnapshot = true;

  constructor(
    private readonly root: HTMLElement,
    options: AppOptions = {},
  ) {
    this.api = options.api ?? new ApiClient();
    this.claimsBase = options.claimsBase ?? "claims/";
    this.backoffStartMs = options.backoffStartMs ?? 1000;
    this.state.subscribe(() => this.scheduleRender());
    this.root.addEventListener("click", (ev) => this.onClick(ev));
    this.root.addEventListener("submit", (ev) => this.onSubmit(ev));
    this.root.addEventListener("change", (ev) => this.onChange(ev));
  }

  mount(): void {
    this.render();
  }

  dispose(): void {
    this.feed?.stop();
  }

  // ---------------------------------------------------------------- //
  // user intents

  async login(token: string): Promise<void> {
    this.loginBusy = true;
    this.loginError = "";
    this.render();
    try {
      const reply = await this.api.login(token);
      this.state.initFromLogin(reply);
      await this.refreshMarkets();
      await Promise.all(reply.markets.map((mid) => this.backfillTrades(mid, 0)));
      this.phase = "session";
      this.feed = new LiveFeed(
        this.api,
        reply.event_id,
        {
          onFrame: (frame) => this.onFrame(frame),
          onStatus: (connected) => {
            this.state.connected = connected;
            this.scheduleRender();
          },
        },
        this.backoffStartMs,
      );
      this.feed.start();
    } catch (err) {
      this.loginError = err instanceof ApiError ? err.detail : String(err);
    } finally {
      this.loginBusy = false;
      this.render();
    }
  }

  async placeOrder(marketId: string, side: Side, action: Action): Promise<void> {
    const market = this.state.market(marketId);
    market.error = "";
    try {
      const reply = await this.api.placeOrder(marketId, side, action);
      this.state.addOrder(marketId, side, action, reply.order_id, reply.position);
    } catch (err) {
      market.error = err instanceof ApiError ? err.detail : String(err);
    }
    this.render();
  }

  // ---------------------------------------------------------------- //
  // live feed

  private onFrame(frame: SseFrame): void {
    const data = frame.data as Record<string, unknown>;
    switch (frame.kind) {
      case "snapshot": {
        this.state.applyEventSummary(frame.data as EventSummary);
        if (!this.firstSnapshot) void this.resync();
        this.firstSnapshot = false;
        break;
      }
      case "event_open":
        this.state.eventStatus = "open";
        break;
      case "trade": {
        const record = frame.data as TradeRecord;
        this.state.applyTrade(record);
        if (record.kind === "human" && record.trader === this.state.participant) {
          void this.refreshSnapshot(record.market_id);
        }
        break;
      }
      case "rejection": {
        const record = frame.data as RejectionRecord;
        this.state.applyRejection(record);
        if (record.trader === this.state.participant) {
          void this.refreshSnapshot(record.market_id);
        }
        break;
      }
      case "checkpoint":
      case "tick_skip":
        this.state.applyTick(String(data.market_id), Number(data.tick));
        break;
      case "market_close":
        this.state.applyMarketClose(
          String(data.market_id),
          Number(data.tick),
          Number(data.closing_price),
        );
        break;
      case "settle":
        this.state.applySettle(String(data.market_id), data.winner as Side);
        break;
      case "event_close":
        this.state.applyEventClose(String(data.status));
        void this.resync();
        break;
      default:
        break;
    }
    this.scheduleRender();
  }

  /** Snapshot resync after a reconnect or close: re-read authoritative
   * balances and backfill any trades missed while disconnected. */
  private async resync(): Promise<void> {
    await this.refreshMarkets();
    await Promise.all(
      [...this.state.markets.keys()].map((mid) =>
        this.backfillTrades(mid, this.state.lastSeenTick(mid)),
      ),
    );
    this.scheduleRender();
  }

  private async refreshMarkets(): Promise<void> {
    const summaries = await this.api.eventMarkets(this.state.eventId);
    for (const summary of summaries) {
      if ("price" in summary) this.state.applySummary(summary);
    }
    await Promise.all(
      [...this.state.markets.keys()].map((mid) => this.refreshSnapshot(mid)),
    );
  }

  private async refreshSnapshot(marketId: string): Promise<void> {
    try {
      this.state.applySnapshot(await this.api.snapshot(marketId));
    } catch {
      // market not open yet; the next stream record will catch us up
    }
    this.scheduleRender();
  }

  private async backfillTrades(marketId: string, since: number): Promise<void> {
    try {
      const reply = await this.api.trades(marketId, since);
      this.state.mergeTrades(marketId, reply.trades);
    } catch {
      // scheduled market: no trades yet
    }
  }

  // ---------------------------------------------------------------- //
  // DOM events

  private onSubmit(ev: Event): void {
    const form = ev.target as HTMLElement;
    if (!form.classList.contains("login-form")) return;
    ev.preventDefault();
    const input = form.querySelector<HTMLInputElement>("input[name=token]");
    const token = input?.value.trim() ?? "";
    if (token) void this.login(token);
  }

  private onClick(ev: Event): void {
    const target = ev.target as HTMLElement;
    const button = target.closest<HTMLButtonElement>("button[data-market]");
    if (button === null || button.disabled) return;
    const marketId = button.dataset.market!;
    const side = button.dataset.side as Side;
    const action = button.dataset.action as Action;
    void this.placeOrder(marketId, side, action);
  }

  private onChange(ev: Event): void {
    const target = ev.target as HTMLInputElement;
    if (target.dataset.toggle !== "cents") return;
    this.state.showCents = target.checked;
    this.render();
  }

  // ---------------------------------------------------------------- //
  // rendering

  private scheduleRender(): void {
    if (this.renderQueued) return;
    this.renderQueued = true;
    setTimeout(() => {
      this.renderQueued = false;
      this.render();
    }, 0);
  }

  render(): void {
    if (this.phase === "login") {
      renderLogin(this.root, this.loginError, this.loginBusy);
    } else {
      renderSession(this.root, this.state, this.claimsBase);
    }
  }
}
