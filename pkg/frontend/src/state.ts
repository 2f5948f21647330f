// Client session store. The server is the single source of truth: this
// store only arranges snapshots and stream records for rendering. Cash
// and holdings are overwritten by snapshots, never computed locally.

import type {
  Action,
  EventSummary,
  LoginReply,
  MarketSnapshot,
  MarketSummary,
  RejectionRecord,
  Side,
  TradeRecord,
} from "./api.js";

export type OrderState = "queued" | "executed" | "rejected";

export interface OrderChip {
  orderId: string;
  marketId: string;
  side: Side;
  action: Action;
  state: OrderState;
  position: number;
  submitTick: number;
  resolveTick?: number;
  priceAfter?: number;
  reason?: string;
}

export interface PricePoint {
  tick: number;
  price: number;
}

export interface MarketState {
  marketId: string;
  claimId: string;
  status: string;
  price: number;
  tick: number;
  ticksTotal: number;
  tradeCount: number;
  winner: Side | null;
  cash: number;
  holdings: { yes: number; no: number };
  myTrades: number;
  history: PricePoint[];
  feed: TradeRecord[];
  error: string;
}

const FEED_LIMIT = 8;

export class SessionState {
  participant = "";
  eventId = "";
  eventStatus = "";
  mode = "";
  tick = 0;
  ticks = 0;
  tickInterval = 0;
  outcomes: Record<string, string> | null = null;
  connected = false;
  showCents = false;
  markets = new Map<string, MarketState>();
  orders: OrderChip[] = [];

  private seen = new Map<string, Set<string>>();
  private listeners: Array<() => void> = [];

  subscribe(listener: () => void): void {
    this.listeners.push(listener);
  }

  notify(): void {
    for (const listener of this.listeners) listener();
  }

  get tradingOpen(): boolean {
    return this.eventStatus === "open";
  }

  market(marketId: string): MarketState {
    const state = this.markets.get(marketId);
    if (state === undefined) throw new Error(`unknown market ${marketId}`);
    return state;
  }

  myOrders(marketId: string): OrderChip[] {
    return this.orders.filter((o) => o.marketId === marketId);
  }

  // ---------------------------------------------------------------- //
  // server data ingestion

  initFromLogin(reply: LoginReply): void {
    this.participant = reply.participant;
    this.eventId = reply.event_id;
    this.eventStatus = reply.event_status;
    for (const marketId of reply.markets) {
      this.markets.set(marketId, {
        marketId,
        claimId: marketId.split(":").pop() ?? marketId,
        status: "scheduled",
        price: 0.5,
        tick: 0,
        ticksTotal: 0,
        tradeCount: 0,
        winner: null,
        cash: reply.cash[marketId] ?? 0,
        holdings: { yes: 0, no: 0 },
        myTrades: 0,
        history: [],
        feed: [],
        error: "",
      });
      this.seen.set(marketId, new Set());
    }
  }

  applySummary(summary: MarketSummary): void {
    const m = this.markets.get(summary.market_id);
    if (m === undefined) return;
    m.claimId = summary.claim_id ?? m.claimId;
    m.status = summary.status ?? m.status;
    if (typeof summary.price === "number") {
      m.price = summary.price;
      this.recordPrice(m, summary.tick ?? m.tick, summary.price);
    }
    if (typeof summary.tick === "number") m.tick = summary.tick;
    if (typeof summary.ticks_total === "number") m.ticksTotal = summary.ticks_total;
    if (typeof summary.trade_count === "number") m.tradeCount = summary.trade_count;
    if (summary.winner !== undefined) m.winner = summary.winner;
  }

  applySnapshot(snap: MarketSnapshot): void {
    this.applySummary(snap);
    const m = this.markets.get(snap.market_id);
    if (m === undefined) return;
    m.cash = snap.cash;
    m.holdings = { ...snap.holdings };
    m.myTrades = snap.trades;
  }

  applyEventSummary(summary: EventSummary): void {
    this.eventStatus = summary.status;
    this.mode = summary.mode;
    this.tick = summary.tick;
    this.ticks = summary.ticks;
    this.tickInterval = summary.tick_interval;
    if (summary.outcomes) this.outcomes = summary.outcomes;
    for (const entry of summary.markets) {
      if ("price" in entry) this.applySummary(entry);
    }
  }

  /** Merge a trades listing (login seed or post-reconnect backfill).
   * Records already seen on the stream are dropped by composite key,
   * so history never double-counts a fill. */
  mergeTrades(marketId: string, records: TradeRecord[]): void {
    for (const record of records) this.applyTrade(record);
  }

  applyTrade(record: TradeRecord): void {
    const m = this.markets.get(record.market_id);
    if (m === undefined) return;
    const key = tradeKey(record);
    const seen = this.seen.get(record.market_id)!;
    if (seen.has(key)) return;
    seen.add(key);
    m.price = record.price_after;
    m.tick = Math.max(m.tick, record.tick);
    this.recordPrice(m, record.tick, record.price_after);
    m.feed.push(record);
    if (m.feed.length > FEED_LIMIT) m.feed.splice(0, m.feed.length - FEED_LIMIT);
    if (record.order_id) {
      this.resolveOrder(record.order_id, (chip) => {
        chip.state = "executed";
        chip.resolveTick = record.tick;
        chip.priceAfter = record.price_after;
      });
    }
  }

  applyRejection(record: RejectionRecord): void {
    if (record.order_id) {
      this.resolveOrder(record.order_id, (chip) => {
        chip.state = "rejected";
        chip.resolveTick = record.tick;
        chip.reason = record.reason;
      });
    }
  }

  applyMarketClose(marketId: string, tick: number, closingPrice: number): void {
    const m = this.markets.get(marketId);
    if (m === undefined) return;
    m.status = "closed";
    m.price = closingPrice;
    m.tick = tick;
    this.recordPrice(m, tick, closingPrice);
  }

  applySettle(marketId: string, winner: Side): void {
    const m = this.markets.get(marketId);
    if (m === undefined) return;
    m.status = "settled";
    m.winner = winner;
  }

  applyEventClose(status: string): void {
    this.eventStatus = status;
  }

  applyTick(marketId: string, tick: number): void {
    const m = this.markets.get(marketId);
    if (m !== undefined && tick > m.tick) m.tick = tick;
  }

  // ---------------------------------------------------------------- //
  // order chips

  addOrder(
    marketId: string,
    side: Side,
    action: Action,
    orderId: string,
    position: number,
  ): void {
    this.orders.push({
      orderId,
      marketId,
      side,
      action,
      state: "queued",
      position,
      submitTick: this.market(marketId).tick,
    });
  }

  private resolveOrder(orderId: string, update: (chip: OrderChip) => void): void {
    const chip = this.orders.find((o) => o.orderId === orderId);
    if (chip !== undefined && chip.state === "queued") update(chip);
  }

  lastSeenTick(marketId: string): number {
    const m = this.markets.get(marketId);
    if (m === undefined) return 0;
    return m.history.length > 0 ? m.history[m.history.length - 1].tick : 0;
  }

  private recordPrice(m: MarketState, tick: number, price: number): void {
    const last = m.history[m.history.length - 1];
    if (last !== undefined && last.tick === tick && last.price === price) return;
    if (last !== undefined && tick < last.tick) return;
    m.history.push({ tick, price });
  }
}

function tradeKey(record: TradeRecord): string {
  return [
    record.tick,
    record.kind,
    record.trader,
    record.side,
    record.cost,
    record.order_id ?? "",
  ].join("|");
}
