// Typed client for the trading service JSON API. The UI always talks to
// its own origin (the service or a reverse proxy serves both), so paths
// are relative and the participant token rides in the X-Token header.

export type Side = "yes" | "no";
export type Action = "buy" | "sell";

export interface LoginReply {
  participant: string;
  event_id: string;
  event_status: string;
  markets: string[];
  cash: Record<string, number>;
}

export interface MarketSummary {
  market_id: string;
  claim_id: string;
  status: string;
  tick: number;
  ticks_total: number;
  price: number;
  trade_count: number;
  winner: Side | null;
}

export interface MarketSnapshot extends MarketSummary {
  b: number;
  cash: number;
  holdings: { yes: number; no: number };
  trades: number;
}

export interface EventSummary {
  event_id: string;
  status: string;
  mode: string;
  tick: number;
  ticks: number;
  tick_interval: number;
  markets: Array<MarketSummary | { market_id: string }>;
  participants: string[];
  outcomes?: Record<string, string>;
  money_market_id?: string;
}

export interface TradeRecord {
  type: "trade";
  market_id: string;
  tick: number;
  kind: "agent" | "human";
  trader: string;
  side: Side;
  shares: number;
  cost: number;
  price_after: number;
  order_id?: string;
}

export interface RejectionRecord {
  type: "rejection";
  market_id: string;
  tick: number;
  trader: string;
  side: Side;
  action: Action;
  reason: string;
  order_id?: string;
}

export interface OrderReply {
  order_id: string;
  position: number;
  market_id: string;
}

export interface TradesReply {
  market_id: string;
  tick: number;
  trades: TradeRecord[];
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

/** What the app needs from a trading backend; ApiClient is the real one. */
export interface TradingApi {
  login(token: string): Promise<LoginReply>;
  eventMarkets(eventId: string): Promise<MarketSummary[]>;
  snapshot(marketId: string): Promise<MarketSnapshot>;
  placeOrder(marketId: string, side: Side, action: Action): Promise<OrderReply>;
  trades(marketId: string, since?: number): Promise<TradesReply>;
  openStream(eventId: string): Promise<Response>;
}

type FetchFn = typeof fetch;

export class ApiClient implements TradingApi {
  token: string | null = null;

  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchFn = (...args) => fetch(...args),
  ) {}

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers["content-type"] = "application/json";
    if (this.token !== null) headers["x-token"] = this.token;
    const resp = await this.fetchFn(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const payload = await resp.json();
        if (typeof payload?.detail === "string") detail = payload.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  async login(token: string): Promise<LoginReply> {
    const reply = await this.request<LoginReply>("POST", "/session/login", {
      token,
    });
    this.token = token;
    return reply;
  }

  eventMarkets(eventId: string): Promise<MarketSummary[]> {
    return this.request("GET", `/event/${eventId}/markets`);
  }

  snapshot(marketId: string): Promise<MarketSnapshot> {
    return this.request("GET", `/market/${marketId}/snapshot`);
  }

  placeOrder(marketId: string, side: Side, action: Action): Promise<OrderReply> {
    return this.request("POST", `/market/${marketId}/order`, { side, action });
  }

  trades(marketId: string, since = 0): Promise<TradesReply> {
    return this.request("GET", `/market/${marketId}/trades?since=${since}`);
  }

  /** Open the live event stream; the caller owns the response body. */
  async openStream(eventId: string): Promise<Response> {
    const headers: Record<string, string> = {};
    if (this.token !== null) headers["x-token"] = this.token;
    const resp = await this.fetchFn(`${this.baseUrl}/event/${eventId}/stream`, {
      headers,
    });
    if (!resp.ok || resp.body === null) {
      throw new ApiError(resp.status, "event stream unavailable");
    }
    return resp;
  }
}
