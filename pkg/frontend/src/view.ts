// DOM rendering. Pure functions from session state to markup; the app
// wires interaction through delegated click handlers on data attributes.

import type { Side } from "./api.js";
import { formatCash, formatCountdown, formatPrice, sideLabel } from "./format.js";
import type { MarketState, OrderChip, SessionState } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderLogin(root: HTMLElement, error = "", busy = false): void {
  root.innerHTML = `
    <section class="login">
      <h1>Replication market</h1>
      <p>Enter your participant token to join your trading event.</p>
      <form class="login-form">
        <input type="password" name="token" placeholder="participant token"
               autocomplete="off" ${busy ? "disabled" : ""} />
        <button type="submit" ${busy ? "disabled" : ""}>
          ${busy ? "Signing in…" : "Sign in"}
        </button>
      </form>
      <p class="login-error" role="alert">${escapeHtml(error)}</p>
    </section>
  `;
}

export function renderSession(
  root: HTMLElement,
  state: SessionState,
  claimsBase: string,
): void {
  const closed = !state.tradingOpen;
  const cards = [...state.markets.values()]
    .map((m) => marketCard(m, state, claimsBase))
    .join("");
  root.innerHTML = `
    <header class="session-bar">
      <div>
        <strong>${escapeHtml(state.eventId)}</strong>
        <span class="badge status-${escapeHtml(state.eventStatus)}">${escapeHtml(
          state.eventStatus,
        )}</span>
        <span class="badge ${state.connected ? "live" : "offline"}">
          ${state.connected ? "live" : "reconnecting…"}</span>
      </div>
      <div>
        <span class="trader">trading as ${escapeHtml(state.participant)}</span>
        <label class="cents-toggle">
          <input type="checkbox" data-toggle="cents" ${state.showCents ? "checked" : ""} />
          show cents
        </label>
      </div>
    </header>
    ${closed && state.outcomes ? outcomeBanner(state) : ""}
    <main class="market-grid">${cards}</main>
  `;
}

function outcomeBanner(state: SessionState): string {
  const entries = Object.entries(state.outcomes ?? {})
    .map(([claim, outcome]) => `${escapeHtml(claim)}: ${escapeHtml(outcome)}`)
    .join(", ");
  return `<p class="outcome-banner">Event settled. Outcomes: ${entries}</p>`;
}

function marketCard(
  m: MarketState,
  state: SessionState,
  claimsBase: string,
): string {
  const disabled = !(state.tradingOpen && m.status === "open");
  const chips = state
    .myOrders(m.marketId)
    .slice(-6)
    .map(orderChip)
    .join("");
  const feed = m.feed
    .slice()
    .reverse()
    .map(
      (t) => `
        <li class="feed-row feed-${t.kind}">
          <span>t${t.tick}</span>
          <span>${escapeHtml(t.trader)}</span>
          <span>${t.shares > 0 ? "buy" : "sell"} ${escapeHtml(t.side)}</span>
          <span>${formatPrice(t.price_after, state.showCents)}</span>
        </li>`,
    )
    .join("");
  return `
    <article class="market-card market-${escapeHtml(m.status)}" data-market="${escapeHtml(
      m.marketId,
    )}">
      <header class="card-head">
        <h3>${escapeHtml(m.claimId)}</h3>
        <a class="full-text" target="_blank" rel="noopener"
           href="${escapeHtml(claimsBase + encodeURIComponent(m.claimId))}">full text</a>
        <span class="market-status">${escapeHtml(m.status)}${
          m.winner ? ` · ${sideLabel(m.winner)}` : ""
        }</span>
      </header>
      <div class="price-row">
        <span class="price" data-role="price">${formatPrice(m.price, state.showCents)}</span>
        <span class="complement">not: ${formatPrice(1 - m.price, state.showCents)}</span>
      </div>
      ${sparkline(m)}
      <div class="countdown" data-role="countdown">
        ${formatCountdown(m.tick, m.ticksTotal, state.tickInterval)}
      </div>
      <dl class="book">
        <dt>cash</dt><dd data-role="cash">${formatCash(m.cash)}</dd>
        <dt>replicates</dt><dd data-role="yes">${m.holdings.yes}</dd>
        <dt>does not</dt><dd data-role="no">${m.holdings.no}</dd>
        <dt>my trades</dt><dd data-role="trades">${m.myTrades}</dd>
      </dl>
      <div class="order-buttons">
        ${sideButtons(m.marketId, "yes", disabled)}
        ${sideButtons(m.marketId, "no", disabled)}
      </div>
      <ul class="orders">${chips}</ul>
      <ul class="feed">${feed}</ul>
      <p class="market-error" role="alert">${escapeHtml(m.error)}</p>
    </article>
  `;
}

function sideButtons(marketId: string, side: Side, disabled: boolean): string {
  const off = disabled ? "disabled" : "";
  return `
    <div class="side-group">
      <span class="side-label">${sideLabel(side)}</span>
      <button data-market="${escapeHtml(marketId)}" data-side="${side}"
              data-action="buy" ${off}>Buy</button>
      <button data-market="${escapeHtml(marketId)}" data-side="${side}"
              data-action="sell" ${off}>Sell</button>
    </div>
  `;
}

function orderChip(chip: OrderChip): string {
  const what = `${chip.action} ${sideLabel(chip.side)}`;
  if (chip.state === "queued") {
    return `<li class="order order-queued">queued #${chip.position}: ${what}</li>`;
  }
  if (chip.state === "executed") {
    return `<li class="order order-executed">executed t${chip.resolveTick}: ${what}
      @ ${formatPrice(chip.priceAfter ?? 0)}</li>`;
  }
  return `<li class="order order-rejected">rejected: ${what}
    (${escapeHtml(chip.reason ?? "")})</li>`;
}

const SPARK_W = 140;
const SPARK_H = 36;

function sparkline(m: MarketState): string {
  if (m.history.length === 0) {
    return `<svg class="spark" viewBox="0 0 ${SPARK_W} ${SPARK_H}"></svg>`;
  }
  const t0 = m.history[0].tick;
  const t1 = Math.max(m.history[m.history.length - 1].tick, t0 + 1);
  const points = m.history
    .map((p) => {
      const x = ((p.tick - t0) / (t1 - t0)) * SPARK_W;
      const y = (1 - p.price) * SPARK_H;
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
  return `
    <svg class="spark" viewBox="0 0 ${SPARK_W} ${SPARK_H}" preserveAspectRatio="none">
      <line x1="0" y1="${SPARK_H / 2}" x2="${SPARK_W}" y2="${SPARK_H / 2}" class="spark-mid" />
      <polyline points="${points}" fill="none" class="spark-line" />
    </svg>
  `;
}
