// Display-only formatting. Every number shown comes straight from a
// server snapshot or stream record; nothing here changes balances.

const dollarFormatter = new Intl.NumberFormat("en-US", {
  minimumFractionDigits: 2,
  maximumFractionDigits: 2,
});

/** Contract price in dollars 0.00-1.00, or cents when toggled. */
export function formatPrice(price: number, cents = false): string {
  if (cents) {
    const value = price * 100;
    const rounded = Math.round(value * 10) / 10;
    return Number.isInteger(rounded) ? `${rounded}¢` : `${rounded.toFixed(1)}¢`;
  }
  return `$${dollarFormatter.format(price)}`;
}

export function formatCash(cash: number): string {
  if (cash < 0) return `-$${dollarFormatter.format(Math.abs(cash))}`;
  return `$${dollarFormatter.format(cash)}`;
}

/** Remaining market time from the latest server tick. Tick-indexed
 * events (tick_interval 0) count ticks; timed events count down. */
export function formatCountdown(
  tick: number,
  ticksTotal: number,
  tickInterval: number,
): string {
  const left = Math.max(0, ticksTotal - tick);
  if (tickInterval <= 0) return `tick ${tick} / ${ticksTotal}`;
  let seconds = Math.round(left * tickInterval);
  const hours = Math.floor(seconds / 3600);
  seconds -= hours * 3600;
  const minutes = Math.floor(seconds / 60);
  seconds -= minutes * 60;
  const mm = String(minutes).padStart(2, "0");
  const ss = String(seconds).padStart(2, "0");
  return `${hours}:${mm}:${ss} left`;
}

export function sideLabel(side: "yes" | "no"): string {
  return side === "yes" ? "will replicate" : "will not replicate";
}
