/** Presentation-only helpers. Scores arrive from the service in [0, 1] and
 * are shown on the 0–100 scale; nothing here computes a metric. */

export function scorePercent(value: number | null | undefined): string {
  if (value === null || value === undefined) return '–';
  return (value * 100).toFixed(1);
}

export function probabilityLabel(p: number): string {
  return `p=${p.toFixed(4)}`;
}

export function formatMs(ms: number): string {
  return ms >= 100 ? `${(ms / 1000).toFixed(2)} s` : `${ms.toFixed(1)} ms`;
}

/** Color for a score on the fixed [0, 100] scale: red at 0 through green at
 * 100. Out-of-range input clamps so one bad value cannot skew the palette. */
export function heatColor(percent: number): string {
  const clamped = Math.max(0, Math.min(100, percent));
  const hue = clamped * 1.2; // 0 red → 120 green
  return `hsl(${hue.toFixed(0)}, 68%, 44%)`;
}

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}
