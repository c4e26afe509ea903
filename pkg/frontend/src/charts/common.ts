import {
  symbol,
  symbolCircle,
  symbolSquare,
  symbolTriangle,
  symbolDiamond,
  symbolCross,
  symbolStar,
} from "d3-shape";
import { el, fmt } from "../svg.js";

/** Fixed categorical palette; series index -> color, cycling. */
export const PALETTE = [
  "#1f77b4",
  "#d62728",
  "#2ca02c",
  "#9467bd",
  "#ff7f0e",
  "#8c564b",
  "#e377c2",
  "#17becf",
];

export function seriesColor(i: number): string {
  return PALETTE[i % PALETTE.length];
}

const SYMBOLS = [
  symbolCircle,
  symbolSquare,
  symbolTriangle,
  symbolDiamond,
  symbolCross,
  symbolStar,
];

/** Marker path centered on (x, y); shape cycles with the series index. */
export function marker(
  i: number,
  x: number,
  y: number,
  color: string,
  size = 28,
): string {
  const d = symbol(SYMBOLS[i % SYMBOLS.length], size)() ?? "";
  return el("path", {
    d,
    transform: `translate(${fmt(x)} ${fmt(y)})`,
    fill: "white",
    stroke: color,
    "stroke-width": 1.2,
  });
}

/** Group rows by a numeric key, keys sorted by `order`. */
export function groupBy<T>(
  rows: T[],
  key: (r: T) => number,
  order: "asc" | "desc",
): Map<number, T[]> {
  const m = new Map<number, T[]>();
  for (const r of rows) {
    const k = key(r);
    const bucket = m.get(k);
    if (bucket) bucket.push(r);
    else m.set(k, [r]);
  }
  const keys = [...m.keys()].sort((a, b) => (order === "asc" ? a - b : b - a));
  return new Map(keys.map((k) => [k, m.get(k)!]));
}

/** Short display form for grid values like 0.03125 or 0.325. */
export function shortNum(x: number): string {
  return String(Number(x.toPrecision(6)));
}
