/**
 * Deterministic SVG assembly.  Figures are built as plain strings so that
 * re-rendering the same inputs is byte-identical: no timestamps, no ids,
 * attribute order fixed by call sites, numbers through one formatter.
 */

import type { ScaleContinuousNumeric } from "d3-scale";

/** Number -> attribute text.  6 significant digits, no negative zero. */
export function fmt(x: number): string {
  if (!Number.isFinite(x)) return "0";
  const r = Number(x.toPrecision(6));
  return Object.is(r, -0) ? "0" : String(r);
}

export function esc(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export type Attrs = Record<string, string | number>;

export function el(name: string, attrs: Attrs, ...children: string[]): string {
  let a = "";
  for (const [k, v] of Object.entries(attrs)) {
    a += ` ${k}="${typeof v === "number" ? fmt(v) : esc(v)}"`;
  }
  const inner = children.join("");
  return inner ? `<${name}${a}>${inner}</${name}>` : `<${name}${a}/>`;
}

export const FONT = "DejaVu Sans, sans-serif";

export function textEl(
  x: number,
  y: number,
  s: string,
  opts: {
    size?: number;
    anchor?: "start" | "middle" | "end";
    fill?: string;
    rotate?: number;
    weight?: string;
  } = {},
): string {
  const attrs: Attrs = {
    x,
    y,
    "font-family": FONT,
    "font-size": opts.size ?? 11,
    "text-anchor": opts.anchor ?? "start",
    fill: opts.fill ?? "#222",
  };
  if (opts.weight) attrs["font-weight"] = opts.weight;
  if (opts.rotate) attrs.transform = `rotate(${fmt(opts.rotate)} ${fmt(x)} ${fmt(y)})`;
  return el("text", attrs, esc(s));
}

export function svgDoc(width: number, height: number, body: string): string {
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${fmt(width)}" ` +
    `height="${fmt(height)}" viewBox="0 0 ${fmt(width)} ${fmt(height)}">` +
    `<rect width="${fmt(width)}" height="${fmt(height)}" fill="white"/>` +
    body +
    `</svg>`
  );
}

/** Pixel rectangle a panel draws into. */
export interface Frame {
  x: number;
  y: number;
  w: number;
  h: number;
}

export type Scale = ScaleContinuousNumeric<number, number>;

export function polyline(
  xs: number[],
  ys: number[],
  attrs: Attrs,
): string {
  let d = "";
  for (let i = 0; i < xs.length; i++) {
    d += (i === 0 ? "M" : "L") + fmt(xs[i]) + "," + fmt(ys[i]);
  }
  return el("path", { d, fill: "none", ...attrs });
}

/**
 * Step path over histogram bins.  lefts/rights are bin edges in pixel
 * coordinates, tops the bin level; `closeTo` (baseline pixel y) turns the
 * outline into a filled silhouette.
 */
export function stepPath(
  lefts: number[],
  rights: number[],
  tops: number[],
  attrs: Attrs,
  closeTo?: number,
): string {
  if (lefts.length === 0) return "";
  let d = "";
  if (closeTo !== undefined) d += `M${fmt(lefts[0])},${fmt(closeTo)}L`;
  else d += "M";
  d += `${fmt(lefts[0])},${fmt(tops[0])}`;
  for (let i = 0; i < lefts.length; i++) {
    if (i > 0) d += `L${fmt(lefts[i])},${fmt(tops[i])}`;
    d += `L${fmt(rights[i])},${fmt(tops[i])}`;
  }
  if (closeTo !== undefined) {
    d += `L${fmt(rights[rights.length - 1])},${fmt(closeTo)}Z`;
  }
  return el("path", { d, ...attrs });
}

const TICK = 5;

/** Bottom axis with ticks, labels and an axis title. */
export function axisBottom(
  scale: Scale,
  frame: Frame,
  title: string,
  opts: { ticks?: number; size?: number } = {},
): string {
  const n = opts.ticks ?? 6;
  const size = opts.size ?? 10;
  const y0 = frame.y + frame.h;
  const format = scale.tickFormat(n, "~g");
  let out = el("line", {
    x1: frame.x, y1: y0, x2: frame.x + frame.w, y2: y0,
    stroke: "#222", "stroke-width": 1,
  });
  for (const t of scale.ticks(n)) {
    const px = scale(t);
    const label = format(t);
    const len = label ? TICK : TICK - 2;
    out += el("line", {
      x1: px, y1: y0, x2: px, y2: y0 + len, stroke: "#222", "stroke-width": 1,
    });
    if (label) {
      out += textEl(px, y0 + len + size, label, { size, anchor: "middle" });
    }
  }
  if (title) {
    out += textEl(frame.x + frame.w / 2, y0 + size + 22, title, {
      size: size + 1,
      anchor: "middle",
    });
  }
  return out;
}

export function axisLeft(
  scale: Scale,
  frame: Frame,
  title: string,
  opts: { ticks?: number; size?: number; titleGap?: number } = {},
): string {
  const n = opts.ticks ?? 6;
  const size = opts.size ?? 10;
  const format = scale.tickFormat(n, "~g");
  let out = el("line", {
    x1: frame.x, y1: frame.y, x2: frame.x, y2: frame.y + frame.h,
    stroke: "#222", "stroke-width": 1,
  });
  for (const t of scale.ticks(n)) {
    const py = scale(t);
    const label = format(t);
    const len = label ? TICK : TICK - 2;
    out += el("line", {
      x1: frame.x - len, y1: py, x2: frame.x, y2: py,
      stroke: "#222", "stroke-width": 1,
    });
    if (label) {
      out += textEl(frame.x - len - 3, py + size * 0.35, label, {
        size,
        anchor: "end",
      });
    }
  }
  if (title) {
    const tx = frame.x - (opts.titleGap ?? 42);
    const ty = frame.y + frame.h / 2;
    out += textEl(tx, ty, title, { size: size + 1, anchor: "middle", rotate: -90 });
  }
  return out;
}

/** Amber annotation block naming inputs that carried no data rows. */
export function warningBlock(frame: Frame, messages: string[]): string {
  let out = "";
  messages.forEach((m, i) => {
    out += textEl(frame.x + 8, frame.y + 16 + 14 * i, `warning: ${m}`, {
      size: 11,
      fill: "#b45309",
      weight: "bold",
    });
  });
  return out;
}
