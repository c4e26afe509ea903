/**
 * Histogram panel grid for the first-return relaxation runs.  One panel per
 * per-point histogram artifact; rows are piston energies (ascending, top to
 * bottom) and columns slot half-gaps (descending, left to right).  Measured
 * densities are drawn as step curves, sigma = +1 in blue and sigma = -1 in
 * red, over the stationary flux density shipped in the reference_density
 * column as a gray silhouette.
 */

import { scaleLinear } from "d3-scale";
import type { Artifact } from "../csv.js";
import { SchemaError, baseName, metaNumber } from "../csv.js";
import {
  el,
  axisBottom,
  axisLeft,
  stepPath,
  svgDoc,
  textEl,
  warningBlock,
  type Frame,
} from "../svg.js";
import { shortNum } from "./common.js";

const PANEL_W = 180;
const PANEL_H = 116;
const GAP_X = 14;
const GAP_Y = 14;
const MARGIN = { left: 86, right: 18, top: 46, bottom: 56 };

const BRANCH_COLOR: Record<number, string> = { 1: "#2563eb", [-1]: "#dc2626" };
const REFERENCE_FILL = "#d1d5db";

interface HistRow {
  branch: number;
  bin_left: number;
  bin_right: number;
  count: number;
  density: number;
  reference_density: number;
}

interface Panel {
  art: Artifact;
  delta: number;
  ep: number;
  n: number;
}

export function relaxPanels(arts: Artifact[]): string {
  const panels: Panel[] = arts.map((art) => ({
    art,
    delta: metaNumber(art, "point", "delta"),
    ep: metaNumber(art, "point", "ep"),
    n: metaNumber(art, "point", "n"),
  }));

  const byCell = new Map<string, Panel>();
  for (const p of panels) {
    const key = `${p.delta}|${p.ep}`;
    const prev = byCell.get(key);
    if (prev) {
      throw new SchemaError(
        `${p.art.path}: duplicate panel for delta=${shortNum(p.delta)}, ` +
          `ep=${shortNum(p.ep)} (already provided by ${prev.art.path})`,
      );
    }
    byCell.set(key, p);
  }

  const eps = [...new Set(panels.map((p) => p.ep))].sort((a, b) => a - b);
  const deltas = [...new Set(panels.map((p) => p.delta))].sort((a, b) => b - a);
  const ns = [...new Set(panels.map((p) => p.n))].sort((a, b) => a - b);
  const nrows = Math.max(1, eps.length);
  const ncols = Math.max(1, deltas.length);

  const W = MARGIN.left + ncols * PANEL_W + (ncols - 1) * GAP_X + MARGIN.right;
  const H = MARGIN.top + nrows * PANEL_H + (nrows - 1) * GAP_Y + MARGIN.bottom;

  let body = "";
  const title = panels.length
    ? `first-return angle histograms, launch exponent n = ${ns
        .map(shortNum)
        .join(", ")}`
    : "first-return angle histograms";
  body += textEl(MARGIN.left, 18, title, { size: 12, weight: "bold" });

  deltas.forEach((delta, c) => {
    const cx = MARGIN.left + c * (PANEL_W + GAP_X) + PANEL_W / 2;
    body += textEl(cx, MARGIN.top - 8, `δ = ${shortNum(delta)}`, {
      size: 11,
      anchor: "middle",
    });
  });
  eps.forEach((ep, r) => {
    const cy = MARGIN.top + r * (PANEL_H + GAP_Y) + PANEL_H / 2;
    body += textEl(20, cy, `ε_P = ${shortNum(ep)}`, {
      size: 11,
      anchor: "middle",
      rotate: -90,
    });
  });

  for (const p of byCell.values()) {
    const r = eps.indexOf(p.ep);
    const c = deltas.indexOf(p.delta);
    const frame: Frame = {
      x: MARGIN.left + c * (PANEL_W + GAP_X),
      y: MARGIN.top + r * (PANEL_H + GAP_Y),
      w: PANEL_W,
      h: PANEL_H,
    };
    body += panel(p.art.rows as unknown as HistRow[], frame);
  }

  // figure-level axis titles; per-panel ticks carry the numbers
  body += textEl(
    MARGIN.left + (W - MARGIN.left - MARGIN.right) / 2,
    H - 14,
    "incidence angle α (σ = +1 blue, σ = -1 red; gray: stationary flux)",
    { size: 11, anchor: "middle" },
  );
  body += textEl(46, MARGIN.top + (H - MARGIN.top - MARGIN.bottom) / 2, "density", {
    size: 11,
    anchor: "middle",
    rotate: -90,
  });

  const warnings = arts
    .filter((a) => a.rows.length === 0)
    .map((a) => `no data rows in ${baseName(a.path)}`);
  body += warningBlock({ x: MARGIN.left, y: 20, w: 0, h: 0 }, warnings);

  return svgDoc(W, H, body);
}

function panel(rows: HistRow[], frame: Frame): string {
  const aMax = rows.length
    ? Math.max(...rows.map((r) => Math.max(Math.abs(r.bin_left), Math.abs(r.bin_right))))
    : Math.PI;
  const dMax = rows.length
    ? 1.05 * Math.max(...rows.map((r) => Math.max(r.density, r.reference_density)))
    : 1;
  const xs = scaleLinear().domain([-aMax, aMax]).range([frame.x, frame.x + frame.w]);
  const ys = scaleLinear().domain([0, dMax]).range([frame.y + frame.h, frame.y]);

  let out = "";
  const branches = [...new Set(rows.map((r) => r.branch))].sort((a, b) => b - a);
  for (const b of branches) {
    const br = rows.filter((r) => r.branch === b).sort((x, y) => x.bin_left - y.bin_left);
    out += stepPath(
      br.map((r) => xs(r.bin_left)),
      br.map((r) => xs(r.bin_right)),
      br.map((r) => ys(r.reference_density)),
      { fill: REFERENCE_FILL, "fill-opacity": 0.7, stroke: "none" },
      ys(0),
    );
  }
  // draw sigma = -1 first so the narrower +1 branch stays on top
  for (const b of [...branches].sort((a, c) => a - c)) {
    const br = rows.filter((r) => r.branch === b).sort((x, y) => x.bin_left - y.bin_left);
    out += stepPath(
      br.map((r) => xs(r.bin_left)),
      br.map((r) => xs(r.bin_right)),
      br.map((r) => ys(r.density)),
      {
        fill: "none",
        stroke: BRANCH_COLOR[b] ?? "#444",
        "stroke-width": 1.1,
      },
    );
  }
  out += axisBottom(xs, frame, "", { ticks: 3, size: 8 });
  out += axisLeft(ys, frame, "", { ticks: 3, size: 8 });
  return out;
}
