/**
 * Relaxation distance against slot half-gap: KL divergence of the measured
 * first-return histogram from the stationary flux density, log-log, one
 * panel per launch exponent n, one colored series per piston energy.  The
 * kl_floor column (same estimator fed with stationary launches) is drawn
 * dashed as the sampling noise floor.
 */

import { scaleLog } from "d3-scale";
import type { Artifact } from "../csv.js";
import { baseName } from "../csv.js";
import {
  axisBottom,
  axisLeft,
  el,
  polyline,
  svgDoc,
  textEl,
  warningBlock,
  type Frame,
} from "../svg.js";
import { groupBy, marker, seriesColor, shortNum } from "./common.js";

const PANEL_W = 320;
const PANEL_H = 330;
const GAP_X = 26;
const MARGIN = { left: 72, right: 18, top: 34, bottom: 54 };

interface KlRow {
  delta: number;
  ep: number;
  n: number;
  kl: number;
  kl_floor: number;
  samples: number;
}

export function klDecay(arts: Artifact[]): string {
  const rows = arts.flatMap((a) => a.rows) as unknown as KlRow[];
  const warnings = arts
    .filter((a) => a.rows.length === 0)
    .map((a) => `no data rows in ${baseName(a.path)}`);

  const byN = groupBy(rows, (r) => r.n, "asc");
  const npanels = Math.max(1, byN.size);
  const W = MARGIN.left + npanels * PANEL_W + (npanels - 1) * GAP_X + MARGIN.right;
  const H = MARGIN.top + PANEL_H + MARGIN.bottom;

  // log scales need positive data; zero KL estimates are dropped
  const pos = rows.filter((r) => r.delta > 0);
  const yVals = pos.flatMap((r) => [r.kl, r.kl_floor]).filter((v) => v > 0);
  const xd: [number, number] = pos.length
    ? [0.8 * Math.min(...pos.map((r) => r.delta)), 1.25 * Math.max(...pos.map((r) => r.delta))]
    : [0.01, 0.5];
  const yd: [number, number] = yVals.length
    ? [0.7 * Math.min(...yVals), 1.4 * Math.max(...yVals)]
    : [1e-3, 1];

  let body = "";
  const panelNs = byN.size ? [...byN.keys()] : [null];
  panelNs.forEach((n, pi) => {
    const frame: Frame = {
      x: MARGIN.left + pi * (PANEL_W + GAP_X),
      y: MARGIN.top,
      w: PANEL_W,
      h: PANEL_H,
    };
    const xs = scaleLog().domain(xd).range([frame.x, frame.x + frame.w]);
    const ys = scaleLog().domain(yd).range([frame.y + frame.h, frame.y]);

    if (n !== null) {
      const series = groupBy(byN.get(n)!, (r) => r.ep, "asc");
      let si = 0;
      for (const [ep, sr] of series) {
        const color = seriesColor(si);
        const sorted = sr
          .filter((r) => r.delta > 0)
          .sort((a, b) => a.delta - b.delta);
        const klPts = sorted.filter((r) => r.kl > 0);
        body += polyline(
          klPts.map((r) => xs(r.delta)),
          klPts.map((r) => ys(r.kl)),
          { stroke: color, "stroke-width": 1.2 },
        );
        for (const r of klPts) {
          body += marker(si, xs(r.delta), ys(r.kl), color, 22);
        }
        const floorPts = sorted.filter((r) => r.kl_floor > 0);
        body += polyline(
          floorPts.map((r) => xs(r.delta)),
          floorPts.map((r) => ys(r.kl_floor)),
          { stroke: color, "stroke-width": 1, "stroke-dasharray": "5,3" },
        );
        if (pi === 0) {
          const ly = frame.y + 16 + 16 * si;
          body += el("line", {
            x1: frame.x + 10,
            y1: ly - 3,
            x2: frame.x + 30,
            y2: ly - 3,
            stroke: color,
            "stroke-width": 1.2,
          });
          body += textEl(frame.x + 36, ly, `ε_P = ${shortNum(ep)}`, { size: 10 });
        }
        si += 1;
      }
      if (pi === 0) {
        body += textEl(frame.x + 36, frame.y + 16 + 16 * series.size, "dashed: sampling floor", {
          size: 10,
          fill: "#555",
        });
      }
      body += textEl(frame.x + frame.w - 8, frame.y + 14, `n = ${shortNum(n)}`, {
        size: 12,
        anchor: "end",
        weight: "bold",
      });
    }

    body += axisBottom(xs, frame, "δ", { ticks: 5 });
    body += axisLeft(ys, frame, pi === 0 ? "KL divergence" : "", { ticks: 5, titleGap: 50 });
  });

  body += warningBlock({ x: MARGIN.left, y: MARGIN.top, w: 0, h: 0 }, warnings);
  return svgDoc(W, H, body);
}
