/**
 * Collapse plot: measured tau_bp * nu_bp against piston energy, one marker
 * set per slot half-gap delta, with the analytic phi curve overlaid per
 * series and an inset of the analytic collision rate 1/tau_bp versus delta.
 *
 * Every overlay value is taken from columns of the input artifacts
 * (phi_analytic, tau_bp_analytic); nothing is recomputed from geometry
 * flags, so the curves always belong to the run that produced the points.
 */

import { scaleLinear } from "d3-scale";
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

const W = 720;
const H = 480;
const MARGIN = { left: 68, right: 20, top: 20, bottom: 52 };

interface PhiRow {
  delta: number;
  ep: number;
  tau_bp_analytic: number;
  nu_emp: number;
  nu_stderr: number;
  phi_analytic: number;
  phi_emp: number;
}

export function phiCollapse(arts: Artifact[]): string {
  const rows = arts.flatMap((a) => a.rows) as unknown as PhiRow[];
  const warnings = arts
    .filter((a) => a.rows.length === 0)
    .map((a) => `no data rows in ${baseName(a.path)}`);

  const frame: Frame = {
    x: MARGIN.left,
    y: MARGIN.top,
    w: W - MARGIN.left - MARGIN.right,
    h: H - MARGIN.top - MARGIN.bottom,
  };

  const xMax = rows.length ? Math.max(0.5, ...rows.map((r) => r.ep)) : 0.5;
  const yMax = rows.length
    ? 1.05 *
      Math.max(
        ...rows.map((r) =>
          Math.max(
            r.phi_analytic,
            r.phi_emp + 2 * r.tau_bp_analytic * r.nu_stderr,
          ),
        ),
      )
    : 1;
  const xs = scaleLinear().domain([0, xMax]).range([frame.x, frame.x + frame.w]);
  const ys = scaleLinear().domain([0, yMax]).range([frame.y + frame.h, frame.y]);

  let body = "";
  const series = groupBy(rows, (r) => r.delta, "desc");
  let si = 0;
  const legend: string[] = [];
  for (const [delta, sr] of series) {
    const color = seriesColor(si);
    const sorted = [...sr].sort((a, b) => a.ep - b.ep);
    body += polyline(
      sorted.map((r) => xs(r.ep)),
      sorted.map((r) => ys(r.phi_analytic)),
      { stroke: color, "stroke-width": 1 },
    );
    for (const r of sorted) {
      const half = 2 * r.tau_bp_analytic * r.nu_stderr;
      body += el("line", {
        x1: xs(r.ep),
        y1: ys(r.phi_emp - half),
        x2: xs(r.ep),
        y2: ys(r.phi_emp + half),
        stroke: color,
        "stroke-width": 1,
      });
      body += marker(si, xs(r.ep), ys(r.phi_emp), color);
    }
    // legend stacks upward from the lower-left corner, under the curve
    const ly = frame.y + frame.h - 16 - 18 * (series.size - 1 - si);
    legend.push(
      marker(si, frame.x + 20, ly - 4, color) +
        textEl(frame.x + 32, ly, `δ = ${shortNum(delta)}`, { size: 11 }),
    );
    si += 1;
  }
  body += legend.join("");

  body += axisBottom(xs, frame, "piston energy ε_P");
  body += axisLeft(ys, frame, "τ_bp · ν_bp(ε_P)", { titleGap: 46 });
  body += inset(rows, frame);
  body += warningBlock(frame, warnings);

  return svgDoc(W, H, body);
}

/** Inset, top right: analytic rate 1/tau_bp against delta. */
function inset(rows: PhiRow[], outer: Frame): string {
  const frame: Frame = {
    x: outer.x + outer.w - 218,
    y: outer.y + 26,
    w: 190,
    h: 122,
  };
  const taus = new Map<number, number>();
  for (const r of rows) {
    if (!taus.has(r.delta)) taus.set(r.delta, r.tau_bp_analytic);
  }
  const pts = [...taus.entries()]
    .map(([delta, tau]) => ({ delta, rate: 1 / tau }))
    .sort((a, b) => a.delta - b.delta);

  const xd = pts.length
    ? [0, 1.1 * Math.max(...pts.map((p) => p.delta))]
    : [0, 0.5];
  const yd = pts.length
    ? [0, 1.15 * Math.max(...pts.map((p) => p.rate))]
    : [0, 1];
  const xs = scaleLinear().domain(xd).range([frame.x, frame.x + frame.w]);
  const ys = scaleLinear().domain(yd).range([frame.y + frame.h, frame.y]);

  let body = el("rect", {
    x: frame.x - 34,
    y: frame.y - 8,
    width: frame.w + 44,
    height: frame.h + 34,
    fill: "white",
    stroke: "#999",
    "stroke-width": 0.5,
  });
  body += polyline(
    pts.map((p) => xs(p.delta)),
    pts.map((p) => ys(p.rate)),
    { stroke: "#222", "stroke-width": 1 },
  );
  for (const p of pts) {
    body += el("circle", {
      cx: xs(p.delta),
      cy: ys(p.rate),
      r: 2.5,
      fill: "#222",
    });
  }
  body += axisBottom(xs, frame, "δ", { ticks: 4, size: 8 });
  body += axisLeft(ys, frame, "1/τ_bp", { ticks: 4, size: 8, titleGap: 28 });
  return body;
}
