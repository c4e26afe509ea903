/**
 * Figure dispatch: validate inputs against the schema the kind consumes,
 * build the SVG, rasterize when the output path asks for PNG.  Rendering is
 * a pure function of CSV content plus the spec, so rerunning a command
 * rewrites byte-identical files.
 */

import fs from "node:fs";
import { Resvg } from "@resvg/resvg-js";
import { readArtifact, requireColumns, SchemaError } from "./csv.js";
import type { Artifact, SchemaName } from "./csv.js";
import { phiCollapse } from "./charts/phiCollapse.js";
import { relaxPanels } from "./charts/relaxPanels.js";
import { klDecay } from "./charts/klDecay.js";

export type FigureKind = "phi-collapse" | "relax-panels" | "kl-decay";

export const KINDS: FigureKind[] = ["phi-collapse", "relax-panels", "kl-decay"];

export interface FigureSpec {
  kind: FigureKind;
  inputs: string[];
  output: string;
}

const INPUT_SCHEMA: Record<FigureKind, SchemaName> = {
  "phi-collapse": "phi-scan",
  "relax-panels": "histogram",
  "kl-decay": "relax-points",
};

const BUILDERS: Record<FigureKind, (arts: Artifact[]) => string> = {
  "phi-collapse": phiCollapse,
  "relax-panels": relaxPanels,
  "kl-decay": klDecay,
};

export function buildFigure(kind: FigureKind, arts: Artifact[]): string {
  for (const art of arts) requireColumns(art, INPUT_SCHEMA[kind]);
  return BUILDERS[kind](arts);
}

export function rasterize(svg: string): Buffer {
  const resvg = new Resvg(svg, {
    font: { loadSystemFonts: true, defaultFontFamily: "DejaVu Sans" },
  });
  return Buffer.from(resvg.render().asPng());
}

/** Names of inputs that carried a header but no data rows. */
export function emptyInputs(arts: Artifact[]): string[] {
  return arts.filter((a) => a.rows.length === 0).map((a) => a.path);
}

export function render(spec: FigureSpec): { svg: string; empty: string[] } {
  if (!KINDS.includes(spec.kind)) {
    throw new SchemaError(
      `unknown figure kind "${spec.kind}" (expected ${KINDS.join(", ")})`,
    );
  }
  if (spec.inputs.length === 0) {
    throw new SchemaError("at least one input CSV is required");
  }
  const arts = spec.inputs.map(readArtifact);
  const svg = buildFigure(spec.kind, arts);

  if (spec.output.endsWith(".png")) {
    fs.writeFileSync(spec.output, rasterize(svg));
  } else if (spec.output.endsWith(".svg")) {
    fs.writeFileSync(spec.output, svg);
  } else {
    throw new SchemaError(
      `output path "${spec.output}" must end in .svg or .png`,
    );
  }
  return { svg, empty: emptyInputs(arts) };
}
