/**
 * Reader for ballpiston CSV artifacts.
 *
 * Artifact grammar (produced by the simulator CLI):
 *
 *   # ballpiston <version>
 *   # config: key=value key=value ...
 *   # point: key=value ...          (optional, per-point histogram files)
 *   col1,col2,...
 *   1.25,0.5,...                    (numbers at 17 significant digits)
 *
 * Every column in every schema we consume is numeric, so rows are parsed
 * straight to numbers and a non-numeric cell is a schema violation.  All
 * validation errors are SchemaError with the file path and the offending
 * column named, so the CLI can surface column-level diagnostics.
 */

import fs from "node:fs";
import path from "node:path";
import Papa from "papaparse";

export class SchemaError extends Error {}

export interface Artifact {
  path: string;
  /** Version string from the "# ballpiston <version>" line. */
  version: string;
  /** key=value pairs from the "# config:" line. */
  config: Record<string, string>;
  /** key=value pairs from the "# point:" line, when present. */
  point: Record<string, string> | null;
  columns: string[];
  rows: Record<string, number>[];
}

function parseKeyValues(rest: string): Record<string, string> {
  const out: Record<string, string> = {};
  for (const tok of rest.split(/\s+/)) {
    if (!tok) continue;
    const eq = tok.indexOf("=");
    if (eq > 0) out[tok.slice(0, eq)] = tok.slice(eq + 1);
  }
  return out;
}

export function parseArtifact(text: string, filePath: string): Artifact {
  const lines = text.split(/\r?\n/);
  let version = "";
  let config: Record<string, string> = {};
  let point: Record<string, string> | null = null;
  let i = 0;
  for (; i < lines.length; i++) {
    const line = lines[i];
    if (!line.startsWith("#")) break;
    const body = line.replace(/^#\s*/, "");
    if (body.startsWith("ballpiston")) {
      version = body.slice("ballpiston".length).trim();
    } else if (body.startsWith("config:")) {
      config = parseKeyValues(body.slice("config:".length));
    } else if (body.startsWith("point:")) {
      point = parseKeyValues(body.slice("point:".length));
    }
  }
  const tail = lines.slice(i).join("\n");
  if (!tail.trim()) {
    throw new SchemaError(`${filePath}: no header row found`);
  }

  const parsed = Papa.parse<Record<string, unknown>>(tail, {
    header: true,
    dynamicTyping: true,
    skipEmptyLines: true,
  });
  const columns = (parsed.meta.fields ?? []).map((c) => c.trim());
  if (columns.length === 0 || columns.every((c) => c === "")) {
    throw new SchemaError(`${filePath}: no header row found`);
  }

  const rows: Record<string, number>[] = [];
  parsed.data.forEach((raw, k) => {
    const row: Record<string, number> = {};
    for (const col of columns) {
      const v = raw[col];
      if (typeof v !== "number" || !Number.isFinite(v)) {
        throw new SchemaError(
          `${filePath} row ${k + 1}: column "${col}" is not numeric` +
            ` (got ${JSON.stringify(v ?? "")})`,
        );
      }
      row[col] = v;
    }
    rows.push(row);
  });

  return { path: filePath, version, config, point, columns, rows };
}

export function readArtifact(filePath: string): Artifact {
  let text: string;
  try {
    text = fs.readFileSync(filePath, "utf8");
  } catch (e) {
    throw new SchemaError(`${filePath}: ${(e as Error).message}`);
  }
  return parseArtifact(text, filePath);
}

/** Column sets for each artifact schema the charts consume. */
export const SCHEMAS = {
  "phi-scan": [
    "delta",
    "ep",
    "tau_bp_analytic",
    "nu_emp",
    "nu_stderr",
    "phi_analytic",
    "phi_emp",
  ],
  "relax-points": ["delta", "ep", "n", "kl", "kl_floor", "samples"],
  histogram: [
    "branch",
    "bin_left",
    "bin_right",
    "count",
    "density",
    "reference_density",
  ],
} as const;

export type SchemaName = keyof typeof SCHEMAS;

/** Throw unless the artifact carries every column of the named schema. */
export function requireColumns(art: Artifact, schema: SchemaName): void {
  const want = SCHEMAS[schema];
  const missing = want.filter((c) => !art.columns.includes(c));
  if (missing.length) {
    throw new SchemaError(
      `${art.path}: missing column(s) ${missing.join(", ")} required by the ` +
        `${schema} schema (found: ${art.columns.join(", ") || "none"})`,
    );
  }
}

/** Numeric value from a metadata key=value block, or a SchemaError. */
export function metaNumber(
  art: Artifact,
  block: "config" | "point",
  key: string,
): number {
  const src = block === "point" ? art.point : art.config;
  if (!src) {
    throw new SchemaError(`${art.path}: missing "# ${block}:" metadata line`);
  }
  const v = Number(src[key]);
  if (!Number.isFinite(v)) {
    throw new SchemaError(
      `${art.path}: "# ${block}:" metadata has no numeric "${key}"`,
    );
  }
  return v;
}

export function baseName(p: string): string {
  return path.basename(p);
}
