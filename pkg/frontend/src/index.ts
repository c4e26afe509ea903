export {
  parseArtifact,
  readArtifact,
  requireColumns,
  metaNumber,
  SchemaError,
  SCHEMAS,
} from "./csv.js";
export type { Artifact, SchemaName } from "./csv.js";
export { buildFigure, render, rasterize, KINDS } from "./render.js";
export type { FigureKind, FigureSpec } from "./render.js";
export { phiCollapse } from "./charts/phiCollapse.js";
export { relaxPanels } from "./charts/relaxPanels.js";
export { klDecay } from "./charts/klDecay.js";
