// Mirrors of the service JSON payloads. Every number the dashboard shows
// comes straight out of one of these; nothing is recomputed client-side.

export interface SessionInfo {
  session_id: string;
  suggested_total_k: number;
  height: number;
  width: number;
  channels: number;
}

export interface MaskResult {
  pixels: number;
  coverage_pct: number;
}

export interface SuperpixelsJson {
  num_superpixels: number;
  labels: number[];
  inner_labels: number[];
}

export interface SegmentResult {
  superpixels: SuperpixelsJson;
  inner_k: number;
  outer_k: number;
  label_png: string;
}

export interface Coverage {
  positive_pct: number;
  negative_pct: number;
  neutral_pct: number;
}

export interface ExplanationJson {
  target_class: number;
  class_names: string[];
  baseline_probs: number[];
  weights: number[];
  picked: number[];
  intercept: number;
  r2: number;
  coverage: Coverage;
}

export interface ExplainResult {
  explanation: ExplanationJson;
  overlay_png: string;
  trinary_png: string;
}

export interface ReportRow {
  class_index: number;
  class_name: string;
  original_pct: number;
  edited_pct: number;
  delta_pct: number;
  rank_change: number;
}

export interface EditResult {
  edited_png: string;
  inpainted_pixels: number;
  report: ReportRow[] | null;
  edits: EditOp[];
}

export type EditOp =
  | { op: "color"; dr: number; dg: number; db: number }
  | { op: "shift"; dx: number; dy: number }
  | { op: "rotate"; angle: number }
  | { op: "expand"; power: number }
  | { op: "remove" };

export interface SegmentOptions {
  total_k?: number;
  inner_k?: number;
  outer_k?: number;
  spatial_weight?: number;
  seed?: number;
}

export interface ExplainOptions {
  num_samples?: number;
  num_features?: number;
  kernel_width?: number;
  ridge_alpha?: number;
  occlusion?: "mean-color" | "constant-gray";
  target_class?: number;
  distance_mode?: "class" | "vector";
  seed?: number;
}

export interface ErrorBody {
  code: string;
  message: string;
}
