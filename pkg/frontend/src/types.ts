/** Wire and view-model types shared across the UI. */

export const CLASS_NAMES = ["BG", "CZ", "PZ", "TZ", "TUM"] as const;
export type ClassName = (typeof CLASS_NAMES)[number];

/** Fixed display palette, one RGB triple per class id. */
export const CLASS_COLORS: Record<ClassName, [number, number, number]> = {
  BG: [0, 0, 0],
  CZ: [40, 96, 219],
  PZ: [58, 170, 94],
  TZ: [233, 204, 40],
  TUM: [219, 58, 44],
};

/** JSON body of POST /api/v1/predict. */
export interface PredictRequest {
  image: string; // base64 PNG
  model_family?: string;
  T?: number;
  normalize_entropy?: boolean;
  seed?: number;
}

export interface UncertaintySummary {
  mean_overall: number;
  sd_overall: number;
  per_class_mean: Partial<Record<ClassName, number>>;
  per_class_sd: Partial<Record<ClassName, number>>;
  grouping: "by_truth" | "by_prediction";
}

/** JSON body returned by POST /api/v1/predict. */
export interface PredictResponse {
  mask: string; // base64 indexed PNG
  mean_probs_available: boolean;
  uncertainty: string; // base64 16-bit PNG
  summary: UncertaintySummary;
  model_version: string;
  seed: number;
  T: number;
}

export interface ModelEntry {
  family: string;
  version: string;
  parameter_count: number;
  dropout_rate: number;
}

/**
 * A prediction after image decoding: label ids per pixel plus the
 * uncertainty map scaled back to [0, 1]. Rendering consumes only this,
 * so tests can supply fixtures without any canvas machinery.
 */
export interface DecodedPrediction {
  width: number;
  height: number;
  labels: Uint8Array;
  uncertainty: Float32Array;
  base: Float32Array; // uploaded grayscale image in [0, 1]
  summary: UncertaintySummary;
  modelVersion: string;
  seed: number;
}

export type ActiveLayer = "mask" | "uncertainty" | "both";

export interface LegendEntry {
  id: number;
  name: ClassName;
  color: [number, number, number];
}

export interface RegionInfo {
  area: number;
  meanUncertainty: number;
  /** Bounding box as [x0, y0, x1, y1], inclusive. */
  bbox: [number, number, number, number];
}
