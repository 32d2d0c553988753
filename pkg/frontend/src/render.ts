/**
 * Pure rendering: RGBA buffers and view models from decoded payloads.
 *
 * Nothing here touches the DOM or any RNG; the same inputs always produce
 * byte-identical buffers, which is what makes same-seed re-prediction
 * verifiable pixel by pixel.
 */

import {
  CLASS_COLORS,
  CLASS_NAMES,
  type DecodedPrediction,
  type LegendEntry,
} from "./types";

/** Viridis stops; linear interpolation gives a perceptually uniform ramp. */
const VIRIDIS: Array<[number, number, number]> = [
  [68, 1, 84],
  [71, 44, 122],
  [59, 81, 139],
  [44, 113, 142],
  [33, 144, 141],
  [39, 173, 129],
  [92, 200, 99],
  [170, 220, 50],
  [253, 231, 37],
];

export function heatColor(u: number): [number, number, number] {
  const v = Math.min(1, Math.max(0, u));
  const scaled = v * (VIRIDIS.length - 1);
  const lo = Math.floor(scaled);
  const hi = Math.min(lo + 1, VIRIDIS.length - 1);
  const t = scaled - lo;
  return [0, 1, 2].map((c) =>
    Math.round(VIRIDIS[lo][c] + t * (VIRIDIS[hi][c] - VIRIDIS[lo][c])),
  ) as [number, number, number];
}

export function legendEntries(): LegendEntry[] {
  return CLASS_NAMES.map((name, id) => ({ id, name, color: CLASS_COLORS[name] }));
}

function grayRgba(base: Float32Array, out: Uint8ClampedArray): void {
  for (let i = 0; i < base.length; i++) {
    const g = Math.round(base[i] * 255);
    out[4 * i] = g;
    out[4 * i + 1] = g;
    out[4 * i + 2] = g;
    out[4 * i + 3] = 255;
  }
}

/** Grayscale base with the class-colored mask blended on top. */
export function renderMaskOverlay(
  decoded: DecodedPrediction,
  opacity: number,
): Uint8ClampedArray {
  const { labels, base } = decoded;
  const out = new Uint8ClampedArray(4 * labels.length);
  grayRgba(base, out);
  const alpha = Math.min(1, Math.max(0, opacity));
  for (let i = 0; i < labels.length; i++) {
    if (labels[i] === 0) continue; // background stays transparent
    const color = CLASS_COLORS[CLASS_NAMES[labels[i]]];
    for (let c = 0; c < 3; c++) {
      out[4 * i + c] = Math.round((1 - alpha) * out[4 * i + c] + alpha * color[c]);
    }
  }
  return out;
}

/** Heat map on the fixed [0, 1] scale, identical across panels and sessions. */
export function renderUncertaintyHeatmap(decoded: DecodedPrediction): Uint8ClampedArray {
  const { uncertainty } = decoded;
  const out = new Uint8ClampedArray(4 * uncertainty.length);
  for (let i = 0; i < uncertainty.length; i++) {
    const [r, g, b] = heatColor(uncertainty[i]);
    out[4 * i] = r;
    out[4 * i + 1] = g;
    out[4 * i + 2] = b;
    out[4 * i + 3] = 255;
  }
  return out;
}

export interface RenderedView {
  original: Uint8ClampedArray;
  maskOverlay: Uint8ClampedArray;
  heatmap: Uint8ClampedArray;
  legend: LegendEntry[];
  seed: number;
  modelVersion: string;
  summaryLines: string[];
}

/** Build every layer for one prediction; a pure function of its inputs. */
export function renderView(decoded: DecodedPrediction, opacity: number): RenderedView {
  const original = new Uint8ClampedArray(4 * decoded.base.length);
  grayRgba(decoded.base, original);
  const summary = decoded.summary;
  const lines = [
    `mean uncertainty ${summary.mean_overall.toFixed(4)} ± ${summary.sd_overall.toFixed(4)}`,
    ...Object.entries(summary.per_class_mean).map(
      ([name, value]) => `${name}: ${(value as number).toFixed(4)}`,
    ),
  ];
  return {
    original,
    maskOverlay: renderMaskOverlay(decoded, opacity),
    heatmap: renderUncertaintyHeatmap(decoded),
    legend: legendEntries(),
    seed: decoded.seed,
    modelVersion: decoded.modelVersion,
    summaryLines: lines,
  };
}
