/** Stub service and decoded fixtures driving the UI tests. */

import type { ServiceClient } from "../src/api";
import { ServiceError } from "../src/api";
import type {
  DecodedPrediction,
  ModelEntry,
  PredictRequest,
  PredictResponse,
  UncertaintySummary,
} from "../src/types";

export const SIZE = 16;

export function fixtureSummary(): UncertaintySummary {
  return {
    mean_overall: 0.2031,
    sd_overall: 0.11,
    per_class_mean: { BG: 0.05, CZ: 0.31, PZ: 0.28, TZ: 0.44, TUM: 0.52 },
    per_class_sd: { BG: 0.01, CZ: 0.04, PZ: 0.05, TZ: 0.06, TUM: 0.07 },
    grouping: "by_prediction",
  };
}

/**
 * A deterministic decoded prediction: nested square zones with elevated
 * uncertainty along their edges, mimicking what the service returns after
 * PNG decoding.
 */
export function fixtureDecoded(seed = 7, maxUncertainty = 0.9): DecodedPrediction {
  const labels = new Uint8Array(SIZE * SIZE);
  const uncertainty = new Float32Array(SIZE * SIZE);
  const base = new Float32Array(SIZE * SIZE);
  for (let y = 0; y < SIZE; y++) {
    for (let x = 0; x < SIZE; x++) {
      const i = y * SIZE + x;
      const inOuter = x >= 2 && x < 14 && y >= 2 && y < 14;
      const inMid = x >= 4 && x < 12 && y >= 4 && y < 12;
      const inInner = x >= 6 && x < 10 && y >= 6 && y < 10;
      labels[i] = inInner ? 3 : inMid ? 1 : inOuter ? 2 : 0;
      base[i] = labels[i] / 8 + 0.1;
      const onEdge =
        inOuter !== (x >= 3 && x < 13 && y >= 3 && y < 13) ||
        inMid !== (x >= 5 && x < 11 && y >= 5 && y < 11);
      uncertainty[i] = onEdge ? maxUncertainty : 0.05;
    }
  }
  return {
    width: SIZE,
    height: SIZE,
    labels,
    uncertainty,
    base,
    summary: fixtureSummary(),
    modelVersion: "fixture-v1",
    seed,
  };
}

/** Two disjoint high-uncertainty blobs at distinct levels. */
export function twoBlobMap(): Float32Array {
  const u = new Float32Array(SIZE * SIZE).fill(0.1);
  for (let y = 1; y < 4; y++)
    for (let x = 1; x < 4; x++) u[y * SIZE + x] = 0.9; // 3x3 strong blob
  for (let y = 10; y < 12; y++)
    for (let x = 10; x < 12; x++) u[y * SIZE + x] = 0.6; // 2x2 weaker blob
  return u;
}

export interface StubCall {
  request: PredictRequest;
}

/**
 * Stub service: responses are a pure function of (model_family, seed), so
 * repeated calls with one seed return identical payloads.
 */
export function stubService(families: string[] = ["UNET", "ATT_R2_UNET"]): {
  client: ServiceClient;
  calls: StubCall[];
} {
  const calls: StubCall[] = [];
  const client: ServiceClient = {
    async predict(req: PredictRequest): Promise<PredictResponse> {
      calls.push({ request: req });
      if (req.model_family && !families.includes(req.model_family)) {
        throw new ServiceError(404, "UnknownModel", `no model for ${req.model_family}`);
      }
      const seed = req.seed ?? 1234;
      return {
        mask: `mask-${req.model_family}-${seed}`,
        mean_probs_available: true,
        uncertainty: `unc-${req.model_family}-${seed}`,
        summary: fixtureSummary(),
        model_version: `${req.model_family}-v1`,
        seed,
        T: req.T ?? 50,
      };
    },
    async models(): Promise<ModelEntry[]> {
      return families.map((family) => ({
        family,
        version: `${family}-v1`,
        parameter_count: 1000,
        dropout_rate: 0.3,
      }));
    },
    async health() {
      return { status: "ok", models_loaded: families.length, uptime_s: 1 };
    },
  };
  return { client, calls };
}
