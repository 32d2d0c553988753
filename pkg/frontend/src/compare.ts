/**
 * Side-by-side model comparison: one predict call per family, all sharing
 * one seed so differences between panels come from the models alone.
 */

import { ServiceError, type ServiceClient } from "./api";
import type { PredictResponse } from "./types";

export interface CompareCell {
  family: string;
  response: PredictResponse | null;
  error: string | null;
}

export interface CompareResult {
  seed: number;
  cells: CompareCell[];
}

export async function compareModels(
  client: ServiceClient,
  image: string,
  families: string[],
  T: number,
  seed?: number,
): Promise<CompareResult> {
  const sharedSeed = seed ?? Math.floor(Math.random() * 2 ** 31);
  const cells = await Promise.all(
    families.map(async (family): Promise<CompareCell> => {
      try {
        const response = await client.predict({
          image,
          model_family: family,
          T,
          seed: sharedSeed,
        });
        return { family, response, error: null };
      } catch (err) {
        const message =
          err instanceof ServiceError ? err.message : `unexpected: ${String(err)}`;
        return { family, response: null, error: message };
      }
    }),
  );
  return { seed: sharedSeed, cells };
}

/** Per-cell badge: the model's mean uncertainty, or its failure. */
export function cellBadge(cell: CompareCell): string {
  if (cell.error !== null) return cell.error;
  return `mean u = ${cell.response!.summary.mean_overall.toFixed(4)}`;
}
