/**
 * Threshold review: connected regions of high uncertainty.
 *
 * Runs client-side on the decoded uncertainty grid so dragging the
 * threshold slider costs no service round-trip.
 */

import type { RegionInfo } from "./types";

/**
 * Connected components (4-neighborhood) of pixels with uncertainty >= u*,
 * ordered by area descending, then mean uncertainty descending.
 */
export function thresholdReview(
  uncertainty: Float32Array,
  width: number,
  height: number,
  threshold: number,
): RegionInfo[] {
  const visited = new Uint8Array(uncertainty.length);
  const regions: RegionInfo[] = [];
  const stack: number[] = [];

  for (let start = 0; start < uncertainty.length; start++) {
    if (visited[start] || uncertainty[start] < threshold) continue;
    let area = 0;
    let sum = 0;
    let x0 = width, y0 = height, x1 = -1, y1 = -1;
    stack.push(start);
    visited[start] = 1;
    while (stack.length) {
      const idx = stack.pop()!;
      const x = idx % width;
      const y = (idx - x) / width;
      area += 1;
      sum += uncertainty[idx];
      if (x < x0) x0 = x;
      if (y < y0) y0 = y;
      if (x > x1) x1 = x;
      if (y > y1) y1 = y;
      const neighbors = [
        x > 0 ? idx - 1 : -1,
        x < width - 1 ? idx + 1 : -1,
        y > 0 ? idx - width : -1,
        y < height - 1 ? idx + width : -1,
      ];
      for (const n of neighbors) {
        if (n >= 0 && !visited[n] && uncertainty[n] >= threshold) {
          visited[n] = 1;
          stack.push(n);
        }
      }
    }
    regions.push({
      area,
      meanUncertainty: sum / area,
      bbox: [x0, y0, x1, y1],
    });
  }

  regions.sort((a, b) => b.area - a.area || b.meanUncertainty - a.meanUncertainty);
  return regions;
}
