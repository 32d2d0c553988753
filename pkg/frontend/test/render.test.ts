import { createHash } from "node:crypto";
import { describe, expect, it } from "vitest";

import { heatColor, legendEntries, renderMaskOverlay, renderUncertaintyHeatmap, renderView } from "../src/render";
import { CLASS_NAMES } from "../src/types";
import { fixtureDecoded, SIZE } from "./fixtures";

const sha = (buf: Uint8ClampedArray) => createHash("sha256").update(Buffer.from(buf)).digest("hex");

describe("legend", () => {
  it("always lists the five classes with their palette colors", () => {
    const legend = legendEntries();
    expect(legend).toHaveLength(5);
    expect(legend.map((e) => e.name)).toEqual([...CLASS_NAMES]);
    expect(legend.map((e) => e.id)).toEqual([0, 1, 2, 3, 4]);
  });

  it("appears in every rendered view", () => {
    const view = renderView(fixtureDecoded(), 0.5);
    expect(view.legend).toHaveLength(5);
  });
});

describe("mask overlay", () => {
  it("renders pixel-identically for the same decoded payload", () => {
    // same seed means the service returns identical bytes, so the decoded
    // payload is identical and the overlay must match pixel for pixel
    const a = renderMaskOverlay(fixtureDecoded(7), 0.5);
    const b = renderMaskOverlay(fixtureDecoded(7), 0.5);
    expect(sha(a)).toEqual(sha(b));
    expect(sha(a)).toMatchSnapshot();
  });

  it("leaves background pixels as the grayscale base", () => {
    const decoded = fixtureDecoded();
    const rgba = renderMaskOverlay(decoded, 1.0);
    const corner = 0; // (0, 0) is BG in the fixture
    const gray = Math.round(decoded.base[corner] * 255);
    expect([rgba[0], rgba[1], rgba[2]]).toEqual([gray, gray, gray]);
  });

  it("respects opacity 0 (pure base) and clamps out-of-range values", () => {
    const decoded = fixtureDecoded();
    const transparent = renderMaskOverlay(decoded, 0);
    const clamped = renderMaskOverlay(decoded, 42);
    const full = renderMaskOverlay(decoded, 1);
    expect(sha(clamped)).toEqual(sha(full));
    const i = 5 * SIZE + 5; // a CZ pixel
    const gray = Math.round(decoded.base[i] * 255);
    expect(transparent[4 * i]).toEqual(gray);
  });
});

describe("uncertainty heat map", () => {
  it("uses a fixed [0,1] scale so identical maps render identically", () => {
    const a = renderUncertaintyHeatmap(fixtureDecoded());
    const b = renderUncertaintyHeatmap(fixtureDecoded());
    expect(sha(a)).toEqual(sha(b));
    expect(sha(a)).toMatchSnapshot();
  });

  it("maps 0 and 1 to the ends of the ramp regardless of the data range", () => {
    expect(heatColor(0)).toEqual([68, 1, 84]);
    expect(heatColor(1)).toEqual([253, 231, 37]);
    // the scale does not stretch to the map's own maximum
    const low = fixtureDecoded(7, 0.4);
    const rgba = renderUncertaintyHeatmap(low);
    const edge = 2 * SIZE + 2; // an edge pixel at u = 0.4
    expect([rgba[4 * edge], rgba[4 * edge + 1], rgba[4 * edge + 2]]).toEqual(heatColor(0.4));
  });

  it("is monotone along the ramp", () => {
    // green channel strictly grows over the viridis ramp
    const g = [0, 0.25, 0.5, 0.75, 1].map((u) => heatColor(u)[1]);
    for (let i = 1; i < g.length; i++) expect(g[i]).toBeGreaterThan(g[i - 1]);
  });
});

describe("view model", () => {
  it("exposes the echoed seed and summary lines", () => {
    const view = renderView(fixtureDecoded(99), 0.5);
    expect(view.seed).toBe(99);
    expect(view.summaryLines[0]).toContain("0.2031");
    expect(view.modelVersion).toBe("fixture-v1");
  });
});
