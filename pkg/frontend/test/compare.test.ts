import { describe, expect, it } from "vitest";

import { cellBadge, compareModels } from "../src/compare";
import { stubService } from "./fixtures";

describe("compareModels", () => {
  it("issues one call per family, all with the shared seed", async () => {
    const { client, calls } = stubService(["UNET", "ATT_UNET", "R2_UNET"]);
    const result = await compareModels(client, "img64", ["UNET", "ATT_UNET", "R2_UNET"], 8);
    expect(calls).toHaveLength(3);
    const seeds = calls.map((c) => c.request.seed);
    expect(new Set(seeds).size).toBe(1);
    expect(seeds[0]).toBe(result.seed);
    expect(result.cells.map((c) => c.family)).toEqual(["UNET", "ATT_UNET", "R2_UNET"]);
  });

  it("renders per-cell errors while other cells succeed", async () => {
    const { client } = stubService(["UNET"]); // ATT_UNET will 404
    const result = await compareModels(client, "img64", ["UNET", "ATT_UNET"], 8, 5);
    const [ok, failed] = result.cells;
    expect(ok.response).not.toBeNull();
    expect(ok.error).toBeNull();
    expect(failed.response).toBeNull();
    expect(failed.error).toContain("UnknownModel");
    expect(cellBadge(failed)).toContain("UnknownModel");
    expect(cellBadge(ok)).toContain("mean u");
  });

  it("honors an explicit seed", async () => {
    const { client, calls } = stubService();
    const result = await compareModels(client, "img64", ["UNET"], 4, 777);
    expect(result.seed).toBe(777);
    expect(calls[0].request.seed).toBe(777);
  });

  it("same shared seed twice yields identical payloads per family", async () => {
    const { client } = stubService();
    const a = await compareModels(client, "img64", ["UNET", "ATT_R2_UNET"], 4, 42);
    const b = await compareModels(client, "img64", ["UNET", "ATT_R2_UNET"], 4, 42);
    for (let i = 0; i < a.cells.length; i++) {
      expect(a.cells[i].response!.mask).toEqual(b.cells[i].response!.mask);
      expect(a.cells[i].response!.uncertainty).toEqual(b.cells[i].response!.uncertainty);
    }
  });
});
