/** DOM wiring for the review page: upload, layers, threshold, comparison. */

import { httpClient, PanelRequests, ServiceError } from "./api";
import { cellBadge, compareModels } from "./compare";
import { decodeResponse, readUpload } from "./decode";
import { thresholdReview } from "./regions";
import { renderView } from "./render";
import { initialState, setLayer, setOpacity, setPrediction, setThreshold } from "./state";
import type { ActiveLayer, DecodedPrediction } from "./types";

const client = httpClient();
const panel = new PanelRequests();
let state = initialState();
let upload: { base64: string; gray: Float32Array } | null = null;

const $ = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;

function paint(canvas: HTMLCanvasElement, rgba: Uint8ClampedArray, w: number, h: number) {
  canvas.width = w;
  canvas.height = h;
  const ctx = canvas.getContext("2d")!;
  // fresh copy pins the buffer type to a plain ArrayBuffer for ImageData
  ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), w, h), 0, 0);
}

function showError(message: string | null) {
  const banner = $("error-banner");
  banner.textContent = message ?? "";
  banner.style.display = message ? "block" : "none";
}

function renderCurrent() {
  const decoded = state.lastPrediction;
  if (!decoded) return;
  const view = renderView(decoded, state.overlayOpacity);
  paint($("canvas-original"), view.original, decoded.width, decoded.height);
  const maskVisible = state.activeLayer !== "uncertainty";
  const heatVisible = state.activeLayer !== "mask";
  $("canvas-mask").style.display = maskVisible ? "block" : "none";
  $("canvas-heat").style.display = heatVisible ? "block" : "none";
  if (maskVisible) paint($("canvas-mask"), view.maskOverlay, decoded.width, decoded.height);
  if (heatVisible) paint($("canvas-heat"), view.heatmap, decoded.width, decoded.height);

  $("legend").innerHTML = view.legend
    .map(
      (e) =>
        `<li><span class="swatch" style="background: rgb(${e.color.join(",")})"></span>` +
        `${e.name}</li>`,
    )
    .join("");
  $("summary").textContent =
    `${view.summaryLines.join(" | ")} | seed ${view.seed} | model ${view.modelVersion}`;
  renderRegions(decoded);
}

function renderRegions(decoded: DecodedPrediction) {
  const regions = thresholdReview(
    decoded.uncertainty,
    decoded.width,
    decoded.height,
    state.uncertaintyThreshold,
  );
  $("regions").innerHTML = regions
    .slice(0, 20)
    .map(
      (r) =>
        `<li>area ${r.area}px, mean u ${r.meanUncertainty.toFixed(3)}, ` +
        `box [${r.bbox.join(", ")}]</li>`,
    )
    .join("");
  $("region-count").textContent = `${regions.length} region(s) above u* = ` +
    state.uncertaintyThreshold.toFixed(2);
}

async function predictCurrent(seed?: number) {
  if (!upload) return;
  showError(null);
  try {
    const result = await panel.run(() =>
      client.predict({
        image: upload!.base64,
        model_family: state.modelFamily,
        T: state.T,
        seed,
      }),
    );
    if (result === null) return; // superseded by a newer request
    const decoded = await decodeResponse(upload.gray, result);
    state = setPrediction(state, decoded);
    renderCurrent();
  } catch (err) {
    // never silently retry with a new seed: surface and keep the old view hidden
    $("canvas-mask").style.display = "none";
    $("canvas-heat").style.display = "none";
    showError(err instanceof ServiceError ? err.message : String(err));
  }
}

async function runComparison() {
  if (!upload) return;
  const families = await client.models().then(
    (entries) => entries.map((e) => e.family),
    () => [],
  );
  if (families.length < 2) {
    showError("need at least 2 loaded models to compare");
    return;
  }
  const result = await compareModels(client, upload.base64, families, state.T);
  const grid = $("compare-grid");
  grid.innerHTML = "";
  for (const cell of result.cells) {
    const div = document.createElement("div");
    div.className = "compare-cell";
    const title = document.createElement("h4");
    title.textContent = `${cell.family} — ${cellBadge(cell)}`;
    div.appendChild(title);
    if (cell.response !== null) {
      const decoded = await decodeResponse(upload.gray, cell.response);
      const view = renderView(decoded, state.overlayOpacity);
      for (const rgba of [view.maskOverlay, view.heatmap]) {
        const canvas = document.createElement("canvas");
        paint(canvas, rgba, decoded.width, decoded.height);
        div.appendChild(canvas);
      }
    }
    grid.appendChild(div);
  }
  $("compare-note").textContent = `shared seed ${result.seed}`;
}

export function wirePage() {
  $("file-input").addEventListener("change", async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    upload = await readUpload(file);
    await predictCurrent();
  });
  $("model-select").addEventListener("change", (ev) => {
    state.modelFamily = (ev.target as HTMLSelectElement).value;
  });
  $("t-input").addEventListener("change", (ev) => {
    state.T = Number((ev.target as HTMLInputElement).value);
  });
  $("opacity-input").addEventListener("input", (ev) => {
    state = setOpacity(state, Number((ev.target as HTMLInputElement).value));
    renderCurrent();
  });
  $("threshold-input").addEventListener("input", (ev) => {
    state = setThreshold(state, Number((ev.target as HTMLInputElement).value));
    if (state.lastPrediction) renderRegions(state.lastPrediction);
  });
  for (const layer of ["mask", "uncertainty", "both"] as ActiveLayer[]) {
    $(`layer-${layer}`).addEventListener("click", () => {
      state = setLayer(state, layer);
      renderCurrent();
    });
  }
  $("repredict").addEventListener("click", () => predictCurrent(state.lastSeed ?? undefined));
  $("new-seed").addEventListener("click", () => predictCurrent());
  $("compare").addEventListener("click", () => void runComparison());

  client.models().then((entries) => {
    const select = $("model-select") as HTMLSelectElement;
    select.innerHTML = entries
      .map((e) => `<option value="${e.family}">${e.family}</option>`)
      .join("");
    if (entries.some((e) => e.family === state.modelFamily)) {
      select.value = state.modelFamily;
    } else if (entries.length) {
      state.modelFamily = entries[0].family;
    }
  }, () => showError("service unreachable"));
}

if (typeof document !== "undefined" && document.getElementById("file-input")) {
  wirePage();
}
