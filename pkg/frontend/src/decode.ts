/**
 * Browser-side decoding of the service payloads via canvas.
 *
 * This is the only module that needs a DOM; everything downstream works on
 * the DecodedPrediction arrays, which tests construct directly.
 */

import type { DecodedPrediction, PredictResponse } from "./types";
import { CLASS_COLORS, CLASS_NAMES } from "./types";

function loadImage(b64: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error("undecodable image payload"));
    img.src = `data:image/png;base64,${b64}`;
  });
}

function drawToImageData(img: HTMLImageElement): ImageData {
  const canvas = document.createElement("canvas");
  canvas.width = img.naturalWidth;
  canvas.height = img.naturalHeight;
  const ctx = canvas.getContext("2d", { willReadFrequently: true })!;
  ctx.drawImage(img, 0, 0);
  return ctx.getImageData(0, 0, canvas.width, canvas.height);
}

/** Map palette RGB back to class ids; unknown colors fall back to BG. */
function rgbaToLabels(data: ImageData): Uint8Array {
  const byColor = new Map<number, number>();
  CLASS_NAMES.forEach((name, id) => {
    const [r, g, b] = CLASS_COLORS[name];
    byColor.set((r << 16) | (g << 8) | b, id);
  });
  const out = new Uint8Array(data.width * data.height);
  for (let i = 0; i < out.length; i++) {
    const key =
      (data.data[4 * i] << 16) | (data.data[4 * i + 1] << 8) | data.data[4 * i + 2];
    out[i] = byColor.get(key) ?? 0;
  }
  return out;
}

/**
 * 16-bit grayscale PNGs render into canvas as 8-bit; the recovered
 * uncertainty therefore has 1/255 resolution, plenty for display and
 * threshold review.
 */
function rgbaToUnit(data: ImageData): Float32Array {
  const out = new Float32Array(data.width * data.height);
  for (let i = 0; i < out.length; i++) {
    out[i] = data.data[4 * i] / 255;
  }
  return out;
}

export async function decodeResponse(
  uploadedBase: Float32Array,
  response: PredictResponse,
): Promise<DecodedPrediction> {
  const [maskImg, uncImg] = await Promise.all([
    loadImage(response.mask),
    loadImage(response.uncertainty),
  ]);
  const mask = drawToImageData(maskImg);
  const unc = drawToImageData(uncImg);
  return {
    width: mask.width,
    height: mask.height,
    labels: rgbaToLabels(mask),
    uncertainty: rgbaToUnit(unc),
    base: uploadedBase,
    summary: response.summary,
    modelVersion: response.model_version,
    seed: response.seed,
  };
}

/** Read an uploaded file into a grayscale [0, 1] grid plus its base64 bytes. */
export async function readUpload(
  file: File,
): Promise<{ base64: string; gray: Float32Array; width: number; height: number }> {
  const bytes = new Uint8Array(await file.arrayBuffer());
  let binary = "";
  bytes.forEach((b) => (binary += String.fromCharCode(b)));
  const base64 = btoa(binary);
  const img = await loadImage(base64);
  const data = drawToImageData(img);
  const gray = new Float32Array(data.width * data.height);
  for (let i = 0; i < gray.length; i++) {
    gray[i] =
      (0.299 * data.data[4 * i] + 0.587 * data.data[4 * i + 1] + 0.114 * data.data[4 * i + 2]) /
      255;
  }
  return { base64, gray, width: data.width, height: data.height };
}
