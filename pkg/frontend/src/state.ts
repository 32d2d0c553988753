/** View state: everything the render pass depends on besides the response. */

import type { ActiveLayer, DecodedPrediction } from "./types";

export interface ViewState {
  modelFamily: string;
  T: number;
  overlayOpacity: number; // 0..1
  uncertaintyThreshold: number; // u* in 0..1
  activeLayer: ActiveLayer;
  /** Last decoded response; survives layer toggling without re-requesting. */
  lastPrediction: DecodedPrediction | null;
  lastSeed: number | null;
}

export function initialState(): ViewState {
  return {
    modelFamily: "ATT_R2_UNET",
    T: 50,
    overlayOpacity: 0.5,
    uncertaintyThreshold: 0.5,
    activeLayer: "both",
    lastPrediction: null,
    lastSeed: null,
  };
}

const clamp01 = (v: number) => Math.min(1, Math.max(0, v));

export function setOpacity(state: ViewState, value: number): ViewState {
  return { ...state, overlayOpacity: clamp01(value) };
}

export function setThreshold(state: ViewState, value: number): ViewState {
  return { ...state, uncertaintyThreshold: clamp01(value) };
}

export function setLayer(state: ViewState, layer: ActiveLayer): ViewState {
  // layer toggling must never clear the prediction: no re-request needed
  return { ...state, activeLayer: layer };
}

export function setPrediction(state: ViewState, decoded: DecodedPrediction): ViewState {
  return { ...state, lastPrediction: decoded, lastSeed: decoded.seed };
}
