/**
 * Embedding models behind a single interface.
 *
 * The default model is a deterministic seeded projection: it needs no
 * weights on disk, loads instantly, and gives the full service contract
 * (fixed 512-length vectors, byte-for-byte determinism) everything it
 * needs for development and CI.  A real CLIP model can be slotted in
 * behind the same interface when its weights are available; requesting
 * it without the runtime installed leaves the service in a failed state
 * that /health reports honestly.
 */

import type { RgbImage } from "./png.js";

export const VECTOR_LENGTH = 512;

export interface EmbedModel {
  readonly id: string;
  readonly vectorLength: number;
  embed(image: RgbImage): number[];
}

export type ModelState =
  | { status: "loading" }
  | { status: "ready"; model: EmbedModel }
  | { status: "failed"; reason: string };

/** Deterministic PRNG so the projection matrix is identical everywhere. */
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

const GRID = 16; // images are pooled to GRID x GRID x 3 before projection
const CELLS = GRID * GRID * 3 + 1; // trailing bias cell so uniform images
// of different brightness do not project to parallel vectors

export class TestProjectionModel implements EmbedModel {
  readonly id = "test-projection-512";
  readonly vectorLength = VECTOR_LENGTH;
  private readonly matrix: Float64Array;

  constructor(seed = 0x5eed) {
    const rand = mulberry32(seed);
    this.matrix = new Float64Array(VECTOR_LENGTH * CELLS);
    for (let i = 0; i < this.matrix.length; i++) this.matrix[i] = rand() * 2 - 1;
  }

  embed(image: RgbImage): number[] {
    const pooled = this.pool(image);
    const out = new Array<number>(VECTOR_LENGTH);
    const cells = pooled.length;
    let norm = 0;
    for (let row = 0; row < VECTOR_LENGTH; row++) {
      let acc = 0;
      const base = row * cells;
      for (let c = 0; c < cells; c++) acc += this.matrix[base + c] * pooled[c];
      out[row] = acc;
      norm += acc * acc;
    }
    norm = Math.sqrt(norm);
    if (norm > 0) for (let row = 0; row < VECTOR_LENGTH; row++) out[row] /= norm;
    return out;
  }

  /** Box-average the image down to GRID x GRID, channels interleaved. */
  private pool(image: RgbImage): Float64Array {
    const { width, height, pixels } = image;
    const pooled = new Float64Array(CELLS);
    pooled[CELLS - 1] = 1; // bias
    for (let gy = 0; gy < GRID; gy++) {
      const y0 = Math.floor((gy * height) / GRID);
      const y1 = Math.max(y0 + 1, Math.floor(((gy + 1) * height) / GRID));
      for (let gx = 0; gx < GRID; gx++) {
        const x0 = Math.floor((gx * width) / GRID);
        const x1 = Math.max(x0 + 1, Math.floor(((gx + 1) * width) / GRID));
        let r = 0;
        let g = 0;
        let b = 0;
        for (let y = y0; y < y1; y++) {
          for (let x = x0; x < x1; x++) {
            const at = (y * width + x) * 3;
            r += pixels[at];
            g += pixels[at + 1];
            b += pixels[at + 2];
          }
        }
        const count = (y1 - y0) * (x1 - x0);
        const cell = (gy * GRID + gx) * 3;
        pooled[cell] = r / count / 255;
        pooled[cell + 1] = g / count / 255;
        pooled[cell + 2] = b / count / 255;
      }
    }
    return pooled;
  }
}

/**
 * Resolve the model named by SIDECAR_MODEL ("test-projection" default).
 * "clip" requires an inference runtime that is not bundled; without it
 * the state is "failed" and the service answers 503 with the reason.
 */
export function loadModel(name?: string): ModelState {
  const which = name ?? "test-projection";
  if (which === "test-projection") {
    return { status: "ready", model: new TestProjectionModel() };
  }
  if (which === "clip") {
    return { status: "failed", reason: "clip weights/runtime not installed" };
  }
  return { status: "failed", reason: `unknown model "${which}"` };
}
