import { readFileSync, existsSync } from 'fs';
import { gaussianStream } from './rng.js';
import { INPUT_SIZE } from './image.js';

/** Patch-embedding backbone: shared linear + tanh per patch, mean pooled.
 *
 * Weights are drawn from a stream seeded by the model identifier, so the
 * same identifier always names the same network and extraction is
 * repeatable without any checkpoint download. A local JSON checkpoint path
 * is accepted in place of an identifier for arbitrary weights.
 */

export interface BackboneSpec {
  name: string;
  patch: number;   // square patch edge, must divide the input size
  width: number;   // pooled feature width d
  classes: number; // sigmoid head outputs K
}

const REGISTRY: Record<string, Omit<BackboneSpec, 'name'>> = {
  'seeded/patchnet-64': { patch: 16, width: 64, classes: 16 },
  'seeded/patchnet-128': { patch: 16, width: 128, classes: 32 },
  'seeded/patchnet-256': { patch: 32, width: 256, classes: 32 },
};

export function knownModels(): string[] {
  return Object.keys(REGISTRY);
}

export class Backbone {
  readonly spec: BackboneSpec;
  readonly w1: Float64Array; // width x (patch*patch*3)
  readonly b1: Float64Array;
  readonly wp: Float64Array; // classes x width
  readonly bp: Float64Array;

  constructor(spec: BackboneSpec, w1: Float64Array, b1: Float64Array,
              wp: Float64Array, bp: Float64Array) {
    const inDim = spec.patch * spec.patch * 3;
    if (INPUT_SIZE % spec.patch !== 0) {
      throw new Error(`patch ${spec.patch} does not divide input size ${INPUT_SIZE}`);
    }
    if (w1.length !== spec.width * inDim || b1.length !== spec.width ||
        wp.length !== spec.classes * spec.width || bp.length !== spec.classes) {
      throw new Error(`weight shapes do not match spec for ${spec.name}`);
    }
    this.spec = spec;
    this.w1 = w1;
    this.b1 = b1;
    this.wp = wp;
    this.bp = bp;
  }

  static seeded(name: string): Backbone {
    const base = REGISTRY[name];
    if (!base) throw new Error(`unknown model identifier ${JSON.stringify(name)}`);
    const spec = { name, ...base };
    const inDim = spec.patch * spec.patch * 3;
    return new Backbone(spec,
                        drawMatrix(`${name}:w1`, spec.width * inDim, inDim),
                        drawMatrix(`${name}:b1`, spec.width, inDim),
                        drawMatrix(`${name}:wp`, spec.classes * spec.width, spec.width),
                        drawMatrix(`${name}:bp`, spec.classes, spec.width));
  }

  static fromCheckpoint(path: string): Backbone {
    const raw = JSON.parse(readFileSync(path, 'utf8'));
    const spec = { name: raw.name ?? path, patch: raw.patch, width: raw.width,
                   classes: raw.classes };
    for (const key of ['patch', 'width', 'classes']) {
      if (!Number.isInteger(raw[key]) || raw[key] < 1) {
        throw new Error(`checkpoint ${path}: bad ${key}`);
      }
    }
    return new Backbone(spec, Float64Array.from(raw.w1), Float64Array.from(raw.b1),
                        Float64Array.from(raw.wp), Float64Array.from(raw.bp));
  }

  /** Registry identifier, or a path to a JSON checkpoint. */
  static fromIdentifier(model: string): Backbone {
    if (model in REGISTRY) return Backbone.seeded(model);
    if (existsSync(model)) return Backbone.fromCheckpoint(model);
    throw new Error(`unknown model identifier ${JSON.stringify(model)}`);
  }

  /** Pooled pre-logit features for one prepared input. */
  embed(input: Float64Array): Float64Array {
    const { patch, width } = this.spec;
    const grid = INPUT_SIZE / patch;
    const inDim = patch * patch * 3;
    if (input.length !== INPUT_SIZE * INPUT_SIZE * 3) {
      throw new Error(`input length ${input.length}, expected ${INPUT_SIZE * INPUT_SIZE * 3}`);
    }
    const pooled = new Float64Array(width);
    const flat = new Float64Array(inDim);
    for (let py = 0; py < grid; py++) {
      for (let px = 0; px < grid; px++) {
        let k = 0;
        for (let y = 0; y < patch; y++) {
          const row = ((py * patch + y) * INPUT_SIZE + px * patch) * 3;
          for (let i = 0; i < patch * 3; i++) flat[k++] = input[row + i];
        }
        for (let f = 0; f < width; f++) {
          let acc = this.b1[f];
          const off = f * inDim;
          for (let i = 0; i < inDim; i++) acc += this.w1[off + i] * flat[i];
          pooled[f] += Math.tanh(acc);
        }
      }
    }
    for (let f = 0; f < width; f++) pooled[f] /= grid * grid;
    return pooled;
  }

  /** Per-class sigmoid marginals from the pooled features, clipped to [0, 1]. */
  predictProbs(pooled: Float64Array): Float64Array {
    const { width, classes } = this.spec;
    const out = new Float64Array(classes);
    for (let c = 0; c < classes; c++) {
      let acc = this.bp[c];
      for (let f = 0; f < width; f++) acc += this.wp[c * width + f] * pooled[f];
      out[c] = Math.min(Math.max(1 / (1 + Math.exp(-acc)), 0), 1);
    }
    return out;
  }
}

function drawMatrix(name: string, size: number, fanIn: number): Float64Array {
  const next = gaussianStream(name);
  const scale = 1 / Math.sqrt(fanIn);
  const out = new Float64Array(size);
  for (let i = 0; i < size; i++) out[i] = next() * scale;
  return out;
}
