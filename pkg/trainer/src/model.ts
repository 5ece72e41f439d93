/**
 * The trainable sentence encoder: a hashed-vocabulary embedding matrix with
 * mean pooling (applied in feature space) and L2 normalization — the same
 * shape as a mean-pooled transformer sentence encoder, small enough to
 * fine-tune deterministically on a laptop CPU.
 *
 * Checkpoint format: a directory with model.json (metadata) and weights.bin
 * (row-major Float64, little-endian).
 */
import * as fs from "node:fs";
import * as path from "node:path";

import { DEFAULT_VOCAB_SIZE, traceFeatures } from "./encoder.js";
import { gaussian, mulberry32 } from "./rng.js";

export const EMBEDDING_DIM = 768;

export const BUILTIN_ENCODER = "hash-v1";

export class BadCheckpoint extends Error {}

export interface ModelMeta {
  name: string;
  vocabSize: number;
  dim: number;
  initSeed: number;
}

export class EmbeddingModel {
  /** weights[i * dim + j]: embedding of vocabulary bucket i. */
  weights: Float64Array;

  constructor(
    public readonly vocabSize: number,
    public readonly dim: number,
    weights?: Float64Array,
    public readonly meta: Partial<ModelMeta> = {},
  ) {
    this.weights = weights ?? new Float64Array(vocabSize * dim);
  }

  static fresh(seed: number, vocabSize = DEFAULT_VOCAB_SIZE, dim = EMBEDDING_DIM): EmbeddingModel {
    const rng = mulberry32(seed);
    const weights = new Float64Array(vocabSize * dim);
    const scale = 1.0 / Math.sqrt(dim);
    for (let i = 0; i < weights.length; i++) {
      weights[i] = gaussian(rng) * scale;
    }
    return new EmbeddingModel(vocabSize, dim, weights, {
      name: BUILTIN_ENCODER,
      vocabSize,
      dim,
      initSeed: seed,
    });
  }

  /** Pre-normalization projection u = W^T x. */
  project(features: Float64Array): Float64Array {
    const out = new Float64Array(this.dim);
    for (let i = 0; i < this.vocabSize; i++) {
      const weight = features[i];
      if (weight === 0) continue;
      const row = i * this.dim;
      for (let j = 0; j < this.dim; j++) {
        out[j] += weight * this.weights[row + j];
      }
    }
    return out;
  }

  /** Unit-norm embedding of one rendered trace text. */
  embedText(text: string): Float64Array {
    const u = this.project(traceFeatures(text, this.vocabSize));
    let norm = 0;
    for (let j = 0; j < this.dim; j++) norm += u[j] * u[j];
    norm = Math.sqrt(norm);
    if (norm === 0) throw new Error("embedding collapsed to the zero vector");
    for (let j = 0; j < this.dim; j++) u[j] /= norm;
    return u;
  }

  save(dir: string, extraMeta: Record<string, unknown> = {}): void {
    fs.mkdirSync(dir, { recursive: true });
    const meta = {
      name: this.meta.name ?? BUILTIN_ENCODER,
      vocabSize: this.vocabSize,
      dim: this.dim,
      initSeed: this.meta.initSeed ?? 0,
      ...extraMeta,
    };
    fs.writeFileSync(path.join(dir, "model.json"), JSON.stringify(meta, null, 2) + "\n");
    fs.writeFileSync(path.join(dir, "weights.bin"), Buffer.from(this.weights.buffer.slice(0)));
  }

  static load(dir: string): EmbeddingModel {
    const metaPath = path.join(dir, "model.json");
    const weightsPath = path.join(dir, "weights.bin");
    if (!fs.existsSync(metaPath) || !fs.existsSync(weightsPath)) {
      throw new BadCheckpoint(`not a checkpoint directory: ${dir}`);
    }
    const meta = JSON.parse(fs.readFileSync(metaPath, "utf-8")) as ModelMeta;
    const raw = fs.readFileSync(weightsPath);
    const weights = new Float64Array(raw.buffer, raw.byteOffset, raw.byteLength / 8);
    if (weights.length !== meta.vocabSize * meta.dim) {
      throw new BadCheckpoint(
        `weights length ${weights.length} does not match ${meta.vocabSize}x${meta.dim}`,
      );
    }
    return new EmbeddingModel(meta.vocabSize, meta.dim, new Float64Array(weights), meta);
  }
}

/**
 * Resolve a base checkpoint name: an existing checkpoint directory loads as
 * a warm start; the built-in encoder name initializes fresh weights. Named
 * pretrained checkpoints (the hosted sentence encoders) need network access
 * and are rejected with guidance when absent.
 */
export function resolveBaseCheckpoint(name: string, seed: number): EmbeddingModel {
  if (fs.existsSync(path.join(name, "model.json"))) {
    return EmbeddingModel.load(name);
  }
  if (name === BUILTIN_ENCODER) {
    return EmbeddingModel.fresh(seed);
  }
  throw new BadCheckpoint(
    `checkpoint ${JSON.stringify(name)} is not available locally; ` +
      `pass a checkpoint directory or the built-in ${JSON.stringify(BUILTIN_ENCODER)}`,
  );
}

export function cosine(a: Float64Array, b: Float64Array): number {
  let dot = 0;
  for (let i = 0; i < a.length; i++) dot += a[i] * b[i];
  return dot;
}
