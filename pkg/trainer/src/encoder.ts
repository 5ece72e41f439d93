/**
 * Text featurization for the trainable encoder: per-line hashed token bags,
 * mean-pooled across lines. FNV-1a-64 buckets tokens into a fixed hashed
 * vocabulary; the trainable part (the embedding matrix) lives in model.ts.
 */

export const DEFAULT_VOCAB_SIZE = 2048;

const FNV_OFFSET = 0xcbf29ce484222325n;
const FNV_PRIME = 0x100000001b3n;
const MASK64 = (1n << 64n) - 1n;

export function fnv1a64(data: Uint8Array): bigint {
  let hash = FNV_OFFSET;
  for (const byte of data) {
    hash = ((hash ^ BigInt(byte)) * FNV_PRIME) & MASK64;
  }
  return hash;
}

const encoderUtf8 = new TextEncoder();

/** ASCII-lowercase, then maximal [a-z0-9] runs — matches the scoring side. */
export function tokenize(text: string): string[] {
  const lowered = text.replace(/[A-Z]/g, (ch) =>
    String.fromCharCode(ch.charCodeAt(0) + 32),
  );
  return lowered.match(/[a-z0-9]+/g) ?? [];
}

export function bucketOf(token: string, vocabSize: number): number {
  return Number(fnv1a64(encoderUtf8.encode(token)) % BigInt(vocabSize));
}

/**
 * One fixed-length feature vector per trace text: each line becomes an
 * L2-normalized token-count vector over the hashed vocabulary, and lines
 * are mean-pooled. With a linear embedding matrix this equals mean pooling
 * the per-token embeddings of every line.
 */
export function traceFeatures(text: string, vocabSize: number): Float64Array {
  const lines = text.split("\n");
  const pooled = new Float64Array(vocabSize);
  let usedLines = 0;
  for (const line of lines) {
    const tokens = tokenize(line);
    if (tokens.length === 0) continue;
    const bag = new Float64Array(vocabSize);
    for (const token of tokens) {
      bag[bucketOf(token, vocabSize)] += 1.0;
    }
    let norm = 0;
    for (let i = 0; i < vocabSize; i++) norm += bag[i] * bag[i];
    norm = Math.sqrt(norm);
    for (let i = 0; i < vocabSize; i++) pooled[i] += bag[i] / norm;
    usedLines += 1;
  }
  if (usedLines === 0) {
    throw new Error(`trace text has no tokens: ${JSON.stringify(text.slice(0, 40))}`);
  }
  for (let i = 0; i < vocabSize; i++) pooled[i] /= usedLines;
  return pooled;
}
