/**
 * Labeled-pair dataset loading. Reads the pairs JSONL emitted by the suite
 * generator; trace paths resolve relative to the pairs file (or an explicit
 * trace directory override).
 */
import * as fs from "node:fs";
import * as path from "node:path";

import { ExecutionTrace, renderTrace } from "./canonical.js";

export class SchemaError extends Error {}
export class MissingTrace extends Error {}

export interface PairExample {
  textA: string;
  textB: string;
  /** similar -> 1, dissimilar -> 0 */
  label: number;
}

function loadTrace(filePath: string): ExecutionTrace {
  if (!fs.existsSync(filePath)) {
    throw new MissingTrace(`trace file not found: ${filePath}`);
  }
  const data = JSON.parse(fs.readFileSync(filePath, "utf-8"));
  if (typeof data.taskId !== "string" || !Array.isArray(data.steps)) {
    throw new SchemaError(`not an execution trace: ${filePath}`);
  }
  return data as ExecutionTrace;
}

export function buildPairDataset(
  pairsFile: string,
  traceDir?: string,
): PairExample[] {
  const base = traceDir ?? path.dirname(pairsFile);
  const lines = fs
    .readFileSync(pairsFile, "utf-8")
    .split("\n")
    .filter((line) => line.trim().length > 0);
  const examples: PairExample[] = [];
  for (const [index, line] of lines.entries()) {
    let row: { a?: string; b?: string; label?: string };
    try {
      row = JSON.parse(line);
    } catch (err) {
      throw new SchemaError(`${pairsFile}:${index + 1}: not JSON: ${err}`);
    }
    if (!row.a || !row.b || !row.label) {
      throw new SchemaError(`${pairsFile}:${index + 1}: needs a, b, label`);
    }
    if (row.label !== "similar" && row.label !== "dissimilar") {
      throw new SchemaError(
        `${pairsFile}:${index + 1}: bad label ${JSON.stringify(row.label)}`,
      );
    }
    examples.push({
      textA: renderTrace(loadTrace(path.resolve(base, row.a))),
      textB: renderTrace(loadTrace(path.resolve(base, row.b))),
      label: row.label === "similar" ? 1 : 0,
    });
  }
  return examples;
}
