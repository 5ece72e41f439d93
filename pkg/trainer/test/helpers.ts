/** Shared fixtures: synthetic base traces plus suite generation through the
 * reference pipeline's CLI (its labeled-pairs format is the only coupling). */
import { execFileSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { ExecutionTrace } from "../src/canonical.js";
import { mulberry32, Rng } from "../src/rng.js";

export const PYTHON = process.env.TRACESMITH_PY ?? "python3";

const NOUNS = (
  "revenue margin forecast ledger invoice shipment manifest carrier payload " +
  "warranty appraisal tenant parcel zoning permit docket verdict plaintiff " +
  "dosage specimen assay titration reagent culture genome allele enzyme " +
  "syllabus enrollment transcript bursar registrar thesis rubric cohort"
).split(" ");

function pick<T>(rng: Rng, items: readonly T[]): T {
  return items[Math.floor(rng() * items.length)];
}

export function makeBaseTraces(seed: number, nTasks = 8): ExecutionTrace[] {
  const rng = mulberry32(seed);
  const traces: ExecutionTrace[] = [];
  for (let t = 0; t < nTasks; t++) {
    const pool = Array.from({ length: 6 }, () => pick(rng, NOUNS));
    const steps = [
      {
        goal: `Navigate to https://${pool[0]}.example.com/${pool[1]}`,
        action: "navigate",
        attributes: {},
      },
    ];
    const nSteps = 5 + Math.floor(rng() * 5);
    for (let i = 0; i < nSteps; i++) {
      const w1 = pick(rng, pool);
      const w2 = pick(rng, pool);
      const label = `${w1[0].toUpperCase()}${w1.slice(1)} ${w2[0].toUpperCase()}${w2.slice(1)}`;
      const section = pick(rng, pool);
      const verb = pick(rng, ["click", "click", "click", "type", "select", "extract"]);
      const goal =
        verb === "type"
          ? `Enter '${pick(rng, pool)}-${Math.floor(rng() * 99)}' into '${label}' in the ${section} panel`
          : `Click on the element '${label}' in the ${section} panel`;
      steps.push({
        goal,
        action: verb,
        attributes: { "data-testid": `${w1}-${w2}`, "aria-label": label },
      });
    }
    traces.push({ taskId: `task-${t}`, steps, meta: {} });
  }
  return traces;
}

export interface SuiteFixture {
  dir: string;
  pairsFile: string;
}

export function runPrimaryCli(args: string[], env: Record<string, string> = {}): string {
  return execFileSync(PYTHON, ["-m", "tracesmith", ...args], {
    encoding: "utf-8",
    env: { ...process.env, ...env },
  });
}

/** Generate a labeled suite with the reference CLI; cached per (seed, n). */
export function generateSuite(seed: number, nPerTrace: number): SuiteFixture {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "trainer-suite-"));
  const baseDir = path.join(dir, "base");
  fs.mkdirSync(baseDir);
  for (const [i, trace] of makeBaseTraces(seed).entries()) {
    fs.writeFileSync(
      path.join(baseDir, `base_${i}.json`),
      JSON.stringify(trace, null, 2) + "\n",
    );
  }
  const pairsFile = path.join(dir, "pairs.jsonl");
  runPrimaryCli([
    "suite", "generate",
    "--base", baseDir,
    "--n", String(nPerTrace),
    "--seed", String(seed + 1),
    "--out", pairsFile,
    "--quiet",
  ]);
  return { dir, pairsFile };
}
