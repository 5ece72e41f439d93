import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { beforeAll, describe, expect, it } from "vitest";

import { buildPairDataset, MissingTrace, SchemaError } from "../src/dataset.js";
import { generateSuite, SuiteFixture } from "./helpers.js";

let suite: SuiteFixture;

beforeAll(() => {
  suite = generateSuite(42, 10);
});

describe("buildPairDataset", () => {
  it("loads 80 similar + 80 dissimilar pairs as 160 examples", () => {
    const examples = buildPairDataset(suite.pairsFile);
    expect(examples).toHaveLength(160);
    expect(examples.filter((e) => e.label === 1)).toHaveLength(80);
    expect(examples.filter((e) => e.label === 0)).toHaveLength(80);
  });

  it("renders texts in the canonical one-line-per-step form", () => {
    const examples = buildPairDataset(suite.pairsFile);
    for (const line of examples[0].textA.split("\n")) {
      expect(line).toMatch(/^g=.*\|a=[a-z]+\|attrs=/);
    }
  });

  it("rejects malformed labels", () => {
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), "pairs-"));
    const file = path.join(dir, "pairs.jsonl");
    fs.writeFileSync(file, JSON.stringify({ a: "x.json", b: "y.json", label: "meh" }) + "\n");
    expect(() => buildPairDataset(file)).toThrow(SchemaError);
  });

  it("reports missing trace files", () => {
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), "pairs-"));
    const file = path.join(dir, "pairs.jsonl");
    fs.writeFileSync(
      file,
      JSON.stringify({ a: "ghost.json", b: "ghost.json", label: "similar" }) + "\n",
    );
    expect(() => buildPairDataset(file)).toThrow(MissingTrace);
  });
});
