import * as fs from "node:fs";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { canonicalStepText, renderTrace } from "../src/canonical.js";

const here = path.dirname(fileURLToPath(import.meta.url));
const goldenDir = path.resolve(here, "..", "..", "tests", "data", "golden");

describe("canonical step text", () => {
  it("renders the empty-attribute form", () => {
    expect(canonicalStepText({ goal: "open search", action: "click", attributes: {} }))
      .toBe("g=open search|a=click|attrs=");
  });

  it("sorts keys bytewise and escapes the grammar characters", () => {
    expect(
      canonicalStepText({ goal: "x|y", action: "click", attributes: { k: "v;w" } }),
    ).toBe("g=x%7Cy|a=click|attrs=k=v%3Bw");
    expect(
      canonicalStepText({ goal: "g", action: "type", attributes: { b: "2", a: "1" } }),
    ).toBe("g=g|a=type|attrs=a=1;b=2");
  });

  it("is invariant under attribute insertion order", () => {
    const a = canonicalStepText({ goal: "g", action: "click", attributes: { x: "1", y: "2" } });
    const b = canonicalStepText({ goal: "g", action: "click", attributes: { y: "2", x: "1" } });
    expect(a).toBe(b);
  });
});

describe("cross-component rendering contract", () => {
  it("matches the shared golden files byte for byte", () => {
    const trace = JSON.parse(
      fs.readFileSync(path.join(goldenDir, "trace_render_input.json"), "utf-8"),
    );
    const rendered = Buffer.from(renderTrace(trace), "utf-8");
    const golden = fs.readFileSync(path.join(goldenDir, "trace_render.txt"));
    expect(rendered.equals(golden)).toBe(true);
  });
});
