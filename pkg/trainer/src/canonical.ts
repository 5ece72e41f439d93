/**
 * Canonical step-text rendering: the byte-level contract shared with the
 * consistency pipeline. Each trace renders to one text, one canonical step
 * line per executed step, joined by newlines. Must stay byte-identical to
 * the reference implementation (verified against shared golden files).
 */

export interface TraceStep {
  goal: string;
  action: string;
  attributes: Record<string, string>;
}

export interface ExecutionTrace {
  taskId: string;
  steps: TraceStep[];
  meta?: Record<string, string>;
}

function escapeField(text: string): string {
  return text
    .replaceAll("%", "%25")
    .replaceAll("|", "%7C")
    .replaceAll(";", "%3B")
    .replaceAll("=", "%3D");
}

/** Sort keys by their UTF-8 byte sequences (not UTF-16 code units). */
function bytewiseSortedKeys(attributes: Record<string, string>): string[] {
  return Object.keys(attributes)
    .map((key) => ({ key, bytes: Buffer.from(key, "utf-8") }))
    .sort((a, b) => Buffer.compare(a.bytes, b.bytes))
    .map((entry) => entry.key);
}

export function canonicalStepText(step: TraceStep): string {
  const attrs = bytewiseSortedKeys(step.attributes)
    .map((key) => `${escapeField(key)}=${escapeField(step.attributes[key])}`)
    .join(";");
  return `g=${escapeField(step.goal)}|a=${step.action}|attrs=${attrs}`;
}

export function renderTrace(trace: ExecutionTrace): string {
  if (trace.steps.length === 0) {
    throw new Error(`trace ${trace.taskId} has no steps`);
  }
  return trace.steps.map(canonicalStepText).join("\n");
}
