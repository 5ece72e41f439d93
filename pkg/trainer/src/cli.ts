/**
 * Trainer CLI.
 *
 *   train --pairs F --traces DIR --out DIR [--epochs N --lr X --wd X
 *         --margin X --batch N --seed N --base NAME]
 *   serve --checkpoint DIR --port P
 */
import { parseArgs } from "node:util";

import { buildPairDataset } from "./dataset.js";
import { EmbeddingModel } from "./model.js";
import { serve } from "./serve.js";
import { DEFAULT_TRAIN_CONFIG, train } from "./train.js";

function fail(message: string): never {
  console.error(`error: ${message}`);
  process.exit(2);
}

async function main(): Promise<void> {
  const [command, ...rest] = process.argv.slice(2);
  if (command === "train") {
    const { values } = parseArgs({
      args: rest,
      options: {
        pairs: { type: "string" },
        traces: { type: "string" },
        out: { type: "string" },
        epochs: { type: "string" },
        lr: { type: "string" },
        wd: { type: "string" },
        margin: { type: "string" },
        batch: { type: "string" },
        seed: { type: "string" },
        base: { type: "string" },
      },
    });
    if (!values.pairs || !values.out) fail("train needs --pairs and --out");
    const config = {
      ...DEFAULT_TRAIN_CONFIG,
      epochs: values.epochs ? Number(values.epochs) : DEFAULT_TRAIN_CONFIG.epochs,
      learningRate: values.lr ? Number(values.lr) : DEFAULT_TRAIN_CONFIG.learningRate,
      weightDecay: values.wd ? Number(values.wd) : DEFAULT_TRAIN_CONFIG.weightDecay,
      margin: values.margin ? Number(values.margin) : DEFAULT_TRAIN_CONFIG.margin,
      batchSize: values.batch ? Number(values.batch) : DEFAULT_TRAIN_CONFIG.batchSize,
      seed: values.seed ? Number(values.seed) : DEFAULT_TRAIN_CONFIG.seed,
      baseCheckpoint: values.base ?? DEFAULT_TRAIN_CONFIG.baseCheckpoint,
    };
    const examples = buildPairDataset(values.pairs, values.traces);
    const { report } = train(config, examples, values.out);
    console.log(JSON.stringify(report, null, 2));
    return;
  }
  if (command === "serve") {
    const { values } = parseArgs({
      args: rest,
      options: { checkpoint: { type: "string" }, port: { type: "string" } },
    });
    if (!values.checkpoint || !values.port) fail("serve needs --checkpoint and --port");
    const model = EmbeddingModel.load(values.checkpoint);
    const server = await serve(model, Number(values.port));
    const address = server.address();
    const port = typeof address === "object" && address ? address.port : values.port;
    console.log(`serving /embed on http://127.0.0.1:${port}`);
    return;
  }
  fail(`unknown command ${JSON.stringify(command ?? "")}; use train or serve`);
}

main().catch((err) => {
  console.error(`error: ${err?.message ?? err}`);
  process.exit(1);
});
