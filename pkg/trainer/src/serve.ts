/**
 * Embedding service: POST /embed {"texts": [...]} -> {"vectors": [[...]]}
 * over a loaded checkpoint. Inference is pure, so outputs are deterministic
 * for fixed inputs; requests are stateless.
 */
import * as http from "node:http";

import { EmbeddingModel } from "./model.js";

export class PortInUse extends Error {}

export function createServer(model: EmbeddingModel): http.Server {
  return http.createServer((req, res) => {
    if (req.method !== "POST" || req.url !== "/embed") {
      res.writeHead(404, { "content-type": "application/json" });
      res.end(JSON.stringify({ error: "POST /embed only" }));
      return;
    }
    const chunks: Buffer[] = [];
    req.on("data", (chunk) => chunks.push(chunk));
    req.on("end", () => {
      try {
        const body = JSON.parse(Buffer.concat(chunks).toString("utf-8"));
        if (!Array.isArray(body.texts) || body.texts.some((t: unknown) => typeof t !== "string")) {
          throw new Error('request body must be {"texts": [string, ...]}');
        }
        const vectors = body.texts.map((text: string) => Array.from(model.embedText(text)));
        res.writeHead(200, { "content-type": "application/json" });
        res.end(JSON.stringify({ vectors }));
      } catch (err) {
        res.writeHead(400, { "content-type": "application/json" });
        res.end(JSON.stringify({ error: String(err) }));
      }
    });
  });
}

export function serve(model: EmbeddingModel, port: number): Promise<http.Server> {
  return new Promise((resolve, reject) => {
    const server = createServer(model);
    server.once("error", (err: NodeJS.ErrnoException) => {
      reject(err.code === "EADDRINUSE" ? new PortInUse(`port ${port} in use`) : err);
    });
    server.listen(port, "127.0.0.1", () => resolve(server));
  });
}
