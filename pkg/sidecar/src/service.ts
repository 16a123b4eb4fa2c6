/**
 * HTTP surface of the embedding service.
 *
 * GET  /health -> 200 {model_loaded, embedder_id, vector_length},
 *                 or 503 while loading / after a failed load.
 * POST /embed  -> {vector, embedder_id, request_id}.  The image arrives
 *                 either as a raw PNG body (content-type image/png) or
 *                 as JSON {"image": "<base64 png>", "request_id": "..."}.
 *                 400 undecodable, 413 oversize, 503 model not ready.
 */

import { randomUUID } from "node:crypto";
import express, { type Express, type NextFunction, type Request, type Response } from "express";
import { z } from "zod";

import type { ModelState } from "./model.js";
import { PngError, decodePng } from "./png.js";

export const MAX_BODY_BYTES = 8 * 1024 * 1024;

const jsonEmbed = z.object({
  image: z.string().min(1),
  request_id: z.string().optional(),
});

export function createApp(state: ModelState): Express {
  const app = express();
  app.use(express.raw({ type: ["image/png", "application/octet-stream"], limit: MAX_BODY_BYTES }));
  app.use(express.json({ limit: MAX_BODY_BYTES }));

  app.get("/health", (_req, res) => {
    if (state.status === "ready") {
      res.json({
        model_loaded: true,
        embedder_id: state.model.id,
        vector_length: state.model.vectorLength,
      });
    } else {
      res.status(503).json({
        model_loaded: false,
        reason: state.status === "loading" ? "model loading" : state.reason,
      });
    }
  });

  app.post("/embed", (req, res) => {
    if (state.status !== "ready") {
      const reason = state.status === "loading" ? "model loading" : state.reason;
      res.status(503).json({ error: reason });
      return;
    }
    const model = state.model;
    let bytes: Buffer;
    let requestId = req.header("x-request-id");
    if (req.is("application/json")) {
      const parsed = jsonEmbed.safeParse(req.body);
      if (!parsed.success) {
        res.status(400).json({ error: "body must be {image: base64, request_id?}" });
        return;
      }
      bytes = Buffer.from(parsed.data.image, "base64");
      requestId = parsed.data.request_id ?? requestId;
    } else if (Buffer.isBuffer(req.body)) {
      bytes = req.body;
    } else {
      res.status(400).json({ error: "send a raw PNG body or a JSON {image} envelope" });
      return;
    }
    if (bytes.length === 0) {
      res.status(400).json({ error: "empty image body" });
      return;
    }
    let vector: number[];
    try {
      vector = model.embed(decodePng(bytes));
    } catch (err) {
      if (err instanceof PngError) {
        res.status(400).json({ error: err.message });
        return;
      }
      throw err;
    }
    res.json({
      vector,
      embedder_id: model.id,
      request_id: requestId ?? randomUUID(),
    });
  });

  // body-parser signals oversize with status 413 before the route runs
  app.use((err: Error & { status?: number }, _req: Request, res: Response, next: NextFunction) => {
    if (err.status === 413) {
      res.status(413).json({ error: "payload too large" });
    } else if (err.status === 400 || err instanceof SyntaxError) {
      res.status(400).json({ error: "malformed request body" });
    } else {
      next(err);
    }
  });

  return app;
}
