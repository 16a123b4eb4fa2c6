import type { Server } from "node:http";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { TestProjectionModel, VECTOR_LENGTH, loadModel } from "../src/model.js";
import { PngError, decodePng, encodePng, type RgbImage } from "../src/png.js";
import { MAX_BODY_BYTES, createApp } from "../src/service.js";

function solidImage(size: number, rgb: [number, number, number]): RgbImage {
  const pixels = new Uint8Array(size * size * 3);
  for (let i = 0; i < pixels.length; i += 3) {
    pixels[i] = rgb[0];
    pixels[i + 1] = rgb[1];
    pixels[i + 2] = rgb[2];
  }
  return { width: size, height: size, pixels };
}

function gradientImage(size: number): RgbImage {
  const pixels = new Uint8Array(size * size * 3);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const at = (y * size + x) * 3;
      pixels[at] = (x * 255) / (size - 1);
      pixels[at + 1] = (y * 255) / (size - 1);
      pixels[at + 2] = ((x + y) * 255) / (2 * size - 2);
    }
  }
  return { width: size, height: size, pixels };
}

function cosine(a: number[], b: number[]): number {
  let dot = 0;
  let na = 0;
  let nb = 0;
  for (let i = 0; i < a.length; i++) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / Math.sqrt(na * nb);
}

// -- png codec ------------------------------------------------------------

describe("png codec", () => {
  it("round-trips an RGB image", () => {
    const img = gradientImage(17);
    const back = decodePng(encodePng(img));
    expect(back.width).toBe(17);
    expect(back.height).toBe(17);
    expect(Array.from(back.pixels)).toEqual(Array.from(img.pixels));
  });

  it("decodes every scanline filter type", async () => {
    // build filtered scanlines by hand: one row per filter 0..4
    const { deflateSync } = await import("node:zlib");
    const width = 4;
    const channels = 3;
    const stride = width * channels;
    const rows = 5;
    const raw = new Uint8Array(stride * rows);
    for (let i = 0; i < raw.length; i++) raw[i] = (i * 37 + 11) % 256;

    const paeth = (a: number, b: number, c: number) => {
      const p = a + b - c;
      const [pa, pb, pc] = [Math.abs(p - a), Math.abs(p - b), Math.abs(p - c)];
      if (pa <= pb && pa <= pc) return a;
      return pb <= pc ? b : c;
    };
    const filtered = Buffer.alloc((stride + 1) * rows);
    for (let y = 0; y < rows; y++) {
      filtered[y * (stride + 1)] = y; // filter type = row index
      for (let x = 0; x < stride; x++) {
        const cur = raw[y * stride + x];
        const left = x >= channels ? raw[y * stride + x - channels] : 0;
        const up = y > 0 ? raw[(y - 1) * stride + x] : 0;
        const ul = y > 0 && x >= channels ? raw[(y - 1) * stride + x - channels] : 0;
        const predictor = [0, left, up, (left + up) >> 1, paeth(left, up, ul)][y];
        filtered[y * (stride + 1) + 1 + x] = (cur - predictor) & 0xff;
      }
    }

    // assemble a PNG around the hand-filtered data
    const template = encodePng({ width, height: rows, pixels: raw });
    const sig = template.subarray(0, 8);
    const ihdrChunk = template.subarray(8, 8 + 25);
    const crcTable = new Uint32Array(256).map((_, n) => {
      let c = n;
      for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
      return c >>> 0;
    });
    const crc32 = (buf: Buffer) => {
      let c = 0xffffffff;
      for (const byte of buf) c = crcTable[(c ^ byte) & 0xff] ^ (c >>> 8);
      return (c ^ 0xffffffff) >>> 0;
    };
    const chunk = (type: string, body: Buffer) => {
      const head = Buffer.alloc(8);
      head.writeUInt32BE(body.length, 0);
      head.write(type, 4, "latin1");
      const crc = Buffer.alloc(4);
      crc.writeUInt32BE(crc32(Buffer.concat([head.subarray(4), body])), 0);
      return Buffer.concat([head, body, crc]);
    };
    const png = Buffer.concat([
      sig,
      ihdrChunk,
      chunk("IDAT", deflateSync(filtered)),
      chunk("IEND", Buffer.alloc(0)),
    ]);

    const decoded = decodePng(png);
    expect(Array.from(decoded.pixels)).toEqual(Array.from(raw));
  });

  it("rejects garbage and truncated input", () => {
    expect(() => decodePng(Buffer.from("not a png at all"))).toThrow(PngError);
    const good = encodePng(solidImage(8, [1, 2, 3]));
    expect(() => decodePng(good.subarray(0, 20))).toThrow(PngError);
  });
});

// -- model ----------------------------------------------------------------

describe("projection model", () => {
  const model = new TestProjectionModel();

  it("is deterministic with finite entries and fixed length", () => {
    const img = gradientImage(32);
    const a = model.embed(img);
    const b = model.embed(img);
    expect(a).toHaveLength(VECTOR_LENGTH);
    expect(a).toEqual(b);
    expect(a.every(Number.isFinite)).toBe(true);
  });

  it("separates distinct images", () => {
    const a = model.embed(solidImage(16, [250, 250, 250]));
    const b = model.embed(solidImage(16, [20, 20, 20]));
    expect(Math.abs(cosine(a, b) - 1)).toBeGreaterThan(1e-5);
  });

  it("reports unavailable models as failed state", () => {
    expect(loadModel("clip").status).toBe("failed");
    expect(loadModel("no-such-model").status).toBe("failed");
    expect(loadModel().status).toBe("ready");
  });
});

// -- http surface ----------------------------------------------------------

describe("service", () => {
  let server: Server;
  let base: string;

  beforeAll(async () => {
    server = createApp(loadModel()).listen(0);
    await new Promise((resolve) => server.once("listening", resolve));
    const address = server.address();
    if (typeof address !== "object" || !address) throw new Error("no port");
    base = `http://127.0.0.1:${address.port}`;
  });

  afterAll(() => {
    server.close();
  });

  async function embed(body: Buffer, headers: Record<string, string> = {}) {
    return fetch(`${base}/embed`, {
      method: "POST",
      headers: { "content-type": "image/png", ...headers },
      body,
    });
  }

  it("health reports the loaded model", async () => {
    const res = await fetch(`${base}/health`);
    expect(res.status).toBe(200);
    const body = await res.json();
    expect(body).toEqual({
      model_loaded: true,
      embedder_id: "test-projection-512",
      vector_length: 512,
    });
  });

  it("identical images embed identically (cosine 1.0)", async () => {
    const png = encodePng(gradientImage(64));
    const first = await (await embed(png)).json();
    const second = await (await embed(png)).json();
    expect(first.vector).toHaveLength(512);
    expect(first.vector).toEqual(second.vector);
    expect(Math.abs(cosine(first.vector, second.vector) - 1)).toBeLessThanOrEqual(1e-5);
    expect(first.embedder_id).toBe("test-projection-512");
    expect(typeof first.request_id).toBe("string");
  });

  it("echoes request ids from header and JSON envelope", async () => {
    const png = encodePng(solidImage(8, [9, 9, 9]));
    const viaHeader = await embed(png, { "x-request-id": "req-77" });
    expect((await viaHeader.json()).request_id).toBe("req-77");

    const viaJson = await fetch(`${base}/embed`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ image: png.toString("base64"), request_id: "req-88" }),
    });
    expect(viaJson.status).toBe(200);
    const body = await viaJson.json();
    expect(body.request_id).toBe("req-88");
    expect(body.vector).toHaveLength(512);
  });

  it("rejects empty and undecodable bodies with 400", async () => {
    expect((await embed(Buffer.alloc(0))).status).toBe(400);
    expect((await embed(Buffer.from("junk junk junk"))).status).toBe(400);
    const badJson = await fetch(`${base}/embed`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ nope: true }),
    });
    expect(badJson.status).toBe(400);
  });

  it("rejects oversize bodies with 413", async () => {
    const res = await embed(Buffer.alloc(MAX_BODY_BYTES + 1));
    expect(res.status).toBe(413);
  });

  it("serves 503 until a model is ready", async () => {
    const loading = createApp({ status: "loading" }).listen(0);
    await new Promise((resolve) => loading.once("listening", resolve));
    const address = loading.address();
    const url = typeof address === "object" && address ? `http://127.0.0.1:${address.port}` : "";
    try {
      const health = await fetch(`${url}/health`);
      expect(health.status).toBe(503);
      expect((await health.json()).model_loaded).toBe(false);
      const res = await fetch(`${url}/embed`, {
        method: "POST",
        headers: { "content-type": "image/png" },
        body: encodePng(solidImage(4, [0, 0, 0])),
      });
      expect(res.status).toBe(503);
    } finally {
      loading.close();
    }
  });

  it("reports a failure reason for unavailable models", async () => {
    const failed = createApp(loadModel("clip")).listen(0);
    await new Promise((resolve) => failed.once("listening", resolve));
    const address = failed.address();
    const url = typeof address === "object" && address ? `http://127.0.0.1:${address.port}` : "";
    try {
      const health = await fetch(`${url}/health`);
      expect(health.status).toBe(503);
      const body = await health.json();
      expect(body.model_loaded).toBe(false);
      expect(body.reason).toContain("clip");
    } finally {
      failed.close();
    }
  });
});
