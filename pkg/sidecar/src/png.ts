/**
 * Minimal PNG codec for the embedding service.
 *
 * Decodes the subset the scoring client actually produces: 8-bit,
 * non-interlaced truecolor (RGB or RGBA), any scanline filter.  The
 * encoder exists for tests and tooling and always writes filter-0 RGB.
 */

import { deflateSync, inflateSync } from "node:zlib";

export class PngError extends Error {}

export interface RgbImage {
  width: number;
  height: number;
  /** Row-major RGB triplets, length = width * height * 3. */
  pixels: Uint8Array;
}

const SIGNATURE = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

interface Header {
  width: number;
  height: number;
  bitDepth: number;
  colorType: number;
  interlace: number;
}

function parseChunks(data: Buffer): { header: Header; idat: Buffer } {
  if (data.length < 8 || !data.subarray(0, 8).equals(SIGNATURE)) {
    throw new PngError("not a PNG: bad signature");
  }
  let offset = 8;
  let header: Header | null = null;
  const idatParts: Buffer[] = [];
  while (offset + 8 <= data.length) {
    const length = data.readUInt32BE(offset);
    const type = data.toString("latin1", offset + 4, offset + 8);
    const body = data.subarray(offset + 8, offset + 8 + length);
    if (body.length < length) throw new PngError("truncated chunk");
    if (type === "IHDR") {
      header = {
        width: body.readUInt32BE(0),
        height: body.readUInt32BE(4),
        bitDepth: body[8],
        colorType: body[9],
        interlace: body[12],
      };
    } else if (type === "IDAT") {
      idatParts.push(body);
    } else if (type === "IEND") {
      break;
    }
    offset += 12 + length; // length + type + body + crc
  }
  if (!header) throw new PngError("missing IHDR");
  if (idatParts.length === 0) throw new PngError("missing IDAT");
  return { header, idat: Buffer.concat(idatParts) };
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

/** Reverse per-scanline filtering in place, returning the raw bytes. */
function unfilter(raw: Buffer, width: number, height: number, channels: number): Uint8Array {
  const stride = width * channels;
  if (raw.length < (stride + 1) * height) throw new PngError("truncated pixel data");
  const out = new Uint8Array(stride * height);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)];
    const line = raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1));
    const row = y * stride;
    const prev = row - stride;
    for (let x = 0; x < stride; x++) {
      const left = x >= channels ? out[row + x - channels] : 0;
      const up = y > 0 ? out[prev + x] : 0;
      const upLeft = y > 0 && x >= channels ? out[prev + x - channels] : 0;
      let value = line[x];
      switch (filter) {
        case 0:
          break;
        case 1:
          value += left;
          break;
        case 2:
          value += up;
          break;
        case 3:
          value += (left + up) >> 1;
          break;
        case 4:
          value += paeth(left, up, upLeft);
          break;
        default:
          throw new PngError(`unknown filter type ${filter}`);
      }
      out[row + x] = value & 0xff;
    }
  }
  return out;
}

export function decodePng(data: Buffer): RgbImage {
  const { header, idat } = parseChunks(data);
  const { width, height, bitDepth, colorType, interlace } = header;
  if (width === 0 || height === 0) throw new PngError("empty image");
  if (bitDepth !== 8) throw new PngError(`unsupported bit depth ${bitDepth}`);
  if (colorType !== 2 && colorType !== 6) {
    throw new PngError(`unsupported color type ${colorType} (need RGB or RGBA)`);
  }
  if (interlace !== 0) throw new PngError("interlaced PNG not supported");

  let raw: Buffer;
  try {
    raw = inflateSync(idat);
  } catch {
    throw new PngError("corrupt compressed data");
  }
  const channels = colorType === 6 ? 4 : 3;
  const flat = unfilter(raw, width, height, channels);
  if (channels === 3) return { width, height, pixels: flat };

  const pixels = new Uint8Array(width * height * 3);
  for (let i = 0, j = 0; i < flat.length; i += 4, j += 3) {
    pixels[j] = flat[i];
    pixels[j + 1] = flat[i + 1];
    pixels[j + 2] = flat[i + 2];
  }
  return { width, height, pixels };
}

// -- encoding (tests and tooling) ----------------------------------------

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(buf: Buffer): number {
  let c = 0xffffffff;
  for (const byte of buf) c = CRC_TABLE[(c ^ byte) & 0xff] ^ (c >>> 8);
  return (c ^ 0xffffffff) >>> 0;
}

function chunk(type: string, body: Buffer): Buffer {
  const head = Buffer.alloc(8);
  head.writeUInt32BE(body.length, 0);
  head.write(type, 4, "latin1");
  const crc = Buffer.alloc(4);
  crc.writeUInt32BE(crc32(Buffer.concat([head.subarray(4), body])), 0);
  return Buffer.concat([head, body, crc]);
}

export function encodePng(image: RgbImage): Buffer {
  const { width, height, pixels } = image;
  if (pixels.length !== width * height * 3) throw new PngError("pixel buffer size mismatch");
  const ihdr = Buffer.alloc(13);
  ihdr.writeUInt32BE(width, 0);
  ihdr.writeUInt32BE(height, 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 2; // truecolor
  const stride = width * 3;
  const raw = Buffer.alloc((stride + 1) * height);
  for (let y = 0; y < height; y++) {
    raw[y * (stride + 1)] = 0; // filter: none
    raw.set(pixels.subarray(y * stride, (y + 1) * stride), y * (stride + 1) + 1);
  }
  return Buffer.concat([
    SIGNATURE,
    chunk("IHDR", ihdr),
    chunk("IDAT", deflateSync(raw)),
    chunk("IEND", Buffer.alloc(0)),
  ]);
}
