/** Client-side decoding of the service's base64 binary PGM payloads. */

export interface GrayImage {
  width: number;
  height: number;
  pixels: Uint8Array;
}

export function decodeBase64(b64: string): Uint8Array {
  const binary = atob(b64);
  const bytes = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) {
    bytes[i] = binary.charCodeAt(i);
  }
  return bytes;
}

const WHITESPACE = new Set([0x20, 0x09, 0x0a, 0x0d, 0x0b, 0x0c]);

/** Parse a binary P5 payload (maxval 255, comments allowed). */
export function decodePgm(bytes: Uint8Array): GrayImage {
  if (bytes[0] !== 0x50 || bytes[1] !== 0x35) {
    throw new Error("not a P5 PGM payload");
  }
  let pos = 2;
  const tokens: number[] = [];
  while (tokens.length < 3) {
    while (pos < bytes.length && WHITESPACE.has(bytes[pos])) pos++;
    if (bytes[pos] === 0x23) {
      // comment: skip to end of line
      while (pos < bytes.length && bytes[pos] !== 0x0a) pos++;
      continue;
    }
    let tok = "";
    while (pos < bytes.length && !WHITESPACE.has(bytes[pos])) {
      tok += String.fromCharCode(bytes[pos]);
      pos++;
    }
    if (!tok) throw new Error("truncated PGM header");
    tokens.push(parseInt(tok, 10));
  }
  const [width, height, maxval] = tokens;
  if (!Number.isFinite(width) || !Number.isFinite(height) || maxval !== 255) {
    throw new Error(`bad PGM header ${tokens.join(" ")}`);
  }
  pos++; // single whitespace after maxval
  const pixels = bytes.slice(pos, pos + width * height);
  if (pixels.length !== width * height) {
    throw new Error(`expected ${width * height} pixels, got ${pixels.length}`);
  }
  return { width, height, pixels };
}

/** Paint a grayscale image onto a canvas at 1:1 scale. */
export function drawToCanvas(canvas: HTMLCanvasElement, img: GrayImage): void {
  canvas.width = img.width;
  canvas.height = img.height;
  const ctx = canvas.getContext("2d");
  if (!ctx) return; // jsdom-like environments without 2d context
  const data = ctx.createImageData(img.width, img.height);
  for (let i = 0; i < img.pixels.length; i++) {
    const v = img.pixels[i];
    data.data[4 * i] = v;
    data.data[4 * i + 1] = v;
    data.data[4 * i + 2] = v;
    data.data[4 * i + 3] = 255;
  }
  ctx.putImageData(data, 0, 0);
}
