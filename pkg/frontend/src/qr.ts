// QR payloads: the "shikkha:verify?v=1&i=…&c=…&d=…" URI grammar, a
// raster renderer shared by the UI and its tests, and frame scanning.

import jsQR from "jsqr";
import { create as createQr } from "qrcode";

import { parseCid } from "./cid.js";

export class QrError extends Error {}
export class BadScheme extends QrError {}
export class BadVersion extends QrError {}
export class MalformedComponent extends QrError {}

export interface QrComponents {
  issuer: string;
  certId: string;
  cid: string;
}

const UNRESERVED = /^[A-Za-z0-9._~-]$/;

function percentEncode(text: string): string {
  let out = "";
  for (const char of text) {
    if (UNRESERVED.test(char)) {
      out += char;
    } else {
      for (const byte of new TextEncoder().encode(char)) {
        out += "%" + byte.toString(16).toUpperCase().padStart(2, "0");
      }
    }
  }
  return out;
}

export function encodeQrPayload(issuer: string, certId: string, cid: string): string {
  if (!/^0x[0-9a-f]{40}$/.test(issuer)) throw new QrError(`invalid issuer: ${issuer}`);
  if (!certId) throw new QrError("empty cert_id");
  parseCid(cid);
  return `shikkha:verify?v=1&i=${issuer}&c=${percentEncode(certId)}&d=${cid}`;
}

export function decodeQrPayload(uri: string): QrComponents {
  const colon = uri.indexOf(":");
  if (colon < 0 || uri.slice(0, colon) !== "shikkha") {
    throw new BadScheme("expected shikkha: scheme");
  }
  const rest = uri.slice(colon + 1);
  const qmark = rest.indexOf("?");
  if (qmark < 0 || rest.slice(0, qmark) !== "verify") {
    throw new MalformedComponent("expected verify?<query>");
  }
  const params = new Map<string, string>();
  for (const pair of rest.slice(qmark + 1).split("&")) {
    const eq = pair.indexOf("=");
    if (eq < 0) throw new MalformedComponent(`bad query pair: ${pair}`);
    const key = pair.slice(0, eq);
    if (params.has(key)) throw new MalformedComponent(`duplicate key: ${key}`);
    params.set(key, pair.slice(eq + 1));
  }
  const keys = [...params.keys()].sort();
  if (keys.join(",") !== "c,d,i,v") {
    throw new MalformedComponent(`query keys must be exactly v,i,c,d; got ${keys.join(",")}`);
  }
  if (params.get("v") !== "1") throw new BadVersion(`unsupported version: ${params.get("v")}`);
  const issuer = params.get("i")!;
  if (!/^0x[0-9a-f]{40}$/.test(issuer)) throw new MalformedComponent(`invalid issuer: ${issuer}`);
  const rawC = params.get("c")!;
  if (!/^(?:[A-Za-z0-9._~-]|%[0-9A-Fa-f]{2})+$/.test(rawC)) {
    throw new MalformedComponent(`cert_id not percent-encoded: ${rawC}`);
  }
  let certId: string;
  try {
    certId = decodeURIComponent(rawC);
  } catch {
    throw new MalformedComponent(`cert_id percent-decoding failed: ${rawC}`);
  }
  const cid = params.get("d")!;
  try {
    parseCid(cid);
  } catch (exc) {
    throw new MalformedComponent(`cid: ${(exc as Error).message}`);
  }
  return { issuer, certId, cid };
}

export interface RgbaImage {
  data: Uint8ClampedArray;
  width: number;
  height: number;
}

/** Rasterize a payload to RGBA pixels; the verify page paints this onto a
 * canvas and the tests feed it straight back into the scanner. */
export function renderQrImage(text: string, scale = 4, margin = 4): RgbaImage {
  const code = createQr(text, { errorCorrectionLevel: "M" });
  const size = code.modules.size;
  const dim = (size + 2 * margin) * scale;
  const data = new Uint8ClampedArray(dim * dim * 4).fill(255);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      if (!code.modules.get(y, x)) continue;
      for (let dy = 0; dy < scale; dy++) {
        for (let dx = 0; dx < scale; dx++) {
          const px = (x + margin) * scale + dx;
          const py = (y + margin) * scale + dy;
          const offset = (py * dim + px) * 4;
          data[offset] = data[offset + 1] = data[offset + 2] = 0;
        }
      }
    }
  }
  return { data, width: dim, height: dim };
}

/** Decode one camera/canvas frame; null when no readable code is present. */
export function scanQrImage(image: RgbaImage): string | null {
  const result = jsQR(image.data, image.width, image.height);
  return result ? result.data : null;
}
