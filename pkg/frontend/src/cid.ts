// Content identifiers: CIDv1, raw codec (0x55), sha2-256 multihash,
// rendered as multibase base32-lowercase. Mirrors the node bit-for-bit.

import { EncodingError } from "./canonical.js";
import { sha256Bytes } from "./crypto.js";

const CID_PREFIX = new Uint8Array([0x01, 0x55, 0x12, 0x20]);
const BASE32_ALPHABET = "abcdefghijklmnopqrstuvwxyz234567";

function base32Encode(data: Uint8Array): string {
  let bits = 0;
  let buffer = 0;
  let out = "";
  for (const byte of data) {
    buffer = (buffer << 8) | byte;
    bits += 8;
    while (bits >= 5) {
      out += BASE32_ALPHABET[(buffer >>> (bits - 5)) & 31];
      bits -= 5;
    }
  }
  if (bits > 0) out += BASE32_ALPHABET[(buffer << (5 - bits)) & 31];
  return out;
}

function base32Decode(text: string): Uint8Array {
  let bits = 0;
  let buffer = 0;
  const out: number[] = [];
  for (const char of text) {
    const value = BASE32_ALPHABET.indexOf(char);
    if (value < 0) throw new EncodingError(`invalid base32 character: ${char}`);
    buffer = (buffer << 5) | value;
    bits += 5;
    if (bits >= 8) {
      out.push((buffer >>> (bits - 8)) & 0xff);
      bits -= 8;
    }
  }
  if (((buffer << (8 - bits)) & 0xff) !== 0) {
    throw new EncodingError("non-zero base32 padding bits");
  }
  return new Uint8Array(out);
}

export function cidFromDigest(digest: Uint8Array): string {
  if (digest.length !== 32) throw new EncodingError("CID digest must be 32 bytes");
  const raw = new Uint8Array(CID_PREFIX.length + 32);
  raw.set(CID_PREFIX);
  raw.set(digest, CID_PREFIX.length);
  return "b" + base32Encode(raw);
}

export function computeCid(content: Uint8Array): string {
  return cidFromDigest(sha256Bytes(content));
}

/** Strict parse; returns the 32-byte digest. */
export function parseCid(text: string): Uint8Array {
  if (!text.startsWith("b") || !/^[a-z2-7]+$/.test(text.slice(1))) {
    throw new EncodingError(`not a base32-lowercase CID: ${text}`);
  }
  const raw = base32Decode(text.slice(1));
  if (raw.length !== 36 || !CID_PREFIX.every((b, i) => raw[i] === b)) {
    throw new EncodingError(`unsupported CID profile: ${text}`);
  }
  const digest = raw.slice(4);
  if (cidFromDigest(digest) !== text) throw new EncodingError(`non-canonical CID text: ${text}`);
  return digest;
}
