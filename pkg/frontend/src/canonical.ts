// Canonical document encoding: JSON text with map keys sorted by UTF-8
// bytes, no insignificant whitespace, integers in shortest decimal form.
// Must agree byte-for-byte with the node's encoder.

export type CanonicalValue =
  | null
  | boolean
  | number
  | string
  | CanonicalValue[]
  | { [key: string]: CanonicalValue };

export class EncodingError extends Error {}

// UTF-8 byte order equals code point order, so compare by code points.
function compareCodePoints(a: string, b: string): number {
  let i = 0;
  let j = 0;
  while (i < a.length && j < b.length) {
    const ca = a.codePointAt(i)!;
    const cb = b.codePointAt(j)!;
    if (ca !== cb) return ca - cb;
    i += ca > 0xffff ? 2 : 1;
    j += cb > 0xffff ? 2 : 1;
  }
  return a.length - i - (b.length - j);
}

export function canonicalStringify(value: CanonicalValue): string {
  if (value === null) return "null";
  if (typeof value === "boolean") return value ? "true" : "false";
  if (typeof value === "number") {
    if (!Number.isInteger(value)) throw new EncodingError(`non-integer number: ${value}`);
    if (!Number.isSafeInteger(value)) throw new EncodingError(`unsafe integer: ${value}`);
    return String(value);
  }
  if (typeof value === "string") return JSON.stringify(value);
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalStringify).join(",") + "]";
  }
  if (typeof value === "object") {
    const keys = Object.keys(value).sort(compareCodePoints);
    const parts = keys.map((k) => JSON.stringify(k) + ":" + canonicalStringify(value[k]!));
    return "{" + parts.join(",") + "}";
  }
  throw new EncodingError(`non-representable ${typeof value}`);
}

export function canonicalBytes(value: CanonicalValue): Uint8Array {
  return new TextEncoder().encode(canonicalStringify(value));
}

export function toHex(bytes: Uint8Array): string {
  return Array.from(bytes, (b) => b.toString(16).padStart(2, "0")).join("");
}

export function fromHex(text: string, length?: number): Uint8Array {
  if (!/^[0-9a-f]*$/.test(text) || text.length % 2 !== 0) {
    throw new EncodingError(`invalid lowercase hex: ${text.slice(0, 20)}`);
  }
  if (length !== undefined && text.length !== 2 * length) {
    throw new EncodingError(`expected ${2 * length} hex chars, got ${text.length}`);
  }
  const out = new Uint8Array(text.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(text.slice(2 * i, 2 * i + 2), 16);
  }
  return out;
}
