// Client-side keys: Ed25519 signing with addresses derived from the
// SHA-256 of the public key. Secret keys never leave the browser.

import { getPublicKeyAsync, signAsync, verifyAsync } from "@noble/ed25519";
import { sha256 } from "@noble/hashes/sha2.js";

import { EncodingError, fromHex, toHex } from "./canonical.js";

export interface SessionKeyPair {
  seed: Uint8Array;
  publicKey: Uint8Array;
  address: string;
}

export function sha256Bytes(data: Uint8Array): Uint8Array {
  return sha256(data);
}

export function deriveAddress(publicKey: Uint8Array): string {
  if (publicKey.length !== 32) throw new EncodingError("public key must be 32 bytes");
  return "0x" + toHex(sha256(publicKey).slice(-20));
}

export async function keyPairFromSeed(seed: Uint8Array): Promise<SessionKeyPair> {
  if (seed.length !== 32) throw new EncodingError("seed must be 32 bytes");
  const publicKey = await getPublicKeyAsync(seed);
  return { seed, publicKey, address: deriveAddress(publicKey) };
}

export function generateSeed(): Uint8Array {
  const seed = new Uint8Array(32);
  crypto.getRandomValues(seed);
  return seed;
}

/** Parse the node's key-file format: 64 bytes (seed || public key) as hex. */
export async function importKeyFile(text: string): Promise<SessionKeyPair> {
  const raw = fromHex(text.trim(), 64);
  const pair = await keyPairFromSeed(raw.slice(0, 32));
  if (toHex(pair.publicKey) !== toHex(raw.slice(32))) {
    throw new EncodingError("key file public key does not match its seed");
  }
  return pair;
}

export function exportKeyFile(pair: SessionKeyPair): string {
  return toHex(pair.seed) + toHex(pair.publicKey) + "\n";
}

export async function signMessage(pair: SessionKeyPair, message: Uint8Array): Promise<Uint8Array> {
  return signAsync(message, pair.seed);
}

export async function verifySignature(
  publicKey: Uint8Array,
  signature: Uint8Array,
  message: Uint8Array,
): Promise<boolean> {
  try {
    return await verifyAsync(signature, message, publicKey);
  } catch {
    return false;
  }
}
