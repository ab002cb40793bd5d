// Transaction construction and browser-side signing. The node only ever
// sees the signed canonical document, mirroring the wallet trust model.

import { CanonicalValue, canonicalBytes, toHex } from "./canonical.js";
import { SessionKeyPair, signMessage } from "./crypto.js";

export type TxPayload =
  | { type: "authorize_regulator"; regulator: string }
  | { type: "revoke_regulator"; regulator: string }
  | { type: "register_institution"; institution: string; name: string }
  | { type: "deactivate_institution"; institution: string }
  | { type: "issue_certificate"; cert_id: string; cid: string; metadata_hash: string }
  | { type: "revoke_certificate"; cert_id: string; reason: string };

export interface SignedTransactionDoc {
  nonce: number;
  payload: TxPayload;
  public_key: string;
  sender: string;
  signature: string;
  timestamp: number;
  [key: string]: CanonicalValue;
}

export async function signTransaction(
  pair: SessionKeyPair,
  payload: TxPayload,
  nonce: number,
  timestamp: number,
): Promise<SignedTransactionDoc> {
  const signingDoc: CanonicalValue = {
    nonce,
    payload: payload as unknown as CanonicalValue,
    sender: pair.address,
    timestamp,
  };
  const signature = await signMessage(pair, canonicalBytes(signingDoc));
  return {
    nonce,
    payload,
    public_key: toHex(pair.publicKey),
    sender: pair.address,
    signature: toHex(signature),
    timestamp,
  };
}
