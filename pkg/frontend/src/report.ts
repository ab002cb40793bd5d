// Verification reports: client-side signature checking and the view
// model the verify page renders from. The raw response bytes are the
// exportable ".scvr" artifact; display never alters them.

import { CanonicalValue, canonicalBytes, fromHex } from "./canonical.js";
import { verifySignature } from "./crypto.js";
import { MetadataDocument } from "./metadata.js";

export type ReportStatus = "Valid" | "Revoked" | "Unknown" | "IntegrityFailure";

export interface VerificationReport {
  version: number;
  query_echo: Record<string, string>;
  status: ReportStatus;
  ledger_height: number;
  checked_at: number;
  node_public_key: string;
  signature: string;
  issuer?: string;
  institution_name?: string;
  cert_id?: string;
  cid?: string;
  metadata_hash?: string;
  metadata?: MetadataDocument;
  revoked_at?: number;
  revocation_reason?: string;
}

export async function checkReport(
  report: unknown,
  expectedNodeKey?: Uint8Array,
): Promise<boolean> {
  try {
    const doc = report as Record<string, CanonicalValue>;
    if (typeof doc !== "object" || doc === null) return false;
    const nodeKey = fromHex(doc.node_public_key as string, 32);
    const signature = fromHex(doc.signature as string, 64);
    if (expectedNodeKey && fromHex(doc.node_public_key as string, 32).join() !== expectedNodeKey.join()) {
      return false;
    }
    const unsigned: Record<string, CanonicalValue> = {};
    for (const [key, value] of Object.entries(doc)) {
      if (key !== "signature") unsigned[key] = value;
    }
    return await verifySignature(nodeKey, signature, canonicalBytes(unsigned));
  } catch {
    return false;
  }
}

export type Banner = "VALID" | "REVOKED" | "NOT FOUND" | "INTEGRITY FAILURE";

export interface VerifyView {
  banner: Banner;
  /** REVOKED and INTEGRITY FAILURE are invalid outcomes, styled apart from VALID. */
  invalid: boolean;
  certId?: string;
  issuer?: string;
  institutionName?: string;
  cid?: string;
  metadata?: MetadataDocument;
  revokedAt?: number;
  revocationReason?: string;
  ledgerHeight: number;
  checkedAt: number;
}

export interface ErrorView {
  error: string;
}

const BANNERS: Record<ReportStatus, Banner> = {
  Valid: "VALID",
  Revoked: "REVOKED",
  Unknown: "NOT FOUND",
  IntegrityFailure: "INTEGRITY FAILURE",
};

/** Deterministic report -> view mapping; every field comes from the report.
 * Callers must have accepted the report via checkReport first. */
export function buildVerifyView(report: VerificationReport): VerifyView {
  const banner = BANNERS[report.status];
  if (!banner) throw new Error(`unknown report status: ${report.status}`);
  return {
    banner,
    invalid: banner !== "VALID",
    certId: report.cert_id,
    issuer: report.issuer,
    institutionName: report.institution_name,
    cid: report.cid,
    metadata: report.metadata,
    revokedAt: report.revoked_at,
    revocationReason: report.revocation_reason,
    ledgerHeight: report.ledger_height,
    checkedAt: report.checked_at,
  };
}

export const UNVERIFIED_REPORT: ErrorView = { error: "unverified report" };

/** Fetch, gate on the signature, and build the view. Returns the raw bytes
 * so the caller can offer the untouched .scvr download. */
export async function verifyAndBuildView(
  rawBytes: Uint8Array,
  expectedNodeKey?: Uint8Array,
): Promise<{ view: VerifyView | ErrorView; report?: VerificationReport }> {
  let report: VerificationReport;
  try {
    report = JSON.parse(new TextDecoder().decode(rawBytes));
  } catch {
    return { view: UNVERIFIED_REPORT };
  }
  if (!(await checkReport(report, expectedNodeKey))) {
    return { view: UNVERIFIED_REPORT };
  }
  return { view: buildVerifyView(report), report };
}
