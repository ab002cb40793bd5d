// Certificate metadata documents: client-side validation and the single
// legal canonical form (extra always serialized, grade omitted if absent).

import { CanonicalValue, canonicalBytes } from "./canonical.js";

export const METADATA_SCHEMA = "shikkhachain/cert/v1";

export class SchemaViolation extends Error {}

export interface MetadataDocument {
  schema: typeof METADATA_SCHEMA;
  cert_id: string;
  student_name: string;
  student_id_hash: string;
  degree: string;
  field_of_study: string;
  institution_address: string;
  institution_name: string;
  issue_date: string;
  grade?: string;
  extra: Record<string, string>;
}

const REQUIRED = [
  "cert_id",
  "student_name",
  "student_id_hash",
  "degree",
  "field_of_study",
  "institution_address",
  "institution_name",
  "issue_date",
] as const;

export function validateMetadata(input: Record<string, unknown>): MetadataDocument {
  const allowed = new Set<string>([...REQUIRED, "schema", "grade", "extra"]);
  for (const key of Object.keys(input)) {
    if (!allowed.has(key)) throw new SchemaViolation(`unknown metadata field: ${key}`);
  }
  if (input.schema !== METADATA_SCHEMA) {
    throw new SchemaViolation(`schema must be "${METADATA_SCHEMA}"`);
  }
  const doc: Record<string, unknown> = { schema: METADATA_SCHEMA };
  for (const field of REQUIRED) {
    const value = input[field];
    if (typeof value !== "string" || !value) {
      throw new SchemaViolation(`missing or non-string field: ${field}`);
    }
    doc[field] = value;
  }
  if (!/^[0-9a-f]{64}$/.test(doc.student_id_hash as string)) {
    throw new SchemaViolation("student_id_hash must be 64 lowercase hex chars");
  }
  if (!/^0x[0-9a-f]{40}$/.test(doc.institution_address as string)) {
    throw new SchemaViolation("institution_address must be a 0x-prefixed address");
  }
  const dateMatch = /^(\d{4})-(\d{2})-(\d{2})$/.exec(doc.issue_date as string);
  if (!dateMatch) throw new SchemaViolation("issue_date must be YYYY-MM-DD");
  const [y, m, d] = [Number(dateMatch[1]), Number(dateMatch[2]), Number(dateMatch[3])];
  const parsed = new Date(Date.UTC(y, m - 1, d));
  if (parsed.getUTCFullYear() !== y || parsed.getUTCMonth() !== m - 1 || parsed.getUTCDate() !== d) {
    throw new SchemaViolation("issue_date is not a real date");
  }
  if (input.grade !== undefined && input.grade !== null) {
    if (typeof input.grade !== "string" || !input.grade) {
      throw new SchemaViolation("grade must be a non-empty string when present");
    }
    doc.grade = input.grade;
  }
  const extra = (input.extra ?? {}) as Record<string, unknown>;
  if (typeof extra !== "object" || Array.isArray(extra)) {
    throw new SchemaViolation("extra must be a string-keyed map");
  }
  for (const [key, value] of Object.entries(extra)) {
    if (typeof value !== "string") throw new SchemaViolation("extra entries must be strings");
  }
  doc.extra = { ...extra };
  return doc as unknown as MetadataDocument;
}

export function canonicalizeMetadata(input: Record<string, unknown>): Uint8Array {
  return canonicalBytes(validateMetadata(input) as unknown as CanonicalValue);
}
