// Institution issuance form: metadata -> off-chain store -> signed issue
// transaction, with the certificate QR shown on success.

import { NodeApi } from "../api.js";
import { toHex } from "../canonical.js";
import { sha256Bytes } from "../crypto.js";
import { canonicalizeMetadata, METADATA_SCHEMA, SchemaViolation } from "../metadata.js";
import { encodeQrPayload, renderQrImage } from "../qr.js";
import { Session } from "../session.js";
import { signTransaction } from "../tx.js";
import { el, field, notice, paintQr } from "./helpers.js";

const FORM_FIELDS: Array<[keyof FormShape, string, string]> = [
  ["cert_id", "Certificate id", "BSC-2025-001"],
  ["student_name", "Student name", ""],
  ["student_id", "Student id (hashed before upload)", ""],
  ["degree", "Degree", ""],
  ["field_of_study", "Field of study", ""],
  ["institution_name", "Institution name", ""],
  ["issue_date", "Issue date (YYYY-MM-DD)", "2025-01-01"],
  ["grade", "Grade (optional)", ""],
];

interface FormShape {
  cert_id: string;
  student_name: string;
  student_id: string;
  degree: string;
  field_of_study: string;
  institution_name: string;
  issue_date: string;
  grade: string;
}

export function renderIssuePage(root: HTMLElement, api: NodeApi, session: Session | null): void {
  root.replaceChildren(el("h2", {}, ["Issue a certificate"]));
  if (!session || session.role !== "Institution") {
    root.append(
      notice(
        "info",
        "This form needs an Institution key. Import your key file on the Session tab; the node decides your role.",
      ),
    );
    return;
  }

  const inputs = new Map<string, HTMLInputElement>();
  const form = el("form", { class: "stack" });
  for (const [name, label, placeholder] of FORM_FIELDS) {
    const input = el("input", { name, placeholder });
    inputs.set(name, input);
    form.append(field(label, input));
  }
  const outcome = el("div");
  const submit = el("button", { type: "submit" }, ["Upload metadata and issue"]);
  form.append(submit);

  form.onsubmit = async (event) => {
    event.preventDefault();
    outcome.replaceChildren(notice("info", "issuing…"));
    const value = (name: string) => inputs.get(name)!.value.trim();

    // salted hash client-side; the raw student id never leaves the browser
    const salt = toHex(crypto.getRandomValues(new Uint8Array(8)));
    const studentIdHash = toHex(
      sha256Bytes(new TextEncoder().encode(`${salt}|${value("student_id")}`)),
    );
    const doc: Record<string, unknown> = {
      schema: METADATA_SCHEMA,
      cert_id: value("cert_id"),
      student_name: value("student_name"),
      student_id_hash: studentIdHash,
      degree: value("degree"),
      field_of_study: value("field_of_study"),
      institution_address: session.pair.address,
      institution_name: value("institution_name"),
      issue_date: value("issue_date"),
      extra: { student_id_salt: salt },
    };
    if (value("grade")) doc.grade = value("grade");

    let canonical: Uint8Array;
    try {
      canonical = canonicalizeMetadata(doc);
    } catch (exc) {
      if (exc instanceof SchemaViolation) {
        outcome.replaceChildren(notice("error", `metadata: ${exc.message}`));
        return;
      }
      throw exc;
    }

    try {
      const cid = await api.putMetadata(canonical);
      const nonce = await api.nextNonce(session.pair.address);
      const tx = await signTransaction(
        session.pair,
        {
          type: "issue_certificate",
          cert_id: doc.cert_id as string,
          cid,
          metadata_hash: toHex(sha256Bytes(canonical)),
        },
        nonce,
        Math.floor(Date.now() / 1000),
      );
      const response = await api.submitTx(tx);
      const event0 = response.events[0] ?? {};
      if (event0.type === "Rejected") {
        outcome.replaceChildren(notice("error", `rejected: ${event0.reason}: ${event0.detail}`));
        return;
      }
      const uri = encodeQrPayload(session.pair.address, doc.cert_id as string, cid);
      const canvas = el("canvas", { class: "qr" });
      paintQr(canvas, renderQrImage(uri));
      outcome.replaceChildren(
        notice("ok", `issued ${doc.cert_id} in block ${response.receipt.height}`),
        el("p", { class: "mono" }, [`CID: ${cid}`]),
        el("p", { class: "mono" }, [uri]),
        canvas,
      );
    } catch (exc) {
      outcome.replaceChildren(notice("error", String(exc)));
    }
  };

  root.append(form, outcome);
}
