// Public verification page: hash / id / CID input, camera QR scanning,
// result banner, signed-report export, and a printable rendering.

import { NodeApi } from "../api.js";
import { decodeQrPayload, QrError, scanQrImage } from "../qr.js";
import { ErrorView, VerifyView, verifyAndBuildView } from "../report.js";
import { download, el, notice } from "./helpers.js";

function queryParams(input: string): URLSearchParams {
  const text = input.trim();
  if (text.startsWith("shikkha:")) return new URLSearchParams({ qr: text });
  if (text.startsWith("b") && !text.includes("/")) return new URLSearchParams({ d: text });
  if (/^(0x)?[0-9a-f]{64}$/.test(text)) {
    return new URLSearchParams({ h: text.replace(/^0x/, "") });
  }
  const slash = text.indexOf("/");
  if (text.startsWith("0x") && slash > 0) {
    return new URLSearchParams({ i: text.slice(0, slash), c: text.slice(slash + 1) });
  }
  throw new QrError("enter a certificate hash, CID, 0xISSUER/CERT_ID, or shikkha: URI");
}

function isError(view: VerifyView | ErrorView): view is ErrorView {
  return "error" in view;
}

export function renderVerifyPage(root: HTMLElement, api: NodeApi): void {
  root.replaceChildren();
  const input = el("input", {
    class: "verify-input",
    placeholder: "certificate hash, CID, 0xISSUER/CERT_ID, or shikkha: URI",
  });
  const result = el("div", { class: "verify-result" });
  const scanStatus = el("div", { class: "scan-status" });
  const video = el("video", { class: "scan-video", hidden: "hidden" });
  let scanning = false;

  async function run(query: URLSearchParams): Promise<void> {
    result.replaceChildren(notice("info", "checking…"));
    let raw: Uint8Array;
    try {
      raw = await api.verifyRaw(query);
    } catch (exc) {
      result.replaceChildren(notice("error", String(exc)));
      return;
    }
    const { view } = await verifyAndBuildView(raw);
    if (isError(view)) {
      result.replaceChildren(notice("error", view.error));
      return;
    }
    renderView(view, raw);
  }

  function renderView(view: VerifyView, raw: Uint8Array): void {
    const banner = el(
      "div",
      { class: `banner ${view.invalid ? "banner-invalid" : "banner-valid"}` },
      [view.banner],
    );
    const rows: HTMLElement[] = [];
    const add = (label: string, value?: string | number) => {
      if (value !== undefined) {
        rows.push(el("tr", {}, [el("th", {}, [label]), el("td", {}, [String(value)])]));
      }
    };
    add("Certificate", view.certId);
    add("Issuing institution", view.institutionName);
    add("Issuer address", view.issuer);
    add("CID", view.cid);
    if (view.metadata) {
      add("Student", view.metadata.student_name);
      add("Degree", view.metadata.degree);
      add("Field of study", view.metadata.field_of_study);
      add("Issue date", view.metadata.issue_date);
      if (view.metadata.grade) add("Grade", view.metadata.grade);
    }
    if (view.revokedAt !== undefined) {
      add("Revoked at", new Date(view.revokedAt * 1000).toISOString());
      add("Revocation reason", view.revocationReason);
    }
    add("Ledger height", view.ledgerHeight);
    add("Checked at", new Date(view.checkedAt * 1000).toISOString());

    const exportButton = el("button", { class: "secondary" }, ["Download signed report (.scvr)"]);
    exportButton.onclick = () => download(`${view.certId ?? "verification"}.scvr`, raw);
    const printButton = el("button", { class: "secondary" }, ["Print"]);
    printButton.onclick = () => window.print();

    result.replaceChildren(
      banner,
      el("table", { class: "kv printable" }, rows),
      el("div", { class: "actions" }, [exportButton, printButton]),
    );
  }

  async function startScan(): Promise<void> {
    if (scanning) return;
    if (!navigator.mediaDevices?.getUserMedia) {
      scanStatus.replaceChildren(notice("error", "no camera available"));
      return;
    }
    let stream: MediaStream;
    try {
      stream = await navigator.mediaDevices.getUserMedia({ video: { facingMode: "environment" } });
    } catch {
      scanStatus.replaceChildren(notice("error", "camera permission denied"));
      return;
    }
    scanning = true;
    video.hidden = false;
    video.srcObject = stream;
    await video.play();
    const canvas = el("canvas");
    const ctx = canvas.getContext("2d")!;

    const stop = () => {
      scanning = false;
      video.hidden = true;
      stream.getTracks().forEach((t) => t.stop());
    };

    const tick = () => {
      if (!scanning) return;
      if (video.readyState === video.HAVE_ENOUGH_DATA) {
        canvas.width = video.videoWidth;
        canvas.height = video.videoHeight;
        ctx.drawImage(video, 0, 0);
        const frame = ctx.getImageData(0, 0, canvas.width, canvas.height);
        const text = scanQrImage(frame);
        if (text !== null) {
          try {
            decodeQrPayload(text);
            stop();
            input.value = text;
            void run(new URLSearchParams({ qr: text }));
            return;
          } catch (exc) {
            scanStatus.replaceChildren(
              notice("error", exc instanceof QrError ? "not a ShikkhaChain code — try again" : String(exc)),
            );
          }
        }
      }
      requestAnimationFrame(tick);
    };
    scanStatus.replaceChildren(notice("info", "point the camera at a certificate QR code"));
    requestAnimationFrame(tick);
  }

  const checkButton = el("button", {}, ["Verify"]);
  checkButton.onclick = () => {
    try {
      void run(queryParams(input.value));
    } catch (exc) {
      result.replaceChildren(notice("error", String(exc)));
    }
  };
  const scanButton = el("button", { class: "secondary" }, ["Scan QR"]);
  scanButton.onclick = () => void startScan();

  root.append(
    el("h2", {}, ["Verify a certificate"]),
    el("div", { class: "verify-controls" }, [input, checkButton, scanButton]),
    scanStatus,
    video,
    result,
  );
}
