// Government and regulator panels: role administration forms that sign
// transactions locally and render the node's verdict verbatim.

import { NodeApi } from "../api.js";
import { Session } from "../session.js";
import { signTransaction, TxPayload } from "../tx.js";
import { el, field, notice } from "./helpers.js";

async function sendAdminTx(
  api: NodeApi,
  session: Session,
  payload: TxPayload,
  outcome: HTMLElement,
  success: string,
): Promise<void> {
  outcome.replaceChildren(notice("info", "submitting…"));
  try {
    const nonce = await api.nextNonce(session.pair.address);
    const tx = await signTransaction(session.pair, payload, nonce, Math.floor(Date.now() / 1000));
    const response = await api.submitTx(tx);
    const event0 = response.events[0] ?? {};
    if (event0.type === "Rejected") {
      outcome.replaceChildren(notice("error", `rejected: ${event0.reason}: ${event0.detail}`));
    } else {
      outcome.replaceChildren(notice("ok", success));
    }
  } catch (exc) {
    outcome.replaceChildren(notice("error", String(exc)));
  }
}

export function renderGovernmentPanel(root: HTMLElement, api: NodeApi, session: Session | null): void {
  root.replaceChildren(el("h2", {}, ["Government panel"]));
  if (!session || session.role !== "Government") {
    root.append(notice("info", "This panel needs the Government key; the node decides your role."));
    return;
  }
  const address = el("input", { placeholder: "0x…" });
  const outcome = el("div");
  const authorize = el("button", {}, ["Authorize regulator"]);
  authorize.onclick = () =>
    void sendAdminTx(
      api,
      session,
      { type: "authorize_regulator", regulator: address.value.trim() },
      outcome,
      `regulator authorized: ${address.value.trim()}`,
    );
  const revoke = el("button", { class: "secondary" }, ["Revoke regulator"]);
  revoke.onclick = () =>
    void sendAdminTx(
      api,
      session,
      { type: "revoke_regulator", regulator: address.value.trim() },
      outcome,
      `regulator revoked: ${address.value.trim()}`,
    );
  root.append(
    field("Regulator address", address),
    el("div", { class: "actions" }, [authorize, revoke]),
    outcome,
  );
}

export function renderRegulatorPanel(root: HTMLElement, api: NodeApi, session: Session | null): void {
  root.replaceChildren(el("h2", {}, ["Regulator panel"]));
  if (!session || session.role !== "Regulator") {
    root.append(notice("info", "This panel needs a Regulator key; the node decides your role."));
    return;
  }
  const address = el("input", { placeholder: "0x…" });
  const name = el("input", { placeholder: "Institution name" });
  const outcome = el("div");
  const register = el("button", {}, ["Register institution"]);
  register.onclick = () =>
    void sendAdminTx(
      api,
      session,
      {
        type: "register_institution",
        institution: address.value.trim(),
        name: name.value.trim(),
      },
      outcome,
      `institution registered: ${address.value.trim()}`,
    );
  const deactivate = el("button", { class: "secondary" }, ["Deactivate institution"]);
  deactivate.onclick = () =>
    void sendAdminTx(
      api,
      session,
      { type: "deactivate_institution", institution: address.value.trim() },
      outcome,
      `institution deactivated: ${address.value.trim()}`,
    );
  root.append(
    field("Institution address", address),
    field("Institution name (for registration)", name),
    el("div", { class: "actions" }, [register, deactivate]),
    outcome,
  );
}

export function renderDashboard(root: HTMLElement, api: NodeApi): void {
  root.replaceChildren(el("h2", {}, ["Analytics dashboard"]));
  const body = el("div");
  root.append(body);
  void (async () => {
    try {
      // one source of truth: the node's aggregates, no client-side math
      const stats = await api.stats();
      const rows = [
        ["Certificates issued", stats.issued_total],
        ["Certificates revoked", stats.revoked_total],
        ["Active institutions", stats.institutions_active],
        ["Active regulators", stats.regulators_active],
      ].map(([label, value]) =>
        el("tr", {}, [el("th", {}, [String(label)]), el("td", {}, [String(value)])]),
      );
      const perInstitution = Object.entries(stats.per_institution).map(([addr, count]) =>
        el("tr", {}, [el("td", { class: "mono" }, [addr]), el("td", {}, [String(count)])]),
      );
      body.replaceChildren(
        el("table", { class: "kv" }, rows),
        el("h3", {}, ["Issued per institution"]),
        perInstitution.length
          ? el("table", { class: "kv" }, perInstitution)
          : notice("info", "no certificates issued yet"),
      );
    } catch (exc) {
      body.replaceChildren(notice("error", String(exc)));
    }
  })();
}
