// Single-page app shell: session management, role-aware navigation, and
// the five pages. Tabs for actions the session role cannot perform are
// hidden; the node still independently rejects anything forced through.

import { loadConfig, NodeApi } from "./api.js";
import { Session, startSession } from "./session.js";
import { el, notice } from "./views/helpers.js";
import { renderIssuePage } from "./views/issue.js";
import { renderDashboard, renderGovernmentPanel, renderRegulatorPanel } from "./views/panels.js";
import { renderVerifyPage } from "./views/verify.js";

type Page = "verify" | "issue" | "regulator" | "government" | "dashboard" | "session";

interface PageSpec {
  label: string;
  visible: (session: Session | null) => boolean;
}

const PAGES: Record<Page, PageSpec> = {
  verify: { label: "Verify", visible: () => true },
  dashboard: { label: "Dashboard", visible: () => true },
  issue: { label: "Issue", visible: (s) => s?.role === "Institution" },
  regulator: { label: "Regulator", visible: (s) => s?.role === "Regulator" },
  government: { label: "Government", visible: (s) => s?.role === "Government" },
  session: { label: "Session", visible: () => true },
};

async function boot(): Promise<void> {
  const config = await loadConfig();
  const api = new NodeApi(config.nodeUrl);
  let session: Session | null = null;
  let current: Page = "verify";

  const nav = el("nav", { class: "tabs" });
  const content = el("main", { class: "content" });
  document.body.replaceChildren(
    el("header", {}, [el("h1", {}, ["ShikkhaChain verifier"]), nav]),
    content,
  );

  function renderSessionPage(root: HTMLElement): void {
    root.replaceChildren(el("h2", {}, ["Session"]));
    if (session) {
      root.append(
        notice("ok", `signed in as ${session.role}`),
        el("p", { class: "mono" }, [session.pair.address]),
      );
    }
    const file = el("input", { type: "file", accept: ".key,text/plain" });
    const status = el("div");
    file.onchange = async () => {
      const chosen = file.files?.[0];
      if (!chosen) return;
      try {
        session = await startSession(api, await chosen.text());
        status.replaceChildren(notice("ok", `role: ${session.role}`));
        render();
      } catch (exc) {
        status.replaceChildren(notice("error", String(exc)));
      }
    };
    root.append(
      el("p", {}, ["Import a key file; your role is whatever the node reports for its address."]),
      file,
      status,
    );
  }

  function render(): void {
    nav.replaceChildren(
      ...Object.entries(PAGES)
        .filter(([, spec]) => spec.visible(session))
        .map(([page, spec]) => {
          const button = el(
            "button",
            { class: page === current ? "tab tab-active" : "tab" },
            [spec.label],
          );
          button.onclick = () => {
            current = page as Page;
            render();
          };
          return button;
        }),
    );
    switch (current) {
      case "verify":
        return renderVerifyPage(content, api);
      case "issue":
        return renderIssuePage(content, api, session);
      case "regulator":
        return renderRegulatorPanel(content, api, session);
      case "government":
        return renderGovernmentPanel(content, api, session);
      case "dashboard":
        return renderDashboard(content, api);
      case "session":
        return renderSessionPage(content);
    }
  }

  render();
}

void boot();
