// Thin typed client over the node HTTP API. The UI holds no state the
// node does not confirm: every post-action view re-fetches through here.

import { canonicalBytes } from "./canonical.js";
import { SignedTransactionDoc } from "./tx.js";

export interface TxResponse {
  receipt: { tx_hash: string; height?: number; index?: number };
  events: Array<Record<string, string>>;
}

export interface Stats {
  issued_total: number;
  revoked_total: number;
  institutions_active: number;
  regulators_active: number;
  per_institution: Record<string, number>;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    detail: string,
  ) {
    super(`${code}: ${detail}`);
  }
}

export class NodeApi {
  constructor(private baseUrl: string) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await fetch(this.baseUrl + path, init);
    if (!response.ok) {
      let code = `HTTP ${response.status}`;
      let detail = "";
      try {
        const body = await response.json();
        code = body.error ?? code;
        detail = body.detail ?? "";
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, code, detail);
    }
    return response;
  }

  async role(address: string): Promise<string> {
    const body = await (await this.request(`/v1/roles/${address}`)).json();
    return body.role;
  }

  async nextNonce(address: string): Promise<number> {
    const body = await (await this.request(`/v1/nonce/${address}`)).json();
    return body.next_nonce;
  }

  async submitTx(tx: SignedTransactionDoc): Promise<TxResponse> {
    const response = await this.request("/v1/tx", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: canonicalBytes(tx) as unknown as BodyInit,
    });
    return response.json();
  }

  async putMetadata(content: Uint8Array): Promise<string> {
    const response = await this.request("/v1/metadata", {
      method: "POST",
      headers: { "content-type": "application/octet-stream" },
      body: content as unknown as BodyInit,
    });
    return (await response.json()).cid;
  }

  /** Raw report bytes; these are the exportable .scvr document. */
  async verifyRaw(params: URLSearchParams): Promise<Uint8Array> {
    const response = await this.request(`/v1/verify?${params}`);
    return new Uint8Array(await response.arrayBuffer());
  }

  async stats(): Promise<Stats> {
    return (await this.request("/v1/stats")).json();
  }

  async head(): Promise<Record<string, unknown>> {
    return (await this.request("/v1/head")).json();
  }

  async certificate(issuer: string, certId: string): Promise<Record<string, unknown>> {
    return (await this.request(`/v1/certificates/${issuer}/${certId}`)).json();
  }
}

export interface RuntimeConfig {
  nodeUrl: string;
}

/** The single runtime configuration file pointing at the node URL. */
export async function loadConfig(): Promise<RuntimeConfig> {
  const response = await fetch("config.json");
  if (!response.ok) return { nodeUrl: "http://127.0.0.1:8545" };
  return response.json();
}
