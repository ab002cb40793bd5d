// The in-memory session: an imported (or generated) keypair plus the
// role the node reports for its address. Role comes from the node on
// every refresh, never from a local assumption.

import { NodeApi } from "./api.js";
import { SessionKeyPair, exportKeyFile, generateSeed, importKeyFile, keyPairFromSeed } from "./crypto.js";

export type RoleName = "Government" | "Regulator" | "Institution" | "Public";

export interface Session {
  pair: SessionKeyPair;
  role: RoleName;
}

export async function startSession(api: NodeApi, keyFileText: string): Promise<Session> {
  const pair = await importKeyFile(keyFileText);
  const role = (await api.role(pair.address)) as RoleName;
  return { pair, role };
}

export async function startFreshSession(api: NodeApi): Promise<Session & { keyFile: string }> {
  const pair = await keyPairFromSeed(generateSeed());
  const role = (await api.role(pair.address)) as RoleName;
  return { pair, role, keyFile: exportKeyFile(pair) };
}

export async function refreshRole(api: NodeApi, session: Session): Promise<Session> {
  return { ...session, role: (await api.role(session.pair.address)) as RoleName };
}
