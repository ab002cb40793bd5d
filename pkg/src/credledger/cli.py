"""Command-line client for every node capability, plus the node process itself.

Exit codes: 0 success, 1 domain rejection (e.g. Unauthorized), 2 usage
error, 3 transport or node error. With --json the raw HTTP response body
is printed byte-for-byte. The `serve` command exits 0 on clean shutdown,
2 on configuration errors, 3 on a corrupt ledger.
"""

from __future__ import annotations

import hashlib
import json
import sys
import time
from pathlib import Path
from typing import Optional

import click
import httpx

from .canonical import EncodingError, canonical_bytes, parse_hex
from .cas import CasError, Cid, SchemaViolation, canonicalize_metadata
from .identity import (
    Address,
    IdentityError,
    authorize_regulator_payload,
    deactivate_institution_payload,
    generate_keypair,
    issue_certificate_payload,
    load_keypair,
    register_institution_payload,
    revoke_certificate_payload,
    revoke_regulator_payload,
    save_keypair,
    sign_transaction,
)
from .verifier import QrError, check_report, decode_qr_payload, encode_qr_payload

EXIT_OK = 0
EXIT_REJECTED = 1
EXIT_USAGE = 2
EXIT_TRANSPORT = 3

DEFAULT_URL = "http://127.0.0.1:8545"


class TransportFailure(click.ClickException):
    exit_code = EXIT_TRANSPORT


class DomainRejection(click.ClickException):
    exit_code = EXIT_REJECTED


def _client(url: str) -> httpx.Client:
    return httpx.Client(base_url=url, timeout=10.0)


def _request(client: httpx.Client, method: str, path: str, **kwargs) -> httpx.Response:
    try:
        response = client.request(method, path, **kwargs)
    except httpx.HTTPError as exc:
        raise TransportFailure(f"node unreachable: {exc}") from exc
    if response.status_code >= 400:
        raise TransportFailure(f"node rejected request ({response.status_code}): {response.text}")
    return response


def _emit(response: httpx.Response, as_json: bool, human: str) -> None:
    if as_json:
        sys.stdout.buffer.write(response.content)
        sys.stdout.buffer.write(b"\n")
    else:
        click.echo(human)


def _load_key(path: str):
    try:
        return load_keypair(Path(path))
    except (OSError, IdentityError) as exc:
        raise click.UsageError(f"cannot load key file: {exc}")


def _send_tx(client: httpx.Client, keypair, payload, nonce: Optional[int]) -> httpx.Response:
    sender = keypair.address.display
    if nonce is None:
        doc = _request(client, "GET", f"/v1/nonce/{sender}").json()
        nonce = doc["next_nonce"]
    tx = sign_transaction(keypair, payload, nonce=nonce, timestamp=int(time.time()))
    return _request(
        client,
        "POST",
        "/v1/tx",
        content=canonical_bytes(tx.to_doc()),
        headers={"content-type": "application/json"},
    )


def _finish_tx(response: httpx.Response, as_json: bool, human: str) -> None:
    """Print the submit result; Rejected events exit 1, per the exit-code table."""
    doc = response.json()
    rejected = [e for e in doc.get("events", []) if e.get("type") == "Rejected"]
    if as_json:
        _emit(response, True, "")
    elif rejected:
        rej = rejected[0]
        click.echo(f"rejected: {rej['reason']}: {rej.get('detail', '')}")
    else:
        click.echo(human)
    if rejected:
        sys.exit(EXIT_REJECTED)


url_option = click.option(
    "--url",
    envvar="CREDLEDGER_URL",
    default=DEFAULT_URL,
    show_default=True,
    help="Node base URL (env CREDLEDGER_URL).",
)
json_option = click.option("--json", "as_json", is_flag=True, help="Print the raw response body.")
key_option = click.option("--key", "key_path", required=True, help="Signing key file.")
nonce_option = click.option("--nonce", type=int, default=None, help="Override the fetched nonce.")


@click.group()
def main() -> None:
    """Credential-ledger operator and integrator client."""


@main.command()
@click.option("--out", "out_path", required=True, help="Where to write the key file.")
@click.option("--seed", default=None, help="32-byte hex seed for deterministic keys.")
@json_option
def keygen(out_path: str, seed: Optional[str], as_json: bool) -> None:
    """Generate a keypair and print its address."""
    seed_bytes = None
    if seed is not None:
        try:
            seed_bytes = parse_hex(seed, 32, "seed")
        except EncodingError as exc:
            raise click.UsageError(str(exc))
    keypair = generate_keypair(seed_bytes)
    save_keypair(keypair, Path(out_path))
    doc = {"address": keypair.address.display, "public_key": keypair.public_key.hex()}
    if as_json:
        sys.stdout.buffer.write(canonical_bytes(doc) + b"\n")
    else:
        click.echo(f"address: {doc['address']}")
        click.echo(f"public_key: {doc['public_key']}")
        click.echo(f"key file: {out_path}")


@main.group()
def gov() -> None:
    """Government actions."""


@gov.command("authorize-regulator")
@key_option
@click.option("--regulator", required=True, help="Regulator address to authorize.")
@nonce_option
@url_option
@json_option
def gov_authorize(key_path: str, regulator: str, nonce: Optional[int], url: str, as_json: bool) -> None:
    keypair = _load_key(key_path)
    try:
        payload = authorize_regulator_payload(Address.parse(regulator))
    except IdentityError as exc:
        raise click.UsageError(str(exc))
    with _client(url) as client:
        response = _send_tx(client, keypair, payload, nonce)
        _finish_tx(response, as_json, f"regulator authorized: {regulator}")


@gov.command("revoke-regulator")
@key_option
@click.option("--regulator", required=True, help="Regulator address to deactivate.")
@nonce_option
@url_option
@json_option
def gov_revoke(key_path: str, regulator: str, nonce: Optional[int], url: str, as_json: bool) -> None:
    keypair = _load_key(key_path)
    try:
        payload = revoke_regulator_payload(Address.parse(regulator))
    except IdentityError as exc:
        raise click.UsageError(str(exc))
    with _client(url) as client:
        response = _send_tx(client, keypair, payload, nonce)
        _finish_tx(response, as_json, f"regulator revoked: {regulator}")


@main.group()
def reg() -> None:
    """Regulator actions."""


@reg.command("register-institution")
@key_option
@click.option("--institution", required=True, help="Institution address.")
@click.option("--name", required=True, help="Institution display name.")
@nonce_option
@url_option
@json_option
def reg_register(
    key_path: str, institution: str, name: str, nonce: Optional[int], url: str, as_json: bool
) -> None:
    keypair = _load_key(key_path)
    try:
        payload = register_institution_payload(Address.parse(institution), name)
    except IdentityError as exc:
        raise click.UsageError(str(exc))
    with _client(url) as client:
        response = _send_tx(client, keypair, payload, nonce)
        _finish_tx(response, as_json, f"institution registered: {institution} ({name})")


@reg.command("deactivate-institution")
@key_option
@click.option("--institution", required=True, help="Institution address.")
@nonce_option
@url_option
@json_option
def reg_deactivate(
    key_path: str, institution: str, nonce: Optional[int], url: str, as_json: bool
) -> None:
    keypair = _load_key(key_path)
    try:
        payload = deactivate_institution_payload(Address.parse(institution))
    except IdentityError as exc:
        raise click.UsageError(str(exc))
    with _client(url) as client:
        response = _send_tx(client, keypair, payload, nonce)
        _finish_tx(response, as_json, f"institution deactivated: {institution}")


@main.group()
def inst() -> None:
    """Institution actions."""


@inst.command("issue")
@key_option
@click.option("--metadata", "metadata_path", required=True, help="Certificate metadata JSON file.")
@nonce_option
@url_option
@json_option
def inst_issue(
    key_path: str, metadata_path: str, nonce: Optional[int], url: str, as_json: bool
) -> None:
    """Canonicalize metadata, upload it, and issue the linking certificate."""
    keypair = _load_key(key_path)
    try:
        doc = json.loads(Path(metadata_path).read_text())
        canonical = canonicalize_metadata(doc)
    except (OSError, ValueError) as exc:
        raise click.UsageError(f"metadata file: {exc}")
    except SchemaViolation as exc:
        raise click.UsageError(f"metadata file: {exc}")
    digest = hashlib.sha256(canonical).digest()
    with _client(url) as client:
        upload = _request(client, "POST", "/v1/metadata", content=canonical)
        cid_text = upload.json()["cid"]
        payload = issue_certificate_payload(doc["cert_id"], cid_text, digest)
        response = _send_tx(client, keypair, payload, nonce)
        tx_hash = response.json()["receipt"]["tx_hash"]
        _finish_tx(
            response,
            as_json,
            f"issued {doc['cert_id']}\ncid: {cid_text}\ntx: {tx_hash}",
        )


@inst.command("revoke")
@key_option
@click.option("--cert-id", required=True, help="Certificate id to revoke.")
@click.option("--reason", required=True, help="Revocation reason.")
@nonce_option
@url_option
@json_option
def inst_revoke(
    key_path: str, cert_id: str, reason: str, nonce: Optional[int], url: str, as_json: bool
) -> None:
    keypair = _load_key(key_path)
    payload = revoke_certificate_payload(cert_id, reason)
    with _client(url) as client:
        response = _send_tx(client, keypair, payload, nonce)
        _finish_tx(response, as_json, f"revoked {cert_id}")


@main.command()
@click.option("--id", "by_id", default=None, help="ISSUER/CERT_ID lookup key.")
@click.option("--hash", "by_hash", default=None, help="Metadata hash (64 hex chars).")
@click.option("--cid", "by_cid", default=None, help="CID text.")
@click.option("--qr", "by_qr", default=None, help="Scanned QR payload URI.")
@click.option("--out", "out_path", default=None, help="Also write the report to a .scvr file.")
@url_option
@json_option
def verify(
    by_id: Optional[str],
    by_hash: Optional[str],
    by_cid: Optional[str],
    by_qr: Optional[str],
    out_path: Optional[str],
    url: str,
    as_json: bool,
) -> None:
    """Verify a certificate; any resolved status exits 0."""
    keys = [k for k in (by_id, by_hash, by_cid, by_qr) if k is not None]
    if len(keys) != 1:
        raise click.UsageError("give exactly one of --id, --hash, --cid, --qr")
    params: dict[str, str] = {}
    if by_id is not None:
        issuer, sep, cert_id = by_id.partition("/")
        if not sep or not cert_id:
            raise click.UsageError("--id must be ISSUER_ADDRESS/CERT_ID")
        params = {"i": issuer, "c": cert_id}
    elif by_hash is not None:
        params = {"h": by_hash}
    elif by_cid is not None:
        params = {"d": by_cid}
    else:
        params = {"qr": by_qr}
    with _client(url) as client:
        response = _request(client, "GET", "/v1/verify", params=params)
    report = response.json()
    if out_path is not None:
        Path(out_path).write_bytes(response.content)
    lines = [f"status: {report['status']}"]
    for field in ("issuer", "cert_id", "institution_name", "cid", "revocation_reason"):
        if field in report:
            lines.append(f"{field}: {report[field]}")
    lines.append(f"ledger_height: {report['ledger_height']}")
    _emit(response, as_json, "\n".join(lines))


@main.group()
def report() -> None:
    """Verification report tools."""


@report.command("check")
@click.argument("report_file")
@click.option("--node-key", default=None, help="Expected node public key (64 hex chars).")
def report_check(report_file: str, node_key: Optional[str]) -> None:
    """Exit 0 iff the report's signature (and optional key pin) checks out."""
    try:
        data = Path(report_file).read_bytes()
    except OSError as exc:
        raise click.UsageError(f"cannot read report: {exc}")
    expected = None
    if node_key is not None:
        try:
            expected = parse_hex(node_key, 32, "node-key")
        except EncodingError as exc:
            raise click.UsageError(str(exc))
    if check_report(data, expected):
        click.echo("report signature: OK")
    else:
        raise DomainRejection("report signature: INVALID")


@main.group()
def qr() -> None:
    """QR payload codec."""


@qr.command("encode")
@click.option("--issuer", required=True)
@click.option("--cert-id", required=True)
@click.option("--cid", "cid_text", required=True)
def qr_encode(issuer: str, cert_id: str, cid_text: str) -> None:
    try:
        uri = encode_qr_payload(Address.parse(issuer), cert_id, Cid.parse(cid_text))
    except (IdentityError, CasError, QrError) as exc:
        raise click.UsageError(str(exc))
    click.echo(uri)


@qr.command("decode")
@click.argument("uri")
def qr_decode(uri: str) -> None:
    try:
        issuer, cert_id, cid = decode_qr_payload(uri)
    except QrError as exc:
        raise click.UsageError(str(exc))
    click.echo(f"issuer: {issuer.display}")
    click.echo(f"cert_id: {cert_id}")
    click.echo(f"cid: {cid.text}")


@main.group()
def node() -> None:
    """Node queries."""


def _node_get(path: str, url: str, as_json: bool, render) -> None:
    with _client(url) as client:
        response = _request(client, "GET", path)
    _emit(response, as_json, render(response.json()))


@node.command("audit")
@url_option
@json_option
def node_audit(url: str, as_json: bool) -> None:
    def render(doc: dict) -> str:
        if doc["ok"]:
            return "chain audit: OK"
        return f"chain audit: FAILED at height {doc['first_bad_height']} ({doc['reason']})"

    _node_get("/v1/audit", url, as_json, render)


@node.command("head")
@url_option
@json_option
def node_head(url: str, as_json: bool) -> None:
    def render(doc: dict) -> str:
        if doc.get("height") is None:
            return "no blocks"
        return f"height {doc['height']}  block {doc['block_hash']}  txs {doc['tx_count']}"

    _node_get("/v1/head", url, as_json, render)


@node.command("stats")
@url_option
@json_option
def node_stats(url: str, as_json: bool) -> None:
    def render(doc: dict) -> str:
        lines = [
            f"issued_total: {doc['issued_total']}",
            f"revoked_total: {doc['revoked_total']}",
            f"institutions_active: {doc['institutions_active']}",
            f"regulators_active: {doc['regulators_active']}",
        ]
        for addr, count in doc["per_institution"].items():
            lines.append(f"  {addr}: {count}")
        return "\n".join(lines)

    _node_get("/v1/stats", url, as_json, render)


@main.command()
@click.option("--data-dir", envvar="CREDLEDGER_DATA_DIR", required=True)
@click.option("--government", required=True, help="Genesis government address.")
@click.option("--listen", envvar="CREDLEDGER_LISTEN", default="127.0.0.1:8545", show_default=True)
@click.option("--signing-key", envvar="CREDLEDGER_SIGNING_KEY", default=None)
@click.option("--block-interval", type=int, default=1, show_default=True)
def serve(
    data_dir: str,
    government: str,
    listen: str,
    signing_key: Optional[str],
    block_interval: int,
) -> None:
    """Run the node: exit 0 clean, 2 config error, 3 corrupt ledger."""
    import uvicorn

    from .ledger import CorruptLedger
    from .node import ConfigInvalid, Node, NodeConfig, SnapshotMismatch, build_app

    host, sep, port = listen.rpartition(":")
    if not sep or not port.isdigit():
        click.echo(f"invalid listen address: {listen}", err=True)
        sys.exit(EXIT_USAGE)
    key_path = Path(signing_key) if signing_key else Path(data_dir) / "report_signing.key"
    config = NodeConfig(
        data_dir=Path(data_dir),
        government=government,
        listen=listen,
        block_interval=block_interval,
        signing_key_path=key_path,
    )
    try:
        running = Node.boot(config)
    except ConfigInvalid as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    except (CorruptLedger, SnapshotMismatch) as exc:
        click.echo(f"ledger error: {exc}", err=True)
        sys.exit(EXIT_TRANSPORT)
    try:
        uvicorn.run(build_app(running), host=host, port=int(port), log_level="warning")
    finally:
        running.close()


if __name__ == "__main__":
    main()
