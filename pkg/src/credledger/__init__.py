"""credledger: a permissioned credential-ledger node.

Role-based certificate issuance, public verification, and revocation over
an append-only hash-chained transaction log with an embedded
content-addressed metadata store.
"""

__version__ = "0.1.0"
