"""Storage service: resources, single-use access links, redemptions.

The service trusts nothing but validator-signed result envelopes. A
granted result mints an AccessLink (opaque token + single-use nonce) that
is delivered encrypted to the requesting user on chain; redemption is a
direct bearer-style exchange, and every successful redemption is pushed
back to the chain as a redemption-log transaction.

Possession of (token, nonce) is the entire redemption credential; the
service does not re-identify the caller. The log still attributes the
redemption to the user the link was issued to.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

from .codec import Reader, Writer
from .contracts import EnvelopeError, decrypt_request_result
from .crypto import KeyPair, Provider, sha256
from .ledger import LINK_LIFETIME
from .transactions import (
    LinkDeliveryTx,
    N_OPERATIONS,
    RedemptionLogTx,
    build_link_delivery_tx,
    build_redemption_log_tx,
)

LINK_TOKEN_LEN = 16
NONCE_LEN = 16

REDEEM_UNKNOWN_TOKEN = "unknown_token"
REDEEM_WRONG_NONCE = "wrong_nonce"
REDEEM_EXPIRED = "expired"
REDEEM_ALREADY_REDEEMED = "already_redeemed"
REDEEM_OP_NOT_PERMITTED = "operation_not_permitted"


class StorageError(ValueError):
    pass


class RedeemError(StorageError):
    """Redemption refused; ``reason`` is one of the REDEEM_* constants."""

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


@dataclass(frozen=True)
class ResourceMeta:
    resource_id: int
    name: str
    digest: bytes
    size: int


@dataclass(frozen=True)
class Resource:
    resource_id: int
    payload: bytes
    meta: ResourceMeta


@dataclass
class AccessLink:
    link_token: bytes
    nonce: bytes
    resource_id: int
    permitted_ops: tuple[bool, ...]
    user_pk: bytes
    issued_at: int
    expires_at: int
    request_id: bytes
    redeemed: bool = False
    expired: bool = False


@dataclass(frozen=True)
class DenialRecord:
    request_id: bytes
    reason: str
    time: int


@dataclass(frozen=True)
class LinkGrant:
    """What the user recovers by decrypting a link delivery."""

    link_token: bytes
    nonce: bytes
    issued_at: int

    @property
    def expires_at(self) -> int:
        return self.issued_at + LINK_LIFETIME

    def encode(self) -> bytes:
        w = Writer()
        w.bytes_(self.link_token)
        w.bytes_(self.nonce)
        w.u64(self.issued_at)
        return w.getvalue()

    @classmethod
    def decode(cls, data: bytes) -> "LinkGrant":
        r = Reader(data)
        grant = cls(link_token=r.bytes_(), nonce=r.bytes_(), issued_at=r.u64())
        r.expect_end()
        return grant


def open_link_ciphertext(provider: Provider, user: KeyPair, ciphertext: bytes) -> LinkGrant:
    return LinkGrant.decode(provider.decrypt(user.secret_key, ciphertext))


class StorageService:
    """Single-writer state machine over resource and link tables."""

    def __init__(
        self,
        keypair: KeyPair,
        validators: tuple[bytes, ...],
        provider: Provider | None = None,
        seed: int | None = None,
        data_dir: str | Path | None = None,
        link_lifetime: int = LINK_LIFETIME,
    ):
        self.keypair = keypair
        self.validators = tuple(validators)
        self.provider = provider or Provider(seed)
        self.link_lifetime = link_lifetime
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self._rng = random.Random(seed)
        self.resources: dict[int, Resource] = {}
        self.links: dict[bytes, AccessLink] = {}
        self.links_by_nonce: dict[bytes, bytes] = {}
        self.served_requests: set[bytes] = set()
        self.denials: list[DenialRecord] = []

    # -- resources ----------------------------------------------------------

    def put_resource(self, resource_id: int, payload: bytes, name: str = "") -> ResourceMeta:
        if resource_id in self.resources:
            raise StorageError(f"resource {resource_id} already stored")
        digest = sha256(payload)
        meta = ResourceMeta(resource_id=resource_id, name=name, digest=digest, size=len(payload))
        self.resources[resource_id] = Resource(resource_id=resource_id, payload=payload, meta=meta)
        if self.data_dir is not None:
            self.data_dir.mkdir(parents=True, exist_ok=True)
            (self.data_dir / digest.hex()).write_bytes(payload)
        return meta

    def get_metadata(self, resource_id: int) -> ResourceMeta:
        resource = self.resources.get(resource_id)
        if resource is None:
            raise StorageError(f"unknown resource {resource_id}")
        return resource.meta

    # -- link issuance --------------------------------------------------------

    def handle_request_result(self, envelope: bytes, now: int) -> LinkDeliveryTx | None:
        """Mint and deliver a link for a granted result; record everything else.

        Returns the chain-bound delivery transaction, or None when no link
        was issued (denied result, replayed request_id, bad envelope,
        unknown resource); the reason lands in ``denials``.
        """
        try:
            result = decrypt_request_result(self.provider, self.keypair, envelope, self.validators)
        except EnvelopeError as exc:
            self.denials.append(DenialRecord(request_id=b"", reason=f"bad_envelope: {exc}", time=now))
            return None
        if result.request_id in self.served_requests:
            self.denials.append(
                DenialRecord(request_id=result.request_id, reason="already_served", time=now)
            )
            return None
        self.served_requests.add(result.request_id)
        if not result.granted:
            self.denials.append(
                DenialRecord(request_id=result.request_id, reason="denied_by_policy", time=now)
            )
            return None
        if result.resource_id not in self.resources:
            self.denials.append(
                DenialRecord(request_id=result.request_id, reason="unknown_resource", time=now)
            )
            return None

        link = AccessLink(
            link_token=self._rng.randbytes(LINK_TOKEN_LEN),
            nonce=self._rng.randbytes(NONCE_LEN),
            resource_id=result.resource_id,
            permitted_ops=tuple(result.access_list),
            user_pk=result.user_pk,
            issued_at=now,
            expires_at=now + self.link_lifetime,
            request_id=result.request_id,
        )
        self.links[link.link_token] = link
        self.links_by_nonce[link.nonce] = link.link_token
        grant = LinkGrant(link_token=link.link_token, nonce=link.nonce, issued_at=now)
        ciphertext = self.provider.encrypt(result.user_pk, grant.encode())
        return build_link_delivery_tx(
            self.provider, self.keypair, ciphertext=ciphertext, request_id=result.request_id
        )

    # -- redemption -----------------------------------------------------------

    def redeem(
        self, link_token: bytes, nonce: bytes, operation: int, now: int
    ) -> tuple[bytes, RedemptionLogTx]:
        """One-shot exchange of (token, nonce) for the resource payload."""
        if not (0 <= operation < N_OPERATIONS):
            raise RedeemError(REDEEM_OP_NOT_PERMITTED, f"no such operation {operation}")
        link = self.links.get(link_token)
        if link is None:
            raise RedeemError(REDEEM_UNKNOWN_TOKEN)
        if nonce != link.nonce:
            raise RedeemError(REDEEM_WRONG_NONCE)
        if link.redeemed:
            raise RedeemError(REDEEM_ALREADY_REDEEMED)
        if link.expired or now > link.expires_at:
            link.expired = True
            raise RedeemError(REDEEM_EXPIRED)
        if not link.permitted_ops[operation]:
            raise RedeemError(REDEEM_OP_NOT_PERMITTED)
        resource = self.resources.get(link.resource_id)
        if resource is None:
            raise RedeemError(REDEEM_UNKNOWN_TOKEN, "resource vanished")
        link.redeemed = True
        log_tx = build_redemption_log_tx(
            self.provider, self.keypair, nonce=link.nonce, time=now, user_pk=link.user_pk
        )
        return resource.payload, log_tx

    def expire_links(self, now: int) -> int:
        """Mark overdue links unredeemable; returns how many just expired."""
        count = 0
        for link in self.links.values():
            if link.redeemed or link.expired:
                continue
            if link.expires_at < now:
                link.expired = True
                count += 1
        return count
