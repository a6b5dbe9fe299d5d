"""Contract layer: request verification, authentication, authorization.

These run inside block execution on every replica, so they are pure
functions of (transaction, state snapshot, model, rules, block time). The
authorization outcome travels to the storage service as an encrypted,
validator-signed envelope; the on-chain record is the decision log entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import Reader, Writer
from .crypto import KeyPair, Provider, sha256
from .engine import (
    DecisionModel,
    PriorityRule,
    binary_repr,
    decide_access,
    format_rules,
    forward,
    model_to_bytes,
)
from .ledger import FRESHNESS_WINDOW, LedgerState
from .transactions import (
    AccessRequestTx,
    N_OPERATIONS,
    RESOURCE_BITS_WIDTH,
    USER_BITS_WIDTH,
    VerifiedRequestTx,
    verify_transaction_signature,
)

AUTH_FAIL_UNREGISTERED = "unregistered"
AUTH_FAIL_STALE = "stale"
AUTH_FAIL_BAD_SIGNATURE = "bad_signature"


class ContractError(ValueError):
    pass


class EnvelopeError(ContractError):
    """Request-result envelope failed authenticity or decryption checks."""


@dataclass(frozen=True)
class RequestResult:
    """Authorization outcome bound for the storage service."""

    request_id: bytes
    user_pk: bytes
    resource_id: int
    operation: int
    access_list: tuple[bool, ...]
    granted: bool
    time: int
    overridden: tuple[bool, ...] = (False,) * N_OPERATIONS

    def __post_init__(self):
        if len(self.access_list) != N_OPERATIONS:
            raise ContractError(f"access_list must have {N_OPERATIONS} entries")
        if self.granted != self.access_list[self.operation]:
            raise ContractError("granted must equal access_list[operation]")

    def encode(self) -> bytes:
        w = Writer()
        w.bytes_(self.request_id)
        w.bytes_(self.user_pk)
        w.u32(self.resource_id)
        w.u8(self.operation)
        for b in self.access_list:
            w.boolean(b)
        w.boolean(self.granted)
        w.u64(self.time)
        for b in self.overridden:
            w.boolean(b)
        return w.getvalue()

    @classmethod
    def decode(cls, data: bytes) -> "RequestResult":
        r = Reader(data)
        request_id = r.bytes_()
        user_pk = r.bytes_()
        resource_id = r.u32()
        operation = r.u8()
        access_list = tuple(r.boolean() for _ in range(N_OPERATIONS))
        granted = r.boolean()
        time = r.u64()
        overridden = tuple(r.boolean() for _ in range(N_OPERATIONS))
        r.expect_end()
        return cls(
            request_id=request_id,
            user_pk=user_pk,
            resource_id=resource_id,
            operation=operation,
            access_list=access_list,
            granted=granted,
            time=time,
            overridden=overridden,
        )


def verification_failure(
    provider: Provider, tx: AccessRequestTx, state: LedgerState, now: int
) -> str | None:
    """First failed admission condition, or None when all hold.

    Checked in order: sender registration, request freshness, signature.
    """
    if not state.is_registered(tx.user_pk):
        return AUTH_FAIL_UNREGISTERED
    if abs(tx.time - now) > FRESHNESS_WINDOW:
        return AUTH_FAIL_STALE
    if not verify_transaction_signature(provider, tx):
        return AUTH_FAIL_BAD_SIGNATURE
    return None


def access_verification_check(
    provider: Provider, tx: AccessRequestTx, state: LedgerState, now: int
) -> bool:
    return verification_failure(provider, tx, state, now) is None


def run_authentication(
    provider: Provider, tx: AccessRequestTx, state: LedgerState, now: int
) -> tuple[VerifiedRequestTx | None, str | None]:
    """Admission check, then the request re-expressed in binary form.

    The produced transaction is unsigned; its authority comes from every
    replica deriving it identically during block execution.
    """
    failure = verification_failure(provider, tx, state, now)
    if failure is not None:
        return None, failure
    record = state.user_record(tx.user_pk)
    assert record is not None
    verified = VerifiedRequestTx(
        time=tx.time,
        user_bits=binary_repr(record.user_index, USER_BITS_WIDTH),
        req_bits=binary_repr(tx.info.resource_id, RESOURCE_BITS_WIDTH),
        request_id=tx.info.request_id,
        locally_derived=True,
    )
    return verified, None


def _bits_to_int(bits: tuple[int, ...]) -> int:
    value = 0
    for b in bits:
        value = (value << 1) | b
    return value


def run_authorization(
    model: DecisionModel,
    rules: list[PriorityRule],
    verified: VerifiedRequestTx,
    request: AccessRequestTx,
    state: LedgerState,
    now: int,
) -> RequestResult:
    """Model scores folded with priority rules into the final grant vector.

    A stale verification (should never survive the authentication gate)
    fails closed: all operations denied, nothing overridden.
    """
    if not verified.locally_derived:
        raise ContractError("authorization requires a locally derived verification")
    user_index = _bits_to_int(verified.user_bits)
    resource_id = _bits_to_int(verified.req_bits)
    if abs(verified.time - now) > FRESHNESS_WINDOW:
        return RequestResult(
            request_id=verified.request_id,
            user_pk=request.user_pk,
            resource_id=resource_id,
            operation=request.info.operation,
            access_list=(False,) * N_OPERATIONS,
            granted=False,
            time=now,
        )
    x = np.array(verified.user_bits + verified.req_bits, dtype=np.float64)
    scores = forward(model, x)
    decision = decide_access(rules, scores, user_index, resource_id)
    return RequestResult(
        request_id=verified.request_id,
        user_pk=request.user_pk,
        resource_id=resource_id,
        operation=request.info.operation,
        access_list=decision.access_list,
        granted=decision.access_list[request.info.operation],
        time=now,
        overridden=decision.overridden,
    )


def engine_fingerprint(model: DecisionModel, rules: list[PriorityRule]) -> bytes:
    """Pins (model weights, rule set); goes into the genesis config."""
    return sha256(model_to_bytes(model) + b"\x00" + format_rules(rules).encode())


class ContractRuntime:
    """Engine bundle every validator runs; hooks consumed by block execution."""

    def __init__(self, model: DecisionModel, rules: list[PriorityRule], provider: Provider | None = None):
        self.model = model
        self.rules = list(rules)
        self.provider = provider or Provider()
        self._fingerprint = engine_fingerprint(model, rules)

    def fingerprint(self) -> bytes:
        return self._fingerprint

    def authenticate(
        self, tx: AccessRequestTx, state: LedgerState, now: int
    ) -> tuple[VerifiedRequestTx | None, str | None]:
        return run_authentication(self.provider, tx, state, now)

    def authorize(
        self, verified: VerifiedRequestTx, request: AccessRequestTx, state: LedgerState, now: int
    ) -> RequestResult:
        return run_authorization(self.model, self.rules, verified, request, state, now)


# -- delivery envelope -----------------------------------------------------------


def encrypt_request_result(
    provider: Provider, result: RequestResult, storage_pk: bytes, validator: KeyPair
) -> bytes:
    """Seal a result for storage: encrypted payload plus validator signature."""
    ciphertext = provider.encrypt(storage_pk, result.encode())
    sig = provider.sign(validator.secret_key, ciphertext)
    w = Writer()
    w.bytes_(ciphertext)
    w.bytes_(validator.public_key)
    w.bytes_(sig)
    return w.getvalue()


def decrypt_request_result(
    provider: Provider, storage: KeyPair, envelope: bytes, validators: tuple[bytes, ...]
) -> RequestResult:
    """Open a delivery envelope, enforcing that a known validator sent it."""
    try:
        r = Reader(envelope)
        ciphertext = r.bytes_()
        validator_pk = r.bytes_()
        sig = r.bytes_()
        r.expect_end()
    except ValueError as exc:
        raise EnvelopeError(f"malformed envelope: {exc}") from exc
    if validator_pk not in validators:
        raise EnvelopeError("envelope not signed by a known validator")
    if not provider.verify(validator_pk, ciphertext, sig):
        raise EnvelopeError("bad validator signature on envelope")
    try:
        payload = provider.decrypt(storage.secret_key, ciphertext)
    except Exception as exc:
        raise EnvelopeError(f"cannot decrypt envelope: {exc}") from exc
    try:
        return RequestResult.decode(payload)
    except ValueError as exc:
        raise EnvelopeError(f"malformed result payload: {exc}") from exc
