"""Chain state machine: the replicated key-value memory behind access control.

State is only ever derived by replaying blocks from genesis, so every
replica that applies the same blocks holds bit-identical state. Leadership
rotates round-robin over time slots (slot = time // block_interval); a
block is valid only if its slot is later than its parent's and it is
signed by that slot's validator. Binding leadership to slots rather than
heights keeps the rotation live when a validator stops sealing.

Contract execution is injected through a small hook object so this module
stays free of model/rule logic; the hooks must be deterministic, which the
genesis engine fingerprint pins down across replicas.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .blocks import (
    Block,
    ConfigurationError,
    GenesisConfig,
    block_hash,
    make_genesis_block,
    seal_block,
    verify_block_signature,
)
from .codec import Reader, Writer
from .crypto import KeyPair, Provider, sha256
from .transactions import (
    AccessRequestTx,
    LinkDeliveryTx,
    RedemptionLogTx,
    RegisterUserTx,
    Transaction,
    VerifiedRequestTx,
    encode_transaction,
    tx_id,
    verify_transaction_signature,
)

FRESHNESS_WINDOW = 120  # seconds; max |tx.time - now|
LINK_LIFETIME = 300  # seconds from issuance to link/nonce expiry

LOG_KINDS = (
    "requested",
    "authenticated",
    "decided",
    "link_issued",
    "redeemed",
    "denied",
    "expired",
)

# validate_transaction reject reasons
REJECT_BAD_SIGNATURE = "bad_signature"
REJECT_STALE_TIME = "stale_time"
REJECT_UNAUTHORIZED = "unauthorized_sender"
REJECT_DUPLICATE = "duplicate"
REJECT_DUPLICATE_USER = "duplicate_user"
REJECT_UNKNOWN_REQUEST = "unknown_request"
REJECT_REPLAYED_NONCE = "replayed_nonce"
REJECT_INTERNAL_ONLY = "internal_only"

_VERIFIER = Provider()


class LedgerError(ValueError):
    """Invalid ledger operation; carries a short machine-readable reason."""

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


@dataclass(frozen=True)
class LogEntry:
    """One audit event. The log is append-only and replay-reproducible."""

    kind: str
    user_pk: bytes
    resource_id: int | None
    operation: int | None
    decision: str  # "granted" | "denied" | ""
    block_height: int
    time: int
    request_id: bytes = b""
    reason: str = ""

    def __post_init__(self):
        if self.kind not in LOG_KINDS:
            raise LedgerError("bad_log_kind", self.kind)

    def encode_into(self, w: Writer) -> None:
        w.string(self.kind)
        w.bytes_(self.user_pk)
        w.boolean(self.resource_id is not None)
        w.u32(self.resource_id or 0)
        w.boolean(self.operation is not None)
        w.u8(self.operation or 0)
        w.string(self.decision)
        w.u64(self.block_height)
        w.u64(self.time)
        w.bytes_(self.request_id)
        w.string(self.reason)


def format_log_entry(e: LogEntry) -> str:
    parts = [f"h={e.block_height}", f"t={e.time}", e.kind]
    if e.user_pk:
        parts.append(f"user={sha256(e.user_pk).hex()[:10]}")
    if e.resource_id is not None:
        parts.append(f"res={e.resource_id}")
    if e.operation is not None:
        parts.append(f"op={e.operation}")
    if e.decision:
        parts.append(e.decision)
    if e.reason:
        parts.append(f"reason={e.reason}")
    if e.request_id:
        parts.append(f"req={e.request_id.hex()[:10]}")
    return " ".join(parts)


@dataclass(frozen=True)
class UserRecord:
    user_index: int
    registered_at: int


@dataclass(frozen=True)
class NonceRecord:
    issued_at: int
    redeemed: bool
    redeemed_at: int | None = None


@dataclass(frozen=True)
class RequestRecord:
    """Lifecycle of one access request, keyed by request_id."""

    request_id: bytes
    user_pk: bytes
    resource_id: int
    operation: int
    submitted_at: int
    status: str = "pending"  # pending|denied|granted|link_issued|redeemed|expired
    deny_reason: str = ""
    access_list: tuple[bool, ...] | None = None
    overridden: tuple[bool, ...] | None = None
    link_issued_at: int | None = None
    link_ciphertext: bytes = b""
    redeemed_at: int | None = None

    def encode_into(self, w: Writer) -> None:
        w.bytes_(self.request_id)
        w.bytes_(self.user_pk)
        w.u32(self.resource_id)
        w.u8(self.operation)
        w.u64(self.submitted_at)
        w.string(self.status)
        w.string(self.deny_reason)
        w.boolean(self.access_list is not None)
        for b in self.access_list or ():
            w.boolean(b)
        w.boolean(self.link_issued_at is not None)
        w.u64(self.link_issued_at or 0)
        w.bytes_(self.link_ciphertext)
        w.boolean(self.redeemed_at is not None)
        w.u64(self.redeemed_at or 0)


class ContractHooks(Protocol):
    """Deterministic contract layer invoked during block execution."""

    def fingerprint(self) -> bytes: ...

    def authenticate(
        self, tx: AccessRequestTx, state: "LedgerState", now: int
    ) -> tuple[VerifiedRequestTx | None, str | None]: ...

    def authorize(self, verified: VerifiedRequestTx, request: AccessRequestTx, state: "LedgerState", now: int): ...


class LedgerState:
    """Replayed view of the chain plus the node-local pending pool.

    Everything except ``pending_pool``/``pool_ids`` is consensus state and
    feeds ``state_digest``. Values inside the maps are frozen records;
    updates replace entries, so ``clone`` is a set of shallow copies.
    """

    def __init__(self, config: GenesisConfig):
        genesis = make_genesis_block(config)
        self.config = config
        self.chain: list[Block] = [genesis]
        self.users: dict[bytes, UserRecord] = {}
        self.nonce_registry: dict[bytes, NonceRecord] = {}
        self.access_log: list[LogEntry] = []
        self.requests: dict[bytes, RequestRecord] = {}
        self.outstanding_links: dict[bytes, tuple[bytes, ...]] = {}
        self.seen_tx_ids: set[bytes] = set()
        self.pending_pool: list[Transaction] = []
        self.pool_ids: set[bytes] = set()

    # -- views ------------------------------------------------------------

    @property
    def validators(self) -> tuple[bytes, ...]:
        return self.config.validators

    @property
    def admin_pks(self) -> tuple[bytes, ...]:
        return self.config.admin_pks

    @property
    def storage_pk(self) -> bytes:
        return self.config.storage_pk

    @property
    def height(self) -> int:
        return self.chain[-1].height

    @property
    def tip_hash(self) -> bytes:
        return block_hash(self.chain[-1])

    def user_record(self, user_pk: bytes) -> UserRecord | None:
        return self.users.get(sha256(user_pk))

    def is_registered(self, user_pk: bytes) -> bool:
        return sha256(user_pk) in self.users

    def clone(self) -> "LedgerState":
        st = LedgerState.__new__(LedgerState)
        st.config = self.config
        st.chain = list(self.chain)
        st.users = dict(self.users)
        st.nonce_registry = dict(self.nonce_registry)
        st.access_log = list(self.access_log)
        st.requests = dict(self.requests)
        st.outstanding_links = dict(self.outstanding_links)
        st.seen_tx_ids = set(self.seen_tx_ids)
        st.pending_pool = list(self.pending_pool)
        st.pool_ids = set(self.pool_ids)
        return st


def genesis(config: GenesisConfig) -> LedgerState:
    """Fresh state whose chain holds only the derived genesis block."""
    return LedgerState(config)


def expected_leader(index: int, validators: Sequence[bytes]) -> bytes:
    """Round-robin rotation: validators[index mod v]."""
    if not validators:
        raise ConfigurationError("validators must not be empty")
    return validators[index % len(validators)]


def slot_of(time: int, config: GenesisConfig) -> int:
    return time // config.block_interval


def slot_leader(time: int, config: GenesisConfig) -> bytes:
    return expected_leader(slot_of(time, config), config.validators)


# -- transaction admission -----------------------------------------------------


def _fresh(tx_time: int, now: int) -> bool:
    return abs(tx_time - now) <= FRESHNESS_WINDOW


def validate_transaction(
    state: LedgerState,
    tx: Transaction,
    now: int,
    provider: Provider = _VERIFIER,
    against_pool: bool = True,
) -> str | None:
    """None when admissible against the given state, else a reject reason.

    ``against_pool`` treats pool membership as a duplicate too; admission
    wants that, but block execution must judge pool transactions against
    chain history alone or they would collide with themselves.
    """
    txid = tx_id(tx)
    if txid in state.seen_tx_ids or (against_pool and txid in state.pool_ids):
        return REJECT_DUPLICATE

    if isinstance(tx, RegisterUserTx):
        if tx.admin_pk not in state.admin_pks:
            return REJECT_UNAUTHORIZED
        if not verify_transaction_signature(provider, tx):
            return REJECT_BAD_SIGNATURE
        if not _fresh(tx.time, now):
            return REJECT_STALE_TIME
        if state.is_registered(tx.user_pk):
            return REJECT_DUPLICATE_USER
        return None

    if isinstance(tx, AccessRequestTx):
        # registration is deliberately not checked here; the authentication
        # contract decides that and logs the denial
        if not verify_transaction_signature(provider, tx):
            return REJECT_BAD_SIGNATURE
        if not _fresh(tx.time, now):
            return REJECT_STALE_TIME
        return None

    if isinstance(tx, LinkDeliveryTx):
        if not verify_transaction_signature(provider, tx, storage_pk=state.storage_pk):
            return REJECT_BAD_SIGNATURE
        record = state.requests.get(tx.request_id)
        if record is None or record.status == "pending":
            return REJECT_UNKNOWN_REQUEST
        if record.status != "granted":
            return REJECT_DUPLICATE if record.status in ("link_issued", "redeemed") else REJECT_UNKNOWN_REQUEST
        return None

    if isinstance(tx, RedemptionLogTx):
        if not verify_transaction_signature(provider, tx, storage_pk=state.storage_pk):
            return REJECT_BAD_SIGNATURE
        if not _fresh(tx.time, now):
            return REJECT_STALE_TIME
        existing = state.nonce_registry.get(tx.nonce)
        if existing is not None and existing.redeemed:
            return REJECT_REPLAYED_NONCE
        if not state.outstanding_links.get(tx.user_pk):
            return REJECT_UNKNOWN_REQUEST
        return None

    if isinstance(tx, VerifiedRequestTx):
        # contract output; never admitted from the network
        return REJECT_INTERNAL_ONLY

    return REJECT_INTERNAL_ONLY


def register_user(state: LedgerState, setup_tx: RegisterUserTx, now: int | None = None) -> LedgerState:
    """Standalone registration, for state built outside block flow."""
    reason = validate_transaction(state, setup_tx, now if now is not None else setup_tx.time)
    if reason is not None:
        raise LedgerError(reason, "registration rejected")
    st = state.clone()
    _register(st, setup_tx)
    st.seen_tx_ids.add(tx_id(setup_tx))
    return st


def _register(state: LedgerState, tx: RegisterUserTx) -> None:
    state.users[sha256(tx.user_pk)] = UserRecord(
        user_index=len(state.users), registered_at=tx.time
    )


def record_nonce(state: LedgerState, nonce: bytes, now: int) -> LedgerState:
    if nonce in state.nonce_registry:
        raise LedgerError(REJECT_REPLAYED_NONCE, "nonce already recorded")
    st = state.clone()
    st.nonce_registry[nonce] = NonceRecord(issued_at=now, redeemed=False)
    return st


def redeem_nonce(state: LedgerState, nonce: bytes, now: int) -> LedgerState:
    record = state.nonce_registry.get(nonce)
    if record is None:
        raise LedgerError(REJECT_UNKNOWN_REQUEST, "nonce never recorded")
    if record.redeemed:
        raise LedgerError(REJECT_REPLAYED_NONCE, "nonce already redeemed")
    if now > record.issued_at + LINK_LIFETIME:
        raise LedgerError("expired", "nonce lifetime elapsed")
    st = state.clone()
    st.nonce_registry[nonce] = replace(record, redeemed=True, redeemed_at=now)
    return st


# -- pool ----------------------------------------------------------------------


def submit_to_pool(state: LedgerState, tx: Transaction, now: int, provider: Provider = _VERIFIER) -> str | None:
    """Admit into the local pending pool; returns reject reason or None."""
    reason = validate_transaction(state, tx, now, provider)
    if reason is not None:
        return reason
    state.pending_pool.append(tx)
    state.pool_ids.add(tx_id(tx))
    return None


# -- block execution -----------------------------------------------------------


@dataclass
class ApplyOutcome:
    ok: bool
    reason: str = ""
    state: LedgerState | None = None
    results: list = field(default_factory=list)  # contract outputs, block order
    entries: list[LogEntry] = field(default_factory=list)
    skipped: list[tuple[Transaction, str]] = field(default_factory=list)


def _append_entry(state: LedgerState, outcome: ApplyOutcome, entry: LogEntry) -> None:
    state.access_log.append(entry)
    outcome.entries.append(entry)


def _sweep_expired(state: LedgerState, outcome: ApplyOutcome, height: int, now: int) -> None:
    for rid, record in list(state.requests.items()):
        if record.status != "link_issued":
            continue
        assert record.link_issued_at is not None
        if now <= record.link_issued_at + LINK_LIFETIME:
            continue
        state.requests[rid] = replace(record, status="expired")
        queue = state.outstanding_links.get(record.user_pk, ())
        state.outstanding_links[record.user_pk] = tuple(q for q in queue if q != rid)
        _append_entry(
            state,
            outcome,
            LogEntry(
                kind="expired",
                user_pk=record.user_pk,
                resource_id=record.resource_id,
                operation=record.operation,
                decision="denied",
                block_height=height,
                time=now,
                request_id=rid,
                reason="link_lifetime_elapsed",
            ),
        )


def _execute_access_request(
    state: LedgerState,
    outcome: ApplyOutcome,
    tx: AccessRequestTx,
    runtime: ContractHooks,
    height: int,
    now: int,
) -> VerifiedRequestTx | None:
    """Runs the contract pipeline for one admitted request.

    Returns the derived verification transaction when authentication
    passed (the block must carry it immediately after the request).
    """
    rid = tx.info.request_id
    state.requests[rid] = RequestRecord(
        request_id=rid,
        user_pk=tx.user_pk,
        resource_id=tx.info.resource_id,
        operation=tx.info.operation,
        submitted_at=tx.time,
    )
    _append_entry(
        state,
        outcome,
        LogEntry(
            kind="requested",
            user_pk=tx.user_pk,
            resource_id=tx.info.resource_id,
            operation=tx.info.operation,
            decision="",
            block_height=height,
            time=tx.time,
            request_id=rid,
        ),
    )

    verified, failure = runtime.authenticate(tx, state, now)
    if verified is None:
        state.requests[rid] = replace(
            state.requests[rid], status="denied", deny_reason=failure or "unspecified"
        )
        _append_entry(
            state,
            outcome,
            LogEntry(
                kind="denied",
                user_pk=tx.user_pk,
                resource_id=tx.info.resource_id,
                operation=tx.info.operation,
                decision="denied",
                block_height=height,
                time=now,
                request_id=rid,
                reason=failure or "unspecified",
            ),
        )
        return None

    _append_entry(
        state,
        outcome,
        LogEntry(
            kind="authenticated",
            user_pk=tx.user_pk,
            resource_id=tx.info.resource_id,
            operation=tx.info.operation,
            decision="",
            block_height=height,
            time=now,
            request_id=rid,
        ),
    )

    result = runtime.authorize(verified, tx, state, now)
    outcome.results.append(result)
    decision = "granted" if result.granted else "denied"
    basis = "rule_override" if any(result.overridden) else "model"
    state.requests[rid] = replace(
        state.requests[rid],
        status=decision,
        access_list=tuple(result.access_list),
        overridden=tuple(result.overridden),
    )
    _append_entry(
        state,
        outcome,
        LogEntry(
            kind="decided",
            user_pk=tx.user_pk,
            resource_id=tx.info.resource_id,
            operation=tx.info.operation,
            decision=decision,
            block_height=height,
            time=now,
            request_id=rid,
            reason=basis,
        ),
    )
    if not result.granted:
        state.requests[rid] = replace(state.requests[rid], deny_reason="policy")
        _append_entry(
            state,
            outcome,
            LogEntry(
                kind="denied",
                user_pk=tx.user_pk,
                resource_id=tx.info.resource_id,
                operation=tx.info.operation,
                decision="denied",
                block_height=height,
                time=now,
                request_id=rid,
                reason="policy",
            ),
        )
    return verified


def _execute_link_delivery(
    state: LedgerState, outcome: ApplyOutcome, tx: LinkDeliveryTx, height: int, now: int
) -> None:
    record = state.requests[tx.request_id]
    state.requests[tx.request_id] = replace(
        record,
        status="link_issued",
        link_issued_at=now,
        link_ciphertext=tx.ciphertext,
    )
    queue = state.outstanding_links.get(record.user_pk, ())
    state.outstanding_links[record.user_pk] = queue + (tx.request_id,)
    _append_entry(
        state,
        outcome,
        LogEntry(
            kind="link_issued",
            user_pk=record.user_pk,
            resource_id=record.resource_id,
            operation=record.operation,
            decision="granted",
            block_height=height,
            time=now,
            request_id=tx.request_id,
        ),
    )


def _execute_redemption(
    state: LedgerState, outcome: ApplyOutcome, tx: RedemptionLogTx, height: int, now: int
) -> None:
    # correlate to the oldest outstanding link of this user; exact whenever
    # a user holds at most one live link, which every scripted flow obeys
    queue = state.outstanding_links[tx.user_pk]
    rid, rest = queue[0], queue[1:]
    state.outstanding_links[tx.user_pk] = rest
    record = state.requests[rid]
    issued_at = record.link_issued_at if record.link_issued_at is not None else tx.time
    state.nonce_registry[tx.nonce] = NonceRecord(
        issued_at=issued_at, redeemed=True, redeemed_at=tx.time
    )
    state.requests[rid] = replace(record, status="redeemed", redeemed_at=tx.time)
    _append_entry(
        state,
        outcome,
        LogEntry(
            kind="redeemed",
            user_pk=tx.user_pk,
            resource_id=record.resource_id,
            operation=record.operation,
            decision="granted",
            block_height=height,
            time=tx.time,
            request_id=rid,
        ),
    )


def _execute_block_txs(
    state: LedgerState,
    outcome: ApplyOutcome,
    txs: Sequence[Transaction],
    runtime: ContractHooks | None,
    height: int,
    block_time: int,
    derive: bool,
    provider: Provider,
) -> tuple[Transaction, ...] | None:
    """Shared engine for sealing (derive=True) and verification.

    When deriving, inadmissible pool transactions are skipped and the
    returned tuple (with verification transactions interleaved) is what
    the leader seals. When verifying, the tuple must match the block's
    transactions exactly; any divergence fails the whole block by
    returning None with outcome.reason set.
    """
    included: list[Transaction] = []
    expected_verified: VerifiedRequestTx | None = None

    def fail(reason: str, detail: str = "") -> None:
        outcome.reason = f"{reason}: {detail}" if detail else reason

    for tx in txs:
        if expected_verified is not None:
            # verification mode only: the tx after a passing request must
            # be the bit-identical contract output
            if not isinstance(tx, VerifiedRequestTx) or encode_transaction(tx) != encode_transaction(expected_verified):
                fail("verified_mismatch", "contract re-derivation disagrees with block")
                return None
            included.append(expected_verified)
            state.seen_tx_ids.add(tx_id(expected_verified))
            expected_verified = None
            continue

        if isinstance(tx, VerifiedRequestTx):
            if derive:
                outcome.skipped.append((tx, REJECT_INTERNAL_ONLY))
                continue
            fail(REJECT_INTERNAL_ONLY, "verification tx without preceding request")
            return None

        reason = validate_transaction(state, tx, block_time, provider, against_pool=False)
        if reason is not None:
            if derive:
                outcome.skipped.append((tx, reason))
                continue
            fail(reason, "inadmissible transaction in block")
            return None

        if isinstance(tx, RegisterUserTx):
            _register(state, tx)
        elif isinstance(tx, AccessRequestTx):
            assert runtime is not None
            verified = _execute_access_request(state, outcome, tx, runtime, height, block_time)
            if verified is not None:
                if derive:
                    included.append(tx)
                    state.seen_tx_ids.add(tx_id(tx))
                    included.append(verified)
                    state.seen_tx_ids.add(tx_id(verified))
                    continue
                expected_verified = verified
        elif isinstance(tx, LinkDeliveryTx):
            _execute_link_delivery(state, outcome, tx, height, block_time)
        elif isinstance(tx, RedemptionLogTx):
            _execute_redemption(state, outcome, tx, height, block_time)

        included.append(tx)
        state.seen_tx_ids.add(tx_id(tx))

    if expected_verified is not None:
        fail("verified_mismatch", "missing contract output at end of block")
        return None

    _sweep_expired(state, outcome, height, block_time)
    return tuple(included)


def _needs_engine(txs: Iterable[Transaction]) -> bool:
    return any(isinstance(tx, AccessRequestTx) for tx in txs)


def _engine_ok(state: LedgerState, runtime: ContractHooks | None, txs: Iterable[Transaction]) -> str | None:
    if not _needs_engine(txs):
        return None
    if runtime is None:
        return "engine_missing: block contains access requests"
    if runtime.fingerprint() != state.config.engine_fingerprint:
        return "engine_mismatch: local engine differs from genesis fingerprint"
    return None


def apply_block(
    state: LedgerState,
    block: Block,
    runtime: ContractHooks | None = None,
    provider: Provider = _VERIFIER,
) -> ApplyOutcome:
    """Validate and append one block; the input state is never mutated."""
    outcome = ApplyOutcome(ok=False)
    tip = state.chain[-1]

    if block.height != tip.height + 1:
        outcome.reason = f"bad_height: expected {tip.height + 1}, got {block.height}"
        return outcome
    if block.prev_hash != block_hash(tip):
        outcome.reason = "broken_hash_chain: prev_hash does not match tip"
        return outcome
    if block.genesis_config is not None:
        outcome.reason = "bad_block: config allowed only at genesis"
        return outcome
    if slot_of(block.time, state.config) <= slot_of(tip.time, state.config):
        outcome.reason = "stale_slot: block does not advance the slot clock"
        return outcome
    leader = slot_leader(block.time, state.config)
    if block.validator_pk != leader:
        outcome.reason = "wrong_leader: block not signed by the slot's validator"
        return outcome
    if not verify_block_signature(provider, block):
        outcome.reason = "bad_block_signature"
        return outcome
    engine_problem = _engine_ok(state, runtime, block.transactions)
    if engine_problem is not None:
        outcome.reason = engine_problem
        return outcome

    scratch = state.clone()
    executed = _execute_block_txs(
        scratch,
        outcome,
        block.transactions,
        runtime,
        block.height,
        block.time,
        derive=False,
        provider=provider,
    )
    if executed is None:
        outcome.entries = []
        outcome.results = []
        return outcome

    scratch.chain.append(block)
    included = {tx_id(tx) for tx in block.transactions}
    scratch.pending_pool = [tx for tx in scratch.pending_pool if tx_id(tx) not in included]
    scratch.pool_ids -= included
    outcome.ok = True
    outcome.state = scratch
    return outcome


def build_block(
    state: LedgerState,
    leader: KeyPair,
    now: int,
    runtime: ContractHooks | None = None,
    provider: Provider = _VERIFIER,
) -> tuple[Block | None, ApplyOutcome]:
    """Seal the pending pool into a block for the slot at ``now``.

    Returns (None, outcome) when there is nothing admissible to seal, the
    slot has not advanced past the tip, or this keypair does not lead the
    current slot. The caller applies the sealed block itself.
    """
    outcome = ApplyOutcome(ok=False)
    tip = state.chain[-1]
    if slot_of(now, state.config) <= slot_of(tip.time, state.config):
        outcome.reason = "stale_slot"
        return None, outcome
    if slot_leader(now, state.config) != leader.public_key:
        outcome.reason = "not_leader"
        return None, outcome
    if not state.pending_pool:
        outcome.reason = "empty_pool"
        return None, outcome
    engine_problem = _engine_ok(state, runtime, state.pending_pool)
    if engine_problem is not None:
        outcome.reason = engine_problem
        return None, outcome

    scratch = state.clone()
    executed = _execute_block_txs(
        scratch,
        outcome,
        list(state.pending_pool),
        runtime,
        tip.height + 1,
        now,
        derive=True,
        provider=provider,
    )
    assert executed is not None  # derive mode skips instead of failing
    if not executed:
        outcome.reason = "empty_pool"
        return None, outcome

    block = seal_block(
        provider=provider,
        leader=leader,
        height=tip.height + 1,
        prev_hash=block_hash(tip),
        time=now,
        transactions=executed,
    )
    outcome.ok = True
    return block, outcome


# -- queries -------------------------------------------------------------------


def query_access_log(
    state: LedgerState,
    user_pk: bytes | None = None,
    resource_id: int | None = None,
    decision: str | None = None,
    kind: str | None = None,
    height_range: tuple[int, int] | None = None,
) -> list[LogEntry]:
    """Matching entries in chain order; every filter is optional."""
    out = []
    for e in state.access_log:
        if user_pk is not None and e.user_pk != user_pk:
            continue
        if resource_id is not None and e.resource_id != resource_id:
            continue
        if decision is not None and e.decision != decision:
            continue
        if kind is not None and e.kind != kind:
            continue
        if height_range is not None and not (height_range[0] <= e.block_height <= height_range[1]):
            continue
        out.append(e)
    return out


def poll_request(state: LedgerState, request_id: bytes, now: int | None = None) -> RequestRecord | None:
    """Current lifecycle record, with read-time expiry applied."""
    record = state.requests.get(request_id)
    if record is None:
        return None
    if (
        now is not None
        and record.status == "link_issued"
        and record.link_issued_at is not None
        and now > record.link_issued_at + LINK_LIFETIME
    ):
        return replace(record, status="expired")
    return record


# -- chain selection and persistence ---------------------------------------------


def fork_choice(candidate_chains: Sequence[Sequence[Block]]) -> Sequence[Block]:
    """Longest chain; ties broken by lexicographically smaller tip hash."""
    if not candidate_chains:
        raise LedgerError("no_candidates", "fork choice over empty set")
    return min(candidate_chains, key=lambda c: (-len(c), block_hash(c[-1])))


def state_digest(state: LedgerState) -> bytes:
    """Digest of the replicated state; node-local pool excluded."""
    w = Writer()
    w.raw(state.tip_hash)
    w.u64(len(state.users))
    for key in sorted(state.users):
        record = state.users[key]
        w.raw(key)
        w.u32(record.user_index)
        w.u64(record.registered_at)
    w.u64(len(state.nonce_registry))
    for nonce in sorted(state.nonce_registry):
        record = state.nonce_registry[nonce]
        w.bytes_(nonce)
        w.u64(record.issued_at)
        w.boolean(record.redeemed)
        w.u64(record.redeemed_at or 0)
    w.u64(len(state.access_log))
    for entry in state.access_log:
        entry.encode_into(w)
    w.u64(len(state.requests))
    for rid in sorted(state.requests):
        state.requests[rid].encode_into(w)
    w.u64(len(state.outstanding_links))
    for pk in sorted(state.outstanding_links):
        w.bytes_(pk)
        queue = state.outstanding_links[pk]
        w.u32(len(queue))
        for rid in queue:
            w.bytes_(rid)
    return sha256(w.getvalue())


def save_chain(chain: Sequence[Block], path) -> None:
    """Append-only file of length-prefixed canonical block encodings."""
    from .blocks import encode_block

    w = Writer()
    for block in chain:
        w.bytes_(encode_block(block))
    Path(path).write_bytes(w.getvalue())


def load_chain(path) -> list[Block]:
    from .blocks import decode_block

    data = Path(path).read_bytes()
    r = Reader(data)
    blocks = []
    while r.remaining():
        blocks.append(decode_block(r.bytes_()))
    r.expect_end()
    return blocks


def replay_chain(
    blocks: Sequence[Block],
    runtime: ContractHooks | None = None,
    provider: Provider = _VERIFIER,
) -> LedgerState:
    """Rebuild state from genesis, enforcing every block rule on the way."""
    if not blocks:
        raise LedgerError("empty_chain", "no genesis block")
    from .blocks import encode_block

    head = blocks[0]
    if head.genesis_config is None:
        raise LedgerError("bad_genesis", "first block carries no config")
    if encode_block(head) != encode_block(make_genesis_block(head.genesis_config)):
        raise LedgerError("bad_genesis", "genesis block not derived from its config")
    state = genesis(head.genesis_config)
    for block in blocks[1:]:
        outcome = apply_block(state, block, runtime, provider)
        if not outcome.ok:
            raise LedgerError("invalid_block", f"height {block.height}: {outcome.reason}")
        assert outcome.state is not None
        state = outcome.state
    return state


def verify_chain(blocks: Sequence[Block], runtime: ContractHooks | None = None) -> bool:
    try:
        replay_chain(blocks, runtime)
        return True
    except (LedgerError, ValueError):
        return False


def snapshot_text(state: LedgerState) -> str:
    """Human-readable dump of the replicated state."""
    lines = [
        f"height {state.height} tip {state.tip_hash.hex()[:16]}",
        f"users {len(state.users)} nonces {len(state.nonce_registry)} "
        f"log {len(state.access_log)} requests {len(state.requests)}",
    ]
    for entry in state.access_log:
        lines.append("  " + format_log_entry(entry))
    return "\n".join(lines)
