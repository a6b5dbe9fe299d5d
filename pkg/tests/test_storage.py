"""Storage service: resources, link minting, single-use redemption."""

import pytest

from chainacl.contracts import RequestResult, encrypt_request_result
from chainacl.crypto import Provider, sha256
from chainacl.ledger import LINK_LIFETIME
from chainacl.storage import (
    LINK_TOKEN_LEN,
    NONCE_LEN,
    REDEEM_ALREADY_REDEEMED,
    REDEEM_EXPIRED,
    REDEEM_OP_NOT_PERMITTED,
    REDEEM_UNKNOWN_TOKEN,
    REDEEM_WRONG_NONCE,
    LinkGrant,
    RedeemError,
    StorageError,
    StorageService,
    open_link_ciphertext,
)
from chainacl.transactions import LinkDeliveryTx, RedemptionLogTx


@pytest.fixture
def p():
    return Provider(seed=61)


@pytest.fixture
def actors(p):
    return {
        "storage": p.generate_keypair(),
        "validators": [p.generate_keypair() for _ in range(3)],
        "user": p.generate_keypair(),
    }


@pytest.fixture
def service(p, actors):
    svc = StorageService(
        keypair=actors["storage"],
        validators=tuple(v.public_key for v in actors["validators"]),
        provider=p,
        seed=61,
    )
    svc.put_resource(5, b"the quick brown payload", name="r5")
    return svc


def _granted_envelope(p, actors, rid=b"\x01" * 16, resource=5, op=1,
                      access=(False, True, True, False), time=10):
    result = RequestResult(
        request_id=rid,
        user_pk=actors["user"].public_key,
        resource_id=resource,
        operation=op,
        access_list=access,
        granted=access[op],
        time=time,
    )
    return encrypt_request_result(
        p, result, actors["storage"].public_key, actors["validators"][0]
    )


def _issue(service, p, actors, **kw):
    tx = service.handle_request_result(_granted_envelope(p, actors, **kw), now=10)
    assert isinstance(tx, LinkDeliveryTx)
    return open_link_ciphertext(p, actors["user"], tx.ciphertext)


def test_put_resource_and_metadata(service):
    meta = service.get_metadata(5)
    assert meta.digest == sha256(b"the quick brown payload")
    assert meta.size == len(b"the quick brown payload")
    with pytest.raises(StorageError):
        service.put_resource(5, b"again")
    with pytest.raises(StorageError):
        service.get_metadata(6)


def test_put_resource_persists_to_disk(p, actors, tmp_path):
    svc = StorageService(
        keypair=actors["storage"],
        validators=(actors["validators"][0].public_key,),
        provider=p,
        data_dir=tmp_path / "blobs",
    )
    meta = svc.put_resource(1, b"bytes on disk")
    assert (tmp_path / "blobs" / meta.digest.hex()).read_bytes() == b"bytes on disk"


def test_granted_result_mints_encrypted_link(service, p, actors):
    grant = _issue(service, p, actors)
    assert len(grant.link_token) == LINK_TOKEN_LEN
    assert len(grant.nonce) == NONCE_LEN
    assert grant.issued_at == 10
    assert grant.expires_at == 10 + LINK_LIFETIME


def test_link_ciphertext_is_user_bound(service, p, actors):
    tx = service.handle_request_result(_granted_envelope(p, actors), now=10)
    stranger = p.generate_keypair()
    from chainacl.crypto import DecryptionError

    with pytest.raises(DecryptionError):
        open_link_ciphertext(p, stranger, tx.ciphertext)


def test_denied_result_records_denial(service, p, actors):
    envelope = _granted_envelope(p, actors, access=(False,) * 4, op=2)
    assert service.handle_request_result(envelope, now=10) is None
    assert service.denials[-1].reason == "denied_by_policy"


def test_replayed_request_id_refused(service, p, actors):
    _issue(service, p, actors, rid=b"\x02" * 16)
    dup = service.handle_request_result(
        _granted_envelope(p, actors, rid=b"\x02" * 16), now=11
    )
    assert dup is None
    assert service.denials[-1].reason == "already_served"


def test_unknown_resource_refused(service, p, actors):
    envelope = _granted_envelope(p, actors, resource=999)
    assert service.handle_request_result(envelope, now=10) is None
    assert service.denials[-1].reason == "unknown_resource"


def test_garbage_envelope_refused(service):
    assert service.handle_request_result(b"junk", now=10) is None
    assert service.denials[-1].reason.startswith("bad_envelope")


def test_redeem_happy_path(service, p, actors):
    grant = _issue(service, p, actors)
    payload, log_tx = service.redeem(grant.link_token, grant.nonce, operation=1, now=20)
    assert payload == b"the quick brown payload"
    assert isinstance(log_tx, RedemptionLogTx)
    assert log_tx.nonce == grant.nonce
    assert log_tx.user_pk == actors["user"].public_key
    assert log_tx.time == 20


def test_second_redemption_always_refused(service, p, actors):
    grant = _issue(service, p, actors)
    service.redeem(grant.link_token, grant.nonce, operation=1, now=20)
    with pytest.raises(RedeemError) as info:
        service.redeem(grant.link_token, grant.nonce, operation=1, now=21)
    assert info.value.reason == REDEEM_ALREADY_REDEEMED
    # also refused for a different permitted operation
    with pytest.raises(RedeemError) as info:
        service.redeem(grant.link_token, grant.nonce, operation=2, now=21)
    assert info.value.reason == REDEEM_ALREADY_REDEEMED


def test_redeem_check_order(service, p, actors):
    """Operation range, then token, then nonce, then reuse, then expiry."""
    grant = _issue(service, p, actors)
    with pytest.raises(RedeemError) as info:
        service.redeem(b"\x00" * LINK_TOKEN_LEN, b"\x00" * NONCE_LEN, operation=9, now=20)
    assert info.value.reason == REDEEM_OP_NOT_PERMITTED
    with pytest.raises(RedeemError) as info:
        service.redeem(b"\x00" * LINK_TOKEN_LEN, grant.nonce, operation=1, now=20)
    assert info.value.reason == REDEEM_UNKNOWN_TOKEN
    with pytest.raises(RedeemError) as info:
        service.redeem(grant.link_token, b"\x00" * NONCE_LEN, operation=1, now=20)
    assert info.value.reason == REDEEM_WRONG_NONCE
    service.redeem(grant.link_token, grant.nonce, operation=1, now=20)
    with pytest.raises(RedeemError) as info:
        # reuse reported even when the operation would now be refused too
        service.redeem(grant.link_token, grant.nonce, operation=0, now=9999)
    assert info.value.reason == REDEEM_ALREADY_REDEEMED


def test_redeem_expiry_boundary(service, p, actors):
    grant = _issue(service, p, actors)
    deadline = grant.expires_at
    with pytest.raises(RedeemError) as info:
        service.redeem(grant.link_token, grant.nonce, operation=1, now=deadline + 1)
    assert info.value.reason == REDEEM_EXPIRED
    # the failed attempt latched the link as expired, even for earlier times
    with pytest.raises(RedeemError) as info:
        service.redeem(grant.link_token, grant.nonce, operation=1, now=deadline)
    assert info.value.reason == REDEEM_EXPIRED


def test_redeem_at_exact_deadline_succeeds(service, p, actors):
    grant = _issue(service, p, actors)
    payload, _ = service.redeem(grant.link_token, grant.nonce, operation=1, now=grant.expires_at)
    assert payload == b"the quick brown payload"


def test_unpermitted_operation_refused(service, p, actors):
    grant = _issue(service, p, actors, access=(False, True, False, False))
    with pytest.raises(RedeemError) as info:
        service.redeem(grant.link_token, grant.nonce, operation=3, now=20)
    assert info.value.reason == REDEEM_OP_NOT_PERMITTED
    # the refusal must not consume the link
    payload, _ = service.redeem(grant.link_token, grant.nonce, operation=1, now=20)
    assert payload == b"the quick brown payload"


def test_expire_links_bulk(service, p, actors):
    g1 = _issue(service, p, actors, rid=b"\x03" * 16)
    g2 = _issue(service, p, actors, rid=b"\x04" * 16)
    service.redeem(g1.link_token, g1.nonce, operation=1, now=20)
    assert service.expire_links(now=g2.expires_at) == 0
    assert service.expire_links(now=g2.expires_at + 1) == 1  # only the unredeemed one
    assert service.expire_links(now=g2.expires_at + 2) == 0  # already latched


def test_link_grant_round_trip():
    grant = LinkGrant(link_token=b"t" * 16, nonce=b"n" * 16, issued_at=77)
    assert LinkGrant.decode(grant.encode()) == grant
    assert grant.expires_at == 77 + LINK_LIFETIME


def test_distinct_links_distinct_credentials(service, p, actors):
    grants = [
        _issue(service, p, actors, rid=bytes([i]) * 16) for i in range(8)
    ]
    tokens = {g.link_token for g in grants}
    nonces = {g.nonce for g in grants}
    assert len(tokens) == 8 and len(nonces) == 8
