"""Block and genesis configuration encoding, sealing, and verification."""

import pytest

from chainacl.blocks import (
    GENESIS_PREV_HASH,
    Block,
    ConfigurationError,
    GenesisConfig,
    block_hash,
    decode_block,
    encode_block,
    make_genesis_block,
    seal_block,
    verify_block_signature,
)
from chainacl.crypto import Provider, sha256
from chainacl.transactions import RequestInfo, build_access_request_tx


@pytest.fixture(scope="module")
def p():
    return Provider(seed=31)


@pytest.fixture(scope="module")
def validators(p):
    return [p.generate_keypair() for _ in range(3)]


@pytest.fixture(scope="module")
def config(p, validators):
    return GenesisConfig(
        admin_pks=(p.generate_keypair().public_key,),
        validators=tuple(v.public_key for v in validators),
        storage_pk=p.generate_keypair().public_key,
        engine_fingerprint=sha256(b"engine"),
        genesis_time=0,
        block_interval=1,
    )


def _cfg_kwargs(config):
    return dict(
        admin_pks=config.admin_pks,
        validators=config.validators,
        storage_pk=config.storage_pk,
        engine_fingerprint=config.engine_fingerprint,
    )


def test_config_round_trip(config):
    assert GenesisConfig.decode(config.encode()) == config


def test_config_requires_three_validators(config):
    kw = _cfg_kwargs(config)
    with pytest.raises(ConfigurationError):
        GenesisConfig(**{**kw, "validators": config.validators[:2]})


def test_config_rejects_duplicate_validators(config):
    kw = _cfg_kwargs(config)
    dupes = (config.validators[0],) * 3
    with pytest.raises(ConfigurationError):
        GenesisConfig(**{**kw, "validators": dupes})


def test_config_rejects_empty_admins_and_storage(config):
    kw = _cfg_kwargs(config)
    with pytest.raises(ConfigurationError):
        GenesisConfig(**{**kw, "admin_pks": ()})
    with pytest.raises(ConfigurationError):
        GenesisConfig(**{**kw, "storage_pk": b""})


def test_config_rejects_bad_interval_and_fingerprint(config):
    kw = _cfg_kwargs(config)
    with pytest.raises(ConfigurationError):
        GenesisConfig(**{**kw, "block_interval": 0})
    with pytest.raises(ConfigurationError):
        GenesisConfig(**{**kw, "engine_fingerprint": b"short"})


def test_genesis_block_is_config_determined(config):
    g1, g2 = make_genesis_block(config), make_genesis_block(config)
    assert g1 == g2
    assert g1.height == 0
    assert g1.prev_hash == GENESIS_PREV_HASH
    assert g1.transactions == ()
    assert block_hash(g1) == block_hash(g2)


def test_genesis_hash_tracks_config(config):
    other = GenesisConfig(
        admin_pks=config.admin_pks,
        validators=config.validators,
        storage_pk=config.storage_pk,
        engine_fingerprint=sha256(b"different engine"),
    )
    assert block_hash(make_genesis_block(config)) != block_hash(make_genesis_block(other))


def test_seal_verify_round_trip(p, validators, config):
    user = p.generate_keypair()
    tx = build_access_request_tx(p, user, RequestInfo(1, 0, b"q" * 16), time=3)
    genesis = make_genesis_block(config)
    block = seal_block(p, validators[0], 1, block_hash(genesis), 1, (tx,))
    assert verify_block_signature(p, block)
    assert decode_block(encode_block(block)) == block


def test_signature_covers_all_fields(p, validators, config):
    genesis = make_genesis_block(config)
    block = seal_block(p, validators[0], 1, block_hash(genesis), 1, ())
    for forged in (
        Block(2, block.prev_hash, block.time, (), block.validator_pk, block.validator_sig),
        Block(1, sha256(b"x"), block.time, (), block.validator_pk, block.validator_sig),
        Block(1, block.prev_hash, 2, (), block.validator_pk, block.validator_sig),
    ):
        assert not verify_block_signature(p, forged)


def test_any_byte_flip_changes_hash(p, validators, config):
    import random

    genesis = make_genesis_block(config)
    user = p.generate_keypair()
    txs = tuple(
        build_access_request_tx(p, user, RequestInfo(i, 0, bytes([i]) * 16), time=1)
        for i in range(3)
    )
    block = seal_block(p, validators[1], 1, block_hash(genesis), 1, txs)
    enc = encode_block(block)
    rng = random.Random(4)
    original = block_hash(block)
    for _ in range(100):
        mutated = bytearray(enc)
        mutated[rng.randrange(len(mutated))] ^= 1 << rng.randrange(8)
        mutated = bytes(mutated)
        if mutated == enc:
            continue
        try:
            reparsed = decode_block(mutated)
        except Exception:
            continue  # parse failure is also detection
        assert sha256(encode_block(reparsed)) != original or not verify_block_signature(p, reparsed)


def test_genesis_survives_block_round_trip(config):
    genesis = make_genesis_block(config)
    again = decode_block(encode_block(genesis))
    assert again.genesis_config == config
    assert block_hash(again) == block_hash(genesis)
