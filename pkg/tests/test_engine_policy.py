"""Identity bit encoding and the synthetic labeling policy."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chainacl.engine import (
    EncodingError,
    SyntheticPolicy,
    binary_repr,
    encode_pair,
    generate_dataset,
)
from chainacl.transactions import (
    N_OPERATIONS,
    RESOURCE_BITS_WIDTH,
    USER_BITS_WIDTH,
)


def test_binary_repr_known_values():
    assert binary_repr(5, 16) == (0,) * 13 + (1, 0, 1)
    assert binary_repr(0, 4) == (0, 0, 0, 0)
    assert binary_repr(15, 4) == (1, 1, 1, 1)
    assert binary_repr(1, 1) == (1,)


def test_binary_repr_bounds():
    with pytest.raises(EncodingError):
        binary_repr(16, 4)
    with pytest.raises(EncodingError):
        binary_repr(-1, 4)
    binary_repr((1 << 16) - 1, 16)  # max fits


@given(st.integers(0, (1 << 16) - 1))
def test_binary_repr_inverts(value):
    bits = binary_repr(value, 16)
    assert len(bits) == 16
    assert sum(b << (15 - i) for i, b in enumerate(bits)) == value


def test_encode_pair_layout():
    x = encode_pair(5, 3)
    assert x.shape == (USER_BITS_WIDTH + RESOURCE_BITS_WIDTH,)
    assert x.dtype == np.float64
    assert tuple(int(v) for v in x[:USER_BITS_WIDTH]) == binary_repr(5, USER_BITS_WIDTH)
    assert tuple(int(v) for v in x[USER_BITS_WIDTH:]) == binary_repr(3, RESOURCE_BITS_WIDTH)


def test_encode_pair_is_injective():
    seen = {encode_pair(u, r).tobytes() for u in range(40) for r in range(40)}
    assert len(seen) == 1600


def test_policy_is_deterministic():
    a, b = SyntheticPolicy(seed=5), SyntheticPolicy(seed=5)
    for u in range(20):
        for r in range(20):
            assert a.grant_vector(u, r) == b.grant_vector(u, r)


def test_policies_differ_across_seeds():
    grids = []
    for seed in range(8):
        pol = SyntheticPolicy(seed=seed)
        grids.append(
            tuple(pol.grant(u, r, op) for u in range(16) for r in range(16) for op in range(4))
        )
    assert len(set(grids)) > 1


def test_policy_is_not_constant():
    """Every operation's grant function must vary somewhere on the grid."""
    pol = SyntheticPolicy(seed=2024)
    for op in range(N_OPERATIONS):
        values = {pol.grant(u, r, op) for u in range(128) for r in range(64)}
        assert values == {True, False}


def test_dataset_shape_and_content():
    pol = SyntheticPolicy(seed=3)
    ds = generate_dataset(pol, n_users=100, n_resources=50)
    assert len(ds) == 5000
    assert ds.pairs.shape == (5000, 2)
    assert ds.inputs.shape == (5000, USER_BITS_WIDTH + RESOURCE_BITS_WIDTH)
    assert ds.labels.shape == (5000, N_OPERATIONS)
    assert set(np.unique(ds.inputs)) <= {0.0, 1.0}
    assert set(np.unique(ds.labels)) <= {0.0, 1.0}
    # spot-check rows against the policy oracle
    rng = np.random.default_rng(1)
    for i in rng.choice(len(ds), size=50, replace=False):
        u, r = (int(v) for v in ds.pairs[i])
        assert np.array_equal(ds.inputs[i], encode_pair(u, r))
        expect = [1.0 if g else 0.0 for g in pol.grant_vector(u, r)]
        assert list(ds.labels[i]) == expect


def test_dataset_covers_every_pair_once():
    ds = generate_dataset(SyntheticPolicy(seed=1), n_users=12, n_resources=9)
    pairs = {(int(u), int(r)) for u, r in ds.pairs}
    assert pairs == {(u, r) for u in range(12) for r in range(9)}


def test_dataset_rejects_oversized_id_space():
    with pytest.raises(EncodingError):
        generate_dataset(SyntheticPolicy(seed=1), n_users=(1 << 16) + 1, n_resources=1)
