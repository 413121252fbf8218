import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import chisquare

from segchain.noise import (PAULI2, derive_rates, sample_one_qubit_channel,
                            sample_two_qubit_channel, zero_noise)


def test_rate_zero_is_identity():
    rng = np.random.default_rng(0)
    assert all(sample_one_qubit_channel(0.0, rng).is_identity() for _ in range(1000))
    assert all(sample_two_qubit_channel(0.0, rng).is_identity() for _ in range(1000))


def test_one_qubit_frequencies():
    rng = np.random.default_rng(1)
    n = 1_000_000
    rate = 0.01
    counts = Counter(sample_one_qubit_channel(rate, rng).to_string() for _ in range(n))
    probs = {"I": 1 - rate, "X": rate / 3, "Y": rate / 3, "Z": rate / 3}
    for k, p in probs.items():
        sigma = math.sqrt(n * p * (1 - p))
        assert abs(counts[k] - n * p) < 5 * sigma
    obs = [counts[k] for k in "IXYZ"]
    assert chisquare(obs, [n * probs[k] for k in "IXYZ"]).pvalue > 1e-4


def test_one_qubit_rate_03_is_a_tenth_each():
    rng = np.random.default_rng(2)
    n = 200_000
    counts = Counter(sample_one_qubit_channel(0.3, rng).to_string() for _ in range(n))
    exp = [0.7 * n, 0.1 * n, 0.1 * n, 0.1 * n]
    assert chisquare([counts[k] for k in "IXYZ"], exp).pvalue > 1e-4


def test_two_qubit_rate_015():
    rng = np.random.default_rng(3)
    n = 300_000
    counts = Counter(sample_two_qubit_channel(0.15, rng).to_string() for _ in range(n))
    labels = [a + b for a in "IXYZ" for b in "IXYZ"]
    exp = [0.85 * n if lab == "II" else 0.01 * n for lab in labels]
    assert chisquare([counts[lab] for lab in labels], exp).pvalue > 1e-4


def test_two_qubit_marginal_weight():
    # enumeration: 12 of the 15 non-identity Paulis act on qubit 0
    assert sum(1 for x0, z0, _, _ in PAULI2 if x0 or z0) == 12
    rng = np.random.default_rng(4)
    n, rate = 200_000, 0.3
    hits = sum(1 for _ in range(n) if sample_two_qubit_channel(rate, rng).restrict([0]).weight)
    p = 12 * rate / 15
    assert abs(hits - n * p) < 5 * math.sqrt(n * p * (1 - p))


@pytest.mark.parametrize("bad", [-0.1, 1.5])
def test_rate_bounds(bad):
    with pytest.raises(ValueError):
        sample_one_qubit_channel(bad, np.random.default_rng())
    with pytest.raises(ValueError):
        derive_rates(bad, 3)


def test_derive_examples():
    assert derive_rates(0.007, 3).eps0 == pytest.approx(0.00028)
    assert derive_rates(0.001, 13).eps0 == pytest.approx(8e-6)
    r = derive_rates(0.001, 5)
    assert r.eps1 == pytest.approx(1e-4)
    assert r.epsI == r.epsM == 0.001
    with pytest.raises(ValueError):
        derive_rates(0.001, 2)


@given(st.floats(0, 1), st.integers(3, 40))
def test_derive_invariants(eps2, d):
    r = derive_rates(eps2, d)
    assert r.epsI == r.epsM == r.eps2 == eps2
    assert r.eps1 == pytest.approx(eps2 / 10)
    assert 5 * (2 * d - 1) * r.eps0 == pytest.approx(eps2)
    assert derive_rates(eps2, d + 1).eps0 <= r.eps0


def test_zero_noise():
    z = zero_noise(3)
    assert z.eps2 == z.eps0 == z.epsI == 0
