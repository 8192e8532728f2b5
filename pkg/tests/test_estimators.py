import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fnmr_audit.data import GroupDataset
from fnmr_audit.estimators import (
    DegenerateRateError,
    EstimationError,
    InestimableCorrelationError,
    compute_m0,
    estimate_fnmr,
    estimate_group,
    estimate_rho,
    variance_fnmr,
    variance_fnmr_pairs,
)
from fnmr_audit.simulation import generate_group

from conftest import make_group


def rho_oracle(vectors):
    """Direct triple loop over subjects and ordered attempt pairs."""
    flat = [d for v in vectors for d in v]
    pi = sum(flat) / len(flat)
    num = 0.0
    pairs = 0
    for v in vectors:
        for j in range(len(v)):
            for jj in range(len(v)):
                if jj != j:
                    num += (v[j] - pi) * (v[jj] - pi)
        pairs += len(v) * (len(v) - 1)
    return num / (pi * (1 - pi) * pairs)


def random_vectors(rng, max_n=6, max_m=4):
    while True:
        n = int(rng.integers(1, max_n + 1))
        vecs = [list(rng.integers(0, 2, size=int(rng.integers(1, max_m + 1)))) for _ in range(n)]
        flat = [d for v in vecs for d in v]
        if 0 < sum(flat) < len(flat) and any(len(v) >= 2 for v in vecs):
            return vecs


def test_fnmr_counts():
    assert estimate_fnmr(make_group({"a": [0, 0], "b": [0, 0], "c": [0, 0]})) == 0.0
    assert estimate_fnmr(make_group({"s1": [1, 0], "s2": [0, 0]})) == 0.25


def test_fnmr_large_sample():
    g = generate_group(0.1, 0.15, 800, 3, np.random.default_rng(11))
    assert abs(estimate_fnmr(g) - 0.1) < 0.03


def test_rho_perfect_agreement_and_disagreement():
    assert estimate_rho(make_group({"s1": [1, 1], "s2": [0, 0]})) == pytest.approx(1.0, abs=1e-15)
    assert estimate_rho(make_group({"s1": [1, 0], "s2": [0, 1]})) == pytest.approx(-1.0, abs=1e-15)


def test_rho_matches_triple_loop(rng):
    for _ in range(100):
        vecs = random_vectors(rng)
        g = make_group({f"s{i}": v for i, v in enumerate(vecs)})
        assert abs(estimate_rho(g) - rho_oracle(vecs)) <= 1e-12


def test_rho_signals():
    with pytest.raises(DegenerateRateError):
        estimate_rho(make_group({"a": [0, 0], "b": [0]}))
    with pytest.raises(DegenerateRateError):
        estimate_rho(make_group({"a": [1, 1]}))
    with pytest.raises(InestimableCorrelationError):
        estimate_rho(make_group({"a": [1], "b": [0]}))


def test_rho_bounded_for_equal_m(rng):
    for _ in range(300):
        m = int(rng.integers(2, 5))
        n = int(rng.integers(1, 7))
        mat = rng.integers(0, 2, size=(n, m))
        if 0 < mat.sum() < mat.size:
            r = estimate_rho(GroupDataset.from_matrix("A", mat))
            assert -1.0 - 1e-12 <= r <= 1.0 + 1e-12


def test_rho_range_unequal_m_recorded(rng):
    # no bound is claimed for ragged designs; record what shows up
    values = [estimate_rho(make_group({f"s{i}": v for i, v in enumerate(random_vectors(rng))}))
              for _ in range(300)]
    assert np.all(np.isfinite(values))
    print(f"unequal-m rho_hat range: [{min(values):.3f}, {max(values):.3f}]")


def test_m0():
    assert compute_m0(make_group({"a": [0, 1], "b": [1, 1]})) == 2.0
    assert compute_m0(make_group({"a": [0], "b": [1, 1, 0]})) == 2.5


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 12), min_size=1, max_size=20))
def test_m0_cauchy_schwarz(ms):
    g = GroupDataset("A", np.zeros(sum(ms)), ms)
    mean_m = sum(ms) / len(ms)
    m0 = compute_m0(g)
    assert m0 >= mean_m - 1e-12
    if len(set(ms)) == 1:
        assert m0 == pytest.approx(mean_m, rel=1e-15)
    else:
        assert m0 > mean_m


def test_empty_group_errors():
    class Empty:
        errors = np.array([], dtype=int)
        attempts = np.array([], dtype=int)
    for f in (estimate_fnmr, compute_m0):
        with pytest.raises(EstimationError):
            f(Empty())


def test_variance_zero_rate():
    g = make_group({"a": [0, 0, 0]})
    for rho in (-0.3, 0.0, 0.7):
        assert variance_fnmr(0.0, rho, g) == 0.0


def test_variance_equal_m_reduction(rng):
    for _ in range(200):
        n, m = int(rng.integers(1, 50)), int(rng.integers(1, 8))
        pi, rho = float(rng.random()), float(rng.uniform(-0.2, 0.9))
        g = GroupDataset("A", np.zeros(n * m), np.full(n, m))
        expected = pi * (1 - pi) * (1 + (m - 1) * rho) / (n * m)
        assert variance_fnmr(pi, rho, g) == pytest.approx(expected, rel=1e-14)


def test_variance_forms_agree(rng):
    for _ in range(1000):
        ms = rng.integers(1, 11, size=int(rng.integers(1, 40)))
        g = GroupDataset("A", np.zeros(ms.sum()), ms)
        pi, rho = float(rng.random()), float(rng.uniform(-0.5, 1.0))
        a, b = variance_fnmr(pi, rho, g), variance_fnmr_pairs(pi, rho, g)
        assert abs(a - b) <= 1e-12 * max(abs(b), 1e-300)


def test_variance_increasing_in_rho(rng):
    for _ in range(100):
        ms = rng.integers(1, 6, size=10)
        ms[0] = 2
        g = GroupDataset("A", np.zeros(ms.sum()), ms)
        pi = float(rng.uniform(0.01, 0.99))
        rhos = np.linspace(-0.2, 0.9, 12)
        v = [variance_fnmr(pi, r, g) for r in rhos]
        assert np.all(np.diff(v) > 0)


def test_variance_rejects_bad_pi():
    with pytest.raises(EstimationError):
        variance_fnmr(1.5, 0.1, make_group({"a": [0]}))


def test_estimate_group_composes():
    est = estimate_group(make_group({"s1": [1, 1], "s2": [0, 0]}))
    assert (est.pi_hat, est.m0, est.n_pi, est.n_subjects) == (0.5, 2.0, 4, 2)
    assert est.rho_hat == pytest.approx(1.0)
    assert not est.degenerate
    assert est.var_pi_hat == pytest.approx(0.25 * 2 / 4)


def test_estimate_group_degenerate():
    est = estimate_group(make_group({"s1": [0, 0], "s2": [0, 0, 0]}))
    assert est.pi_hat == 0.0 and est.rho_hat == 0.0 and est.var_pi_hat == 0.0
    assert est.degenerate


def test_estimate_group_single_attempts():
    est = estimate_group(make_group({"a": [1], "b": [0]}))
    assert est.rho_hat == 0.0 and not est.rho_estimable and not est.degenerate
    assert est.var_pi_hat == pytest.approx(0.25 / 2)


def test_rho_consistency_simulated():
    rhos = [estimate_group(generate_group(0.1, 0.15, 400, 3, np.random.default_rng(s))).rho_hat
            for s in range(200)]
    assert abs(np.mean(rhos) - 0.15) < 0.1
