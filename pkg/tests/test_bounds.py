import numpy as np
import pytest

from simcert.bounds import (
    BoundQuery,
    BoxSet,
    finite_horizon_bound,
    infinite_horizon_bound,
    inflate_set,
    psi_hat,
    safety_transfer,
)
from simcert.errors import DomainError, PreconditionViolated


def _case1(v0, a, ph, T):
    return 1.0 - (1.0 - v0 / a) * (1.0 - ph / a) ** T


def _case2(v0, a, ph, kh, T):
    decay = (1.0 - kh) ** T
    return (v0 / a) * decay + (ph / (kh * a)) * (1.0 - decay)


def test_reference_bound_value():
    q = BoundQuery(V0=0.0, alpha_coef=1.0, epsilon=1.0, T=10, psi_hat=0.01, kappa_hat=0.1)
    res = finite_horizon_bound(q)
    assert res.branch == "high_threshold"
    assert res.probability == pytest.approx(1.0 - 0.99**10, abs=1e-15)
    assert res.probability == pytest.approx(0.0956, abs=1e-4)


def test_zero_horizon():
    q = BoundQuery(V0=0.0, alpha_coef=1.0, epsilon=1.0, T=0, psi_hat=0.01, kappa_hat=0.1)
    assert finite_horizon_bound(q).probability == 0.0
    q = BoundQuery(V0=0.3, alpha_coef=1.0, epsilon=1.0, T=0, psi_hat=0.01, kappa_hat=0.1)
    assert finite_horizon_bound(q).probability == pytest.approx(0.3, abs=1e-15)


def test_branch_boundary_value():
    # at a = psi_hat / kappa_hat with V0 = 0.3 a, T = 5, kappa = 0.2 both
    # branch formulas evaluate to 1 - 0.7 * 0.8**5 = 0.770624
    a, kh, T = 1.0, 0.2, 5
    ph = kh * a
    v0 = 0.3 * a
    assert _case1(v0, a, ph, T) == pytest.approx(0.770624, abs=1e-12)
    assert _case2(v0, a, ph, kh, T) == pytest.approx(0.770624, abs=1e-12)
    res = finite_horizon_bound(
        BoundQuery(V0=v0, alpha_coef=1.0, epsilon=1.0, T=T, psi_hat=ph, kappa_hat=kh)
    )
    assert res.branch == "high_threshold"
    assert res.probability == pytest.approx(0.770624, abs=1e-12)


def test_branch_agreement_random_grid():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(10_000):
        kh = rng.uniform(0.01, 0.99)
        a = rng.uniform(0.1, 10.0)
        ph = kh * a  # boundary
        v0 = rng.uniform(0.0, 2.0) * a
        T = int(rng.integers(0, 200))
        worst = max(worst, abs(_case1(v0, a, ph, T) - _case2(v0, a, ph, kh, T)))
    assert worst <= 1e-12


def test_monotonicity_grid():
    rng = np.random.default_rng(1)
    for _ in range(2500):
        kh = rng.uniform(0.05, 0.95)
        alpha = rng.uniform(0.1, 5.0)
        eps = rng.uniform(0.1, 3.0)
        v0 = rng.uniform(0.0, 5.0)
        ph = rng.uniform(0.0, 1.0)
        T = int(rng.integers(0, 100))

        def bound(v0=v0, eps=eps, ph=ph, T=T):
            return finite_horizon_bound(
                BoundQuery(V0=v0, alpha_coef=alpha, epsilon=eps, T=T,
                           psi_hat=ph, kappa_hat=kh)
            ).probability

        base = bound()
        assert bound(eps=eps * 1.3) <= base + 1e-12          # nonincreasing in eps
        assert bound(v0=v0 + 0.5) >= base - 1e-12            # nondecreasing in V0
        assert bound(ph=ph + 0.2) >= base - 1e-12            # nondecreasing in psi_hat
        assert bound(T=T + 7) >= base - 1e-12                # nondecreasing in T


def test_low_threshold_T_limit():
    q = BoundQuery(V0=0.4, alpha_coef=1.0, epsilon=1.0, T=1_000_000,
                   psi_hat=0.5, kappa_hat=0.2)  # a=1 < 0.5/0.2
    res = finite_horizon_bound(q)
    assert res.branch == "low_threshold"
    assert res.raw == pytest.approx(0.5 / (0.2 * 1.0), abs=1e-9)
    assert res.probability == 1.0  # clamped


def test_bound_vanishes_for_large_epsilon():
    probs = [
        finite_horizon_bound(
            BoundQuery(V0=0.2, alpha_coef=1.0, epsilon=eps, T=20,
                       psi_hat=0.05, kappa_hat=0.3)
        ).probability
        for eps in (1.0, 10.0, 100.0, 1e4)
    ]
    assert all(a >= b for a, b in zip(probs, probs[1:]))
    assert probs[-1] < 1e-6


def test_infinite_horizon_matches_zero_offset_limit():
    for v0, alpha, eps in [(0.0, 1.0, 1.0), (0.5, 1.0, 0.5), (5.0, 2.0, 1.0)]:
        inf_b = infinite_horizon_bound(v0, alpha, eps)
        fin = finite_horizon_bound(
            BoundQuery(V0=v0, alpha_coef=alpha, epsilon=eps, T=10**6,
                       psi_hat=0.0, kappa_hat=0.5)
        )
        assert inf_b == pytest.approx(fin.probability, abs=1e-12)


def test_infinite_horizon_examples():
    assert infinite_horizon_bound(0.0, 1.0, 1.0) == 0.0
    # V0 / (alpha eps^2) = 0.5 / 2
    assert infinite_horizon_bound(0.5, 2.0, 1.0) == pytest.approx(0.25)
    assert infinite_horizon_bound(5.0, 2.0, 1.0) == 1.0


def test_infinite_horizon_precondition():
    with pytest.raises(PreconditionViolated):
        infinite_horizon_bound(0.5, 1.0, 1.0, psi=0.01)
    with pytest.raises(PreconditionViolated):
        infinite_horizon_bound(0.5, 1.0, 1.0, rho_ext_coef=0.1)


def test_psi_hat_examples():
    assert psi_hat(0.0, 0.0, 0.01) == pytest.approx(0.01)
    assert psi_hat(2.0, 3.0, 1.0) == pytest.approx(19.0)
    assert psi_hat(0.0, 0.0, 0.0) == 0.0


def test_domain_errors():
    with pytest.raises(DomainError):
        BoundQuery(V0=0.0, alpha_coef=1.0, epsilon=0.0, T=1, psi_hat=0.0, kappa_hat=0.5)
    with pytest.raises(DomainError):
        BoundQuery(V0=0.0, alpha_coef=1.0, epsilon=1.0, T=1, psi_hat=0.0, kappa_hat=1.5)
    with pytest.raises(DomainError):
        BoundQuery(V0=-1.0, alpha_coef=1.0, epsilon=1.0, T=1, psi_hat=0.0, kappa_hat=0.5)
    with pytest.raises(DomainError):
        BoundQuery(V0=0.0, alpha_coef=1.0, epsilon=1.0, T=-3, psi_hat=0.0, kappa_hat=0.5)


def test_clamping_flags():
    res = finite_horizon_bound(
        BoundQuery(V0=5.0, alpha_coef=1.0, epsilon=1.0, T=3, psi_hat=0.01, kappa_hat=0.5)
    )
    assert res.raw > 1.0
    assert res.probability == 1.0
    assert res.clamped


def test_inflate_set():
    box = BoxSet([0.0], [1.0])
    assert np.array_equal(inflate_set(box, 0.0).lower, box.lower)
    grown = inflate_set(box, 0.5)
    assert np.array_equal(grown.lower, [-0.5])
    assert np.array_equal(grown.upper, [1.5])

    square = inflate_set(BoxSet([0.0, 0.0], [1.0, 1.0]), 1.0)
    assert np.array_equal(square.lower, [-1.0, -1.0])
    # the inflated box contains the whole Euclidean neighborhood
    rng = np.random.default_rng(2)
    for _ in range(200):
        y = rng.uniform(0, 1, 2)
        d = rng.standard_normal(2)
        d /= np.linalg.norm(d)
        assert square.contains(y + d * rng.uniform(0, 1.0))


def test_safety_transfer():
    assert safety_transfer(0.0, 0.0) == 0.0
    assert safety_transfer(0.05, 0.0956) == pytest.approx(0.1456)
    assert safety_transfer(0.95, 0.2) == 1.0
    with pytest.raises(DomainError):
        safety_transfer(1.2, 0.0)
