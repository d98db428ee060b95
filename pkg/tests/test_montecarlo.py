import numpy as np
import pytest
from helpers import certified_network, random_certified_instance

from simcert.bounds import BoundQuery, finite_horizon_bound

from simcert.errors import PolicyDimension
from simcert.model import LinearSubsystem, Topology
from simcert.montecarlo import (
    RunConfig,
    empirical_supermartingale_check,
    noise_stream,
    simulate_pair,
    step,
    violation_probability,
)
from simcert.spsf import AbstractionCandidate, AbstractionCertificate, interface


def test_step_examples(ref_parts):
    subs, *_ = ref_parts
    s = subs[0]
    zero = step(s, np.zeros(25), np.zeros(25), [0.0], [0.0])
    assert np.array_equal(zero, np.zeros(25))
    kicked = step(s, np.zeros(25), np.zeros(25), [1.0], [0.0])
    assert np.allclose(kicked, 0.1 * np.ones(25), atol=1e-15)
    v = np.arange(25.0)
    assert np.array_equal(step(s, v, np.zeros(25), [0.0], [0.0]), v)


def _noiseless_reference(ref_parts):
    subs, topo, cands, certs = ref_parts
    quiet = [
        LinearSubsystem(
            id=s.id, A=s.A, B=s.B, D=s.D, F=np.zeros((s.n, 1)), C_ext=s.C_ext,
            C_int=dict(s.C_int),
        )
        for s in subs
    ]
    abs_subs = [cands[i].as_subsystem(i) for i in range(4)]
    return quiet, topo, abs_subs, topo, [certs[i] for i in range(4)]


def test_noiseless_matched_start_zero_deviation(ref_parts):
    quiet, topo, abs_subs, abs_topo, certs = _noiseless_reference(ref_parts)
    cfg = RunConfig(horizon=8, trials=5, seed=1)
    samples = simulate_pair(quiet, topo, abs_subs, abs_topo, certs, cfg)
    assert all(s.sup_deviation == 0.0 for s in samples)


def test_geometric_decay_scalar_pair():
    s = LinearSubsystem(id=0, A=[[0.9]], B=[[1.0]], D=np.zeros((1, 0)),
                        F=np.zeros((1, 1)), C_ext=[[1.0]])
    cand = AbstractionCandidate.induced(
        s, P=[[1.0]], Ahat=[[0.9]], Bhat=[[1.0]], Dhat=np.zeros((1, 0))
    )
    cert = AbstractionCertificate(
        M=[[1.0]], K=[[-0.4]], P=[[1.0]], Q=[[0.0]], S=np.zeros((1, 0)),
        Rtilde=[[1.0]], pi=0.5, kappa_hat=0.5,
    )
    cfg = RunConfig(
        horizon=6, trials=1, seed=0,
        initial_concrete=np.array([1.0]), initial_abstract=np.array([0.0]),
        record_trajectories=True,
    )
    (sample,) = simulate_pair([s], Topology(1), [cand.as_subsystem(0)], Topology(1),
                              [cert], cfg)
    devs = np.linalg.norm(sample.outputs - sample.abstract_outputs, axis=1)
    # error recursion e+ = (A + BK) e with A + BK = 0.5
    for k in range(6):
        assert devs[k + 1] == pytest.approx(0.5 * devs[k], rel=1e-12)
    assert sample.sup_deviation == pytest.approx(1.0)


def test_determinism_same_seed(ref_parts):
    subs, topo, cands, certs = ref_parts
    abs_subs = [cands[i].as_subsystem(i) for i in range(4)]
    cfg = RunConfig(horizon=5, trials=20, seed=77, record_trajectories=True)
    a = simulate_pair(subs, topo, abs_subs, topo, [certs[i] for i in range(4)], cfg)
    b = simulate_pair(subs, topo, abs_subs, topo, [certs[i] for i in range(4)], cfg)
    for x, y in zip(a, b):
        assert x.sup_deviation == y.sup_deviation
        assert np.array_equal(x.outputs, y.outputs)


def test_determinism_across_workers(ref_parts):
    subs, topo, cands, certs = ref_parts
    abs_subs = [cands[i].as_subsystem(i) for i in range(4)]
    cfg = RunConfig(horizon=5, trials=30, seed=5)
    certs_list = [certs[i] for i in range(4)]
    serial = simulate_pair(subs, topo, abs_subs, topo, certs_list, cfg, workers=1)
    threaded = simulate_pair(subs, topo, abs_subs, topo, certs_list, cfg, workers=4)
    assert [s.trial for s in threaded] == list(range(30))
    for x, y in zip(serial, threaded):
        assert x.sup_deviation == y.sup_deviation


def test_noise_moments():
    n = 1_000_000
    draws = noise_stream(20240809, 0, 0, abstract=False).standard_normal(n)
    assert abs(draws.mean()) <= 4 / np.sqrt(n)
    assert abs(draws.var() - 1.0) <= 5 * np.sqrt(2.0 / n)


def test_stream_isolation():
    a = noise_stream(42, 3, 1, abstract=False).standard_normal(1000)
    b = noise_stream(42, 3, 1, abstract=True).standard_normal(1000)
    c = noise_stream(42, 4, 1, abstract=False).standard_normal(1000)
    assert not set(a.tolist()) & set(b.tolist())
    assert not set(a.tolist()) & set(c.tolist())
    # identical keys reproduce the identical stream
    again = noise_stream(42, 3, 1, abstract=False).standard_normal(1000)
    assert np.array_equal(a, again)


def test_violation_probability_examples():
    def mk(vals):
        from simcert.montecarlo import DeviationSample

        return [DeviationSample(trial=i, sup_deviation=v) for i, v in enumerate(vals)]

    zero = violation_probability(mk([0.0] * 100), 1.0)
    assert zero.estimate == 0.0
    assert zero.upper95 == pytest.approx(1 - 0.05 ** (1 / 100), rel=1e-9)
    assert violation_probability(mk([2.0] * 10), 1.0).estimate == 1.0
    assert violation_probability(mk([0.5, 1.5]), 1.0).estimate == 0.5


def _naive_pair_trial(subs, topo, abs_subs, certs, cfg, trial):
    """Independent oracle: explicit per-subsystem routing and stepping."""
    xs = [np.zeros(s.n) for s in subs]
    xhs = [np.zeros(a.n) for a in abs_subs]
    noises = [
        noise_stream(cfg.seed, trial, s.id, abstract=False).standard_normal((cfg.horizon, s.q))
        for s in subs
    ]
    noises_hat = [
        noise_stream(cfg.seed, trial, a.id, abstract=True).standard_normal((cfg.horizon, a.q))
        for a in abs_subs
    ]
    sup = 0.0
    for k in range(cfg.horizon + 1):
        y = np.concatenate([s.C_ext @ xs[i] for i, s in enumerate(subs)])
        yh = np.concatenate([a.C_ext @ xhs[i] for i, a in enumerate(abs_subs)])
        sup = max(sup, float(np.linalg.norm(y - yh)))
        if k == cfg.horizon:
            break
        omegas = [np.zeros(s.p) for s in subs]
        omegahats = [np.zeros(a.p) for a in abs_subs]
        for e in topo.edges:
            omegas[e.target][e.start : e.stop] = subs[e.source].C_int[e.target] @ xs[e.source]
            omegahats[e.target][e.start : e.stop] = (
                abs_subs[e.source].C_int[e.target] @ xhs[e.source]
            )
        new_x, new_xh = [], []
        for i, s in enumerate(subs):
            nuhat = np.zeros(abs_subs[i].m)
            nu = interface(xs[i], xhs[i], nuhat, omegahats[i], certs[i])
            new_x.append(step(s, xs[i], nu, omegas[i], noises[i][k]))
            new_xh.append(step(abs_subs[i], xhs[i], nuhat, omegahats[i], noises_hat[i][k]))
        xs, xhs = new_x, new_xh
    return sup


def test_simulate_matches_naive_oracle(ref_parts):
    subs, topo, cands, certs = ref_parts
    abs_subs = [cands[i].as_subsystem(i) for i in range(4)]
    certs_list = [certs[i] for i in range(4)]
    cfg = RunConfig(horizon=7, trials=4, seed=99)
    fast = simulate_pair(subs, topo, abs_subs, topo, certs_list, cfg)
    for t in range(4):
        naive = _naive_pair_trial(subs, topo, abs_subs, certs_list, cfg, t)
        assert fast[t].sup_deviation == pytest.approx(naive, rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("seed", [2101, 2104])
def test_simulate_matches_naive_oracle_heterogeneous(seed):
    # mixed state/abstract dimensions exercise the block offsets
    subs, topo, cands, certs, _ = certified_network(seed)
    abs_subs = [cands[i].as_subsystem(i) for i in range(len(subs))]
    cfg = RunConfig(horizon=6, trials=3, seed=seed)
    fast = simulate_pair(subs, topo, abs_subs, topo, certs, cfg)
    for t in range(3):
        naive = _naive_pair_trial(subs, topo, abs_subs, certs, cfg, t)
        assert fast[t].sup_deviation == pytest.approx(naive, rel=1e-12, abs=1e-14)


def test_policy_dimension_error(ref_parts):
    subs, topo, cands, certs = ref_parts
    abs_subs = [cands[i].as_subsystem(i) for i in range(4)]
    cfg = RunConfig(horizon=3, trials=1, seed=0,
                    abstract_policy=lambda k, xh: np.zeros(7))
    with pytest.raises(PolicyDimension):
        simulate_pair(subs, topo, abs_subs, topo, [certs[i] for i in range(4)], cfg)


def test_policy_drives_abstract_system(ref_parts):
    subs, topo, cands, certs = ref_parts
    abs_subs = [cands[i].as_subsystem(i) for i in range(4)]
    certs_list = [certs[i] for i in range(4)]
    quiet = RunConfig(horizon=4, trials=1, seed=0, record_trajectories=True)
    driven = RunConfig(horizon=4, trials=1, seed=0, record_trajectories=True,
                       abstract_policy=lambda k, xh: np.full(4, 0.5))
    (a,) = simulate_pair(subs, topo, abs_subs, topo, certs_list, quiet)
    (b,) = simulate_pair(subs, topo, abs_subs, topo, certs_list, driven)
    assert not np.array_equal(a.abstract_outputs, b.abstract_outputs)


@pytest.mark.parametrize("seed", range(900, 920))
def test_bound_soundness_randomized_networks(seed):
    """Deviation-bound soundness on randomized certified interconnections."""
    subs, topo, cands, certs, composed = certified_network(seed)
    T = 10
    # place the threshold where the analytic bound is informative (~0.18)
    epsilon = float(np.sqrt(composed.psi * T / (0.2 * composed.alpha_coef)))
    analytic = finite_horizon_bound(
        BoundQuery(V0=0.0, alpha_coef=composed.alpha_coef, epsilon=epsilon,
                   T=T, psi_hat=composed.psi, kappa_hat=composed.kappa_hat)
    )
    abs_subs = [cands[i].as_subsystem(i) for i in range(len(subs))]
    cfg = RunConfig(horizon=T, trials=500, seed=seed)
    samples = simulate_pair(subs, topo, abs_subs, topo, certs, cfg)
    est = violation_probability(samples, epsilon)
    assert est.upper95 <= analytic.probability


def test_empirical_supermartingale_reference(ref_parts):
    subs, _, cands, certs = ref_parts
    result = empirical_supermartingale_check(
        subs[0], cands[0], certs[0], points=40, draws_per_point=2000, seed=12
    )
    assert result.max_gap_se <= 5.0
    assert result.worst_slack <= max(1e-9, 5.0 * result.worst_slack_stderr)


def test_empirical_supermartingale_noiseless_exact():
    rng = np.random.default_rng(31)
    s, cand, cert = random_certified_instance(rng)
    quiet = LinearSubsystem(id=0, A=s.A, B=s.B, D=s.D, F=np.zeros((s.n, 0)), C_ext=s.C_ext)
    result = empirical_supermartingale_check(
        quiet, cand, cert, points=25, draws_per_point=10, seed=3
    )
    assert result.max_gap_se == 0.0  # degenerate draws equal the exact expectation
    assert result.worst_slack <= 1e-9
