"""Shared construction helpers for randomized test instances."""

import numpy as np

from simcert.model import LinearSubsystem, Topology
from simcert.smallgain import build_gains, compose, find_mu, spectral_radius_test
from simcert.spsf import (
    AbstractionCandidate,
    AbstractionCertificate,
    compute_Rtilde,
    derive_constants,
    solve_structural,
    synthesize_MK,
)


def invertible(rng, n, cond_cap=1e6):
    while True:
        b = rng.standard_normal((n, n))
        if np.linalg.cond(b) < cond_cap:
            return b


def random_certified_instance(rng, n_max=10, nhat_max=3, with_abstract_noise=False):
    """Random subsystem + candidate + valid certificate.

    ``B`` is kept square and invertible so the structural equalities are
    exactly solvable; ``M``/``K`` come from the synthesizer, so the returned
    certificate passes every condition by construction.
    """
    n = int(rng.integers(2, n_max + 1))
    nhat = int(rng.integers(1, min(nhat_max, n) + 1))
    p = int(rng.integers(1, 3))
    q = int(rng.integers(1, 3))
    r = int(rng.integers(1, 3))
    mhat = int(rng.integers(1, 3))

    A = 0.8 * rng.standard_normal((n, n))
    B = invertible(rng, n)
    D = rng.standard_normal((n, p))
    F = 0.3 * rng.standard_normal((n, q))
    C = 0.5 * rng.standard_normal((r, n))
    s = LinearSubsystem(id=0, A=A, B=B, D=D, F=F, C_ext=C)

    P = rng.standard_normal((n, nhat))
    Ahat = 0.5 * rng.standard_normal((nhat, nhat))
    Bhat = rng.standard_normal((nhat, mhat))
    Dhat = rng.standard_normal((nhat, p))
    Fhat = 0.3 * rng.standard_normal((nhat, q)) if with_abstract_noise else None
    cand = AbstractionCandidate.induced(s, P=P, Ahat=Ahat, Bhat=Bhat, Dhat=Dhat, Fhat=Fhat)

    pi = float(rng.uniform(0.3, 1.5))
    kappa_hat = float(rng.uniform(0.2, 0.9))
    M, K = synthesize_MK(s.A, s.B, s.output_matrix(), pi, kappa_hat)
    sol = solve_structural(s, cand)
    Rtilde = compute_Rtilde(s.B, M, P, Bhat)
    cert = AbstractionCertificate(
        M=M, K=K, P=P, Q=sol.Q, S=sol.S, Rtilde=Rtilde, pi=pi, kappa_hat=kappa_hat
    )
    return s, cand, cert


def identity_candidate(s: LinearSubsystem) -> AbstractionCandidate:
    """Self-abstraction: P = I and all abstract matrices equal the concrete ones."""
    return AbstractionCandidate.induced(
        s, P=np.eye(s.n), Ahat=s.A, Bhat=s.B, Dhat=s.D, Fhat=s.F
    )


def certified_network(seed):
    """Random 2-4 subsystem interconnection with valid certificates and a
    feasible gain composition.

    Couplings are rescaled (halved) until the spectral-radius test passes,
    so every returned instance admits a composed certificate.
    """
    rng = np.random.default_rng(seed)
    N = int(rng.integers(2, 5))
    dims = [int(rng.integers(2, 5)) for _ in range(N)]
    pairs = [(i, (i + 1) % N) for i in range(N)]  # ring keeps every in-degree 1
    raw = {
        i: dict(
            A=0.5 * rng.standard_normal((dims[i], dims[i])),
            B=invertible(rng, dims[i]),
            D=rng.standard_normal((dims[i], 1)),
            F=0.05 * rng.standard_normal((dims[i], 1)),
            C_ext=0.3 * rng.standard_normal((1, dims[i])),
            C_int=0.3 * rng.standard_normal((1, dims[i])),
            nhat=int(rng.integers(1, min(3, dims[i]) + 1)),
        )
        for i in range(N)
    }
    kappa = float(rng.uniform(0.6, 0.9))
    pi = float(rng.uniform(0.5, 1.5))

    scale = 1.0
    for _ in range(12):
        subs, cands, certs = [], [], []
        for i in range(N):
            r = raw[i]
            n, nhat = dims[i], r["nhat"]
            s = LinearSubsystem(
                id=i, A=r["A"], B=r["B"], D=scale * r["D"], F=r["F"],
                C_ext=r["C_ext"], C_int={(i + 1) % N: scale * r["C_int"]},
            )
            P = np.ones((n, nhat)) + 0.1 * np.arange(n * nhat).reshape(n, nhat)
            Ahat = 0.3 * np.eye(nhat)
            Bhat = np.eye(nhat)
            Dhat = np.zeros((nhat, 1))
            cand = AbstractionCandidate.induced(s, P=P, Ahat=Ahat, Bhat=Bhat, Dhat=Dhat)
            M, K = synthesize_MK(s.A, s.B, s.output_matrix(), pi, kappa)
            sol = solve_structural(s, cand)
            Rt = compute_Rtilde(s.B, M, P, Bhat)
            certs.append(
                AbstractionCertificate(
                    M=M, K=K, P=P, Q=sol.Q, S=sol.S, Rtilde=Rt, pi=pi, kappa_hat=kappa
                )
            )
            subs.append(s)
            cands.append(cand)
        topo = Topology.from_pairs(subs, pairs)
        constants = [derive_constants(subs[i], cands[i], certs[i]) for i in range(N)]
        gains = build_gains(constants, topo, "in_degree")
        if spectral_radius_test(gains) < 0.9:
            mu = find_mu(gains)
            composed = compose(certs, constants, gains, mu)
            return subs, topo, cands, certs, composed
        scale *= 0.5
    raise AssertionError("could not scale couplings into the feasible region")


def random_network(rng, n_subs=None):
    """Random interconnection with consistent internal wiring.

    Every ordered pair becomes an edge with probability 1/2; connecting
    output blocks get 1 or 2 rows.  Returns (subsystems, pairs).
    """
    N = n_subs if n_subs is not None else int(rng.integers(2, 5))
    dims = [int(rng.integers(1, 5)) for _ in range(N)]
    pairs = []
    block_rows = {}
    for src in range(N):
        for tgt in range(N):
            if src != tgt and rng.random() < 0.5:
                pairs.append((src, tgt))
                block_rows[(src, tgt)] = int(rng.integers(1, 3))
    subs = []
    for i in range(N):
        n = dims[i]
        p = sum(block_rows[(src, i)] for src, tgt in pairs if tgt == i)
        c_int = {
            tgt: rng.standard_normal((block_rows[(i, tgt)], n))
            for src, tgt in pairs
            if src == i
        }
        subs.append(
            LinearSubsystem(
                id=i,
                A=0.5 * rng.standard_normal((n, n)),
                B=rng.standard_normal((n, int(rng.integers(1, 3)))),
                D=rng.standard_normal((n, p)),
                F=rng.standard_normal((n, int(rng.integers(1, 3)))),
                C_ext=rng.standard_normal((int(rng.integers(1, 3)), n)),
                C_int=c_int,
            )
        )
    return subs, pairs
