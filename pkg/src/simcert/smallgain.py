"""Network-level composition of per-subsystem certificates.

Each subsystem brings a decrease rate ``lambda_i = kappa_hat_i`` and passes
quadratic gain ``delta_ij`` to every peer that feeds it.  When the gain
matrix test ``rho(Lambda^{-1} Delta) < 1`` succeeds, a positive weight vector
``mu`` with ``mu' (-Lambda + Delta) < 0`` exists and the weighted sum
``V = sum_i mu_i V_i`` is a closeness function for the interconnection, with
composed constants emitted by :func:`compose`.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import Infeasible, UnsupportedForm
from .model import Topology, _matrix
from .spsf import AbstractionCertificate, SpsfConstants, evaluate_V

__all__ = [
    "DEGREE_MODES",
    "GainDecomposition",
    "CompositionCertificate",
    "build_gains",
    "spectral_radius_test",
    "find_mu",
    "compose",
]

# paper_N_minus_1 scales every edge gain by (N-1)**2 regardless of the actual
# fan-in; in_degree counts only realized connections.
DEGREE_MODES = ("in_degree", "paper_N_minus_1")


@dataclass(frozen=True, eq=False)
class GainDecomposition:
    """Diagonal decay rates ``Lambda`` and cross-gain matrix ``Delta``.

    ``Delta[i, j]`` bounds how strongly subsystem ``j``'s closeness function
    enters subsystem ``i``'s decrease inequality; it is zero whenever ``j``
    does not feed ``i``.  The comparison functions are fixed linear,
    ``gamma_i(s) = s``.
    """

    Lambda: np.ndarray
    Delta: np.ndarray
    degree_mode: str = "in_degree"
    gamma_form: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "Lambda", _matrix(self.Lambda, "Lambda"))
        object.__setattr__(self, "Delta", _matrix(self.Delta, "Delta"))
        n = self.Lambda.shape[0]
        if self.Lambda.shape != (n, n) or self.Delta.shape != (n, n):
            raise ValueError("Lambda and Delta must be square of equal size")
        if np.any(self.Lambda != np.diag(np.diag(self.Lambda))):
            raise ValueError("Lambda must be diagonal")
        if np.any(np.diag(self.Lambda) <= 0):
            raise ValueError("diagonal of Lambda must be positive")
        if np.any(self.Delta < 0):
            raise ValueError("Delta must be nonnegative")
        if np.any(np.diag(self.Delta) != 0):
            raise ValueError("Delta must have zero diagonal")
        if self.degree_mode not in DEGREE_MODES:
            raise ValueError(f"degree_mode must be one of {DEGREE_MODES}")

    @property
    def n(self) -> int:
        return self.Lambda.shape[0]


@dataclass(frozen=True, eq=False)
class CompositionCertificate:
    """Weights and constants of the composed closeness function.

    The composed function is ``V(x, xhat) = sum_i mu_i V_i(x_i, xhat_i)``; its
    output lower bound is quadratic with coefficient ``alpha_coef = min_i
    mu_i``, the decrease rate is ``kappa_hat``, and the external gain and
    offset add up with weights ``mu_i``.
    """

    mu: np.ndarray
    alpha_coef: float
    kappa_hat: float
    rho_ext_coef: float
    psi: float
    constants: tuple[SpsfConstants, ...]
    certificates: tuple[AbstractionCertificate, ...]

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        if np.any(mu <= 0):
            raise ValueError("mu must be strictly positive")
        if not 0.0 < self.kappa_hat < 1.0:
            raise ValueError(f"composed kappa_hat out of (0,1): {self.kappa_hat}")

    def evaluate(self, xs: Sequence[np.ndarray], xhats: Sequence[np.ndarray]) -> float:
        """Composed closeness value, delegated to the per-subsystem functions."""
        return float(
            sum(
                w * evaluate_V(x, xh, c.M, c.P)
                for w, x, xh, c in zip(self.mu, xs, xhats, self.certificates, strict=True)
            )
        )


def build_gains(
    constants: Sequence[SpsfConstants], topo: Topology, mode: str = "in_degree"
) -> GainDecomposition:
    """Gain matrices induced by quadratic/linear certificate constants.

    With ``alpha(s) = s**2``, ``kappa(s) = kappa_hat s`` and quadratic
    internal gain, the decomposition is ``lambda_i = kappa_hat_i`` and, per
    edge ``j -> i``, ``delta_ij = rho_int_coef_i * d**2`` where ``d`` is
    ``N - 1`` in mode ``paper_N_minus_1`` and the fan-in of subsystem ``i``
    in mode ``in_degree``.

    Raises
    ------
    UnsupportedForm
        If some constants are not in the quadratic/linear normal form
        (``alpha_coef != 1``).
    """
    if mode not in DEGREE_MODES:
        raise ValueError(f"degree_mode must be one of {DEGREE_MODES}")
    n = topo.n_subsystems
    if len(constants) != n:
        raise ValueError(f"expected {n} constant sets, got {len(constants)}")
    for i, c in enumerate(constants):
        if c.alpha_coef != 1.0:
            raise UnsupportedForm(
                f"subsystem {i}: alpha_coef must be 1 for the gain construction"
            )
    lam = np.diag([c.kappa_hat for c in constants])
    delta = np.zeros((n, n))
    for e in topo.edges:
        d = (n - 1) if mode == "paper_N_minus_1" else topo.in_degree(e.target)
        delta[e.target, e.source] = constants[e.target].rho_int_coef * d**2
    return GainDecomposition(Lambda=lam, Delta=delta, degree_mode=mode)


def spectral_radius_test(g: GainDecomposition) -> float:
    """Spectral radius of ``Lambda^{-1} Delta``; a valid ``mu`` exists iff < 1.

    Computed with a dense eigensolver: the gain matrices of interest are tiny
    and frequently permutation-like, where iterative schemes stall.
    """
    G = np.linalg.solve(g.Lambda, g.Delta)
    return float(np.max(np.abs(np.linalg.eigvals(G))))


def _is_irreducible(G: np.ndarray) -> bool:
    n = G.shape[0]
    if n <= 1:
        return True
    reach = (np.eye(n, dtype=bool) | (G > 0))
    closure = np.linalg.matrix_power(reach.astype(int), n - 1) > 0
    return bool(np.all(closure))


def find_mu(g: GainDecomposition) -> np.ndarray:
    """Positive weights with strictly negative slack ``mu' (-Lambda + Delta)``.

    Uses the left Perron eigenvector ``w`` of ``Lambda^{-1} Delta`` (made
    irreducible by an all-ones perturbation when needed) and returns
    ``mu_i = w_i / lambda_i`` normalized to ``max(mu) = 1``:  then
    ``mu'(-Lambda + Delta) = (rho - 1) w' < 0`` componentwise.

    Raises
    ------
    Infeasible
        If the spectral radius test fails (``rho >= 1``).
    """
    rho = spectral_radius_test(g)
    if rho >= 1.0:
        raise Infeasible(f"spectral radius {rho:.6f} >= 1; no valid mu exists")
    n = g.n
    lam = np.diag(g.Lambda)
    if not np.any(g.Delta):
        return np.ones(n)
    G = np.linalg.solve(g.Lambda, g.Delta)
    eps = 1e-9 if not _is_irreducible(G) else 0.0
    for _ in range(8):
        Ge = G + eps * np.ones((n, n)) if eps else G
        vals, vecs = np.linalg.eig(Ge.T)
        w = np.real(vecs[:, np.argmax(np.abs(vals))])
        if w.sum() < 0:
            w = -w
        mu = w / lam
        if np.all(mu > 0):
            mu = mu / mu.max()
            slack = mu @ (-g.Lambda + g.Delta)
            if np.all(slack < 0):
                return mu
        eps = eps / 1e3 if eps else 1e-9
    raise Infeasible("could not certify a positive mu despite radius < 1")


def compose(
    certs: Sequence[AbstractionCertificate],
    constants: Sequence[SpsfConstants],
    g: GainDecomposition,
    mu: np.ndarray,
) -> CompositionCertificate:
    """Composed constants of the weighted-sum closeness function.

    ``kappa_hat`` is the worst normalized slack of the small-gain inequality,
    ``min_i (mu_i lambda_i - sum_j mu_j delta_ji) / mu_i``; the offset and
    external gain accumulate with weights ``mu_i``; the output lower-bound
    coefficient is ``min_i mu_i``.
    """
    mu = np.asarray(mu, dtype=float).reshape(-1)
    lam = np.diag(g.Lambda)
    slack = mu * lam - g.Delta.T @ mu
    if np.any(slack <= 0):
        raise Infeasible("mu does not satisfy the small-gain inequality")
    kappa = float(np.min(slack / mu))
    return CompositionCertificate(
        mu=mu,
        alpha_coef=float(min(w * c.alpha_coef for w, c in zip(mu, constants))),
        kappa_hat=kappa,
        rho_ext_coef=float(sum(w * c.rho_ext_coef for w, c in zip(mu, constants))),
        psi=float(sum(w * c.psi for w, c in zip(mu, constants))),
        constants=tuple(constants),
        certificates=tuple(certs),
    )
