"""Probabilistic closeness bounds derived from a composed certificate.

Given a closeness function with quadratic output lower bound
``alpha(s) = alpha_coef * s**2``, linear decrease rate ``kappa_hat`` and
offset ``psi_hat``, the supremum deviation of the two output trajectories
over a finite horizon exceeds ``epsilon`` with probability at most the
two-case expression evaluated by :func:`finite_horizon_bound`.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PreconditionViolated

__all__ = [
    "BoundQuery",
    "BoundResult",
    "BoxSet",
    "psi_hat",
    "finite_horizon_bound",
    "infinite_horizon_bound",
    "inflate_set",
    "safety_transfer",
]


@dataclass(frozen=True)
class BoundQuery:
    """Inputs of the finite-horizon deviation bound.

    ``V0`` is the closeness value at the initial state pair, ``epsilon`` the
    output-space deviation threshold and ``T`` the number of steps (the
    supremum runs over times ``0..T`` inclusive).
    """

    V0: float
    alpha_coef: float
    epsilon: float
    T: int
    psi_hat: float
    kappa_hat: float

    def __post_init__(self):
        if self.V0 < 0:
            raise DomainError(f"V0 must be nonnegative: {self.V0}")
        if self.alpha_coef <= 0:
            raise DomainError(f"alpha_coef must be positive: {self.alpha_coef}")
        if self.epsilon <= 0:
            raise DomainError(f"epsilon must be positive: {self.epsilon}")
        if self.psi_hat < 0:
            raise DomainError(f"psi_hat must be nonnegative: {self.psi_hat}")
        if not 0.0 < self.kappa_hat < 1.0:
            raise DomainError(f"kappa_hat out of (0,1): {self.kappa_hat}")
        if int(self.T) != self.T or self.T < 0:
            raise DomainError(f"T must be a nonnegative integer: {self.T}")
        object.__setattr__(self, "T", int(self.T))


@dataclass(frozen=True)
class BoundResult:
    """Evaluated bound: ``probability`` is ``raw`` clamped into [0, 1]."""

    probability: float
    raw: float
    branch: str
    clamped: bool

    def __float__(self) -> float:
        return self.probability


def psi_hat(rho_ext_coef: float, nuhat_sup: float, psi: float) -> float:
    """Tight admissible offset ``rho_ext_coef * nuhat_sup**2 + psi``."""
    if nuhat_sup < 0:
        raise DomainError(f"nuhat_sup must be nonnegative: {nuhat_sup}")
    return rho_ext_coef * nuhat_sup**2 + psi


def finite_horizon_bound(q: BoundQuery) -> BoundResult:
    """Two-case supremum-deviation bound over ``0 <= k <= T``.

    With ``a = alpha_coef * epsilon**2``:

    * high threshold (``a >= psi_hat / kappa_hat``):
      ``1 - (1 - V0/a) (1 - psi_hat/a)**T``
    * low threshold (``a < psi_hat / kappa_hat``):
      ``(V0/a) (1-kappa_hat)**T + (psi_hat/(kappa_hat a)) (1 - (1-kappa_hat)**T)``

    The branches agree exactly at the threshold.  The raw value can exceed 1
    when ``V0 > a``; the reported probability is clamped.
    """
    a = q.alpha_coef * q.epsilon**2
    if a >= q.psi_hat / q.kappa_hat:
        branch = "high_threshold"
        raw = 1.0 - (1.0 - q.V0 / a) * (1.0 - q.psi_hat / a) ** q.T
    else:
        branch = "low_threshold"
        decay = (1.0 - q.kappa_hat) ** q.T
        raw = (q.V0 / a) * decay + (q.psi_hat / (q.kappa_hat * a)) * (1.0 - decay)
    prob = min(max(raw, 0.0), 1.0)
    return BoundResult(probability=prob, raw=float(raw), branch=branch, clamped=prob != raw)


def infinite_horizon_bound(
    V0: float,
    alpha_coef: float,
    epsilon: float,
    *,
    psi: float = 0.0,
    rho_ext_coef: float = 0.0,
) -> float:
    """Unbounded-horizon bound ``min(V0 / (alpha_coef * epsilon**2), 1)``.

    Valid only for certificates with no offset and no external gain, which
    make the closeness function a nonnegative supermartingale.

    Raises
    ------
    PreconditionViolated
        If ``psi`` or ``rho_ext_coef`` is nonzero.
    """
    if psi != 0.0 or rho_ext_coef != 0.0:
        raise PreconditionViolated(
            f"infinite-horizon bound needs psi = 0 and rho_ext = 0, got {psi}, {rho_ext_coef}"
        )
    if V0 < 0:
        raise DomainError(f"V0 must be nonnegative: {V0}")
    if alpha_coef <= 0 or epsilon <= 0:
        raise DomainError("alpha_coef and epsilon must be positive")
    return min(V0 / (alpha_coef * epsilon**2), 1.0)


@dataclass(frozen=True, eq=False)
class BoxSet:
    """Axis-aligned box in output space."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape:
            raise DomainError("lower and upper must have equal length")
        if np.any(lower > upper):
            raise DomainError("lower must be <= upper componentwise")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    def contains(self, y) -> bool:
        y = np.asarray(y, dtype=float).reshape(-1)
        return bool(np.all(y >= self.lower) and np.all(y <= self.upper))


def inflate_set(A1: BoxSet, epsilon: float) -> BoxSet:
    """Box enlarged by ``epsilon`` on every side.

    Contains the Euclidean epsilon-neighborhood of ``A1`` (a sound
    over-approximation, since ``|y'_i - y_i| <= ||y' - y||``).
    """
    if epsilon < 0:
        raise DomainError(f"epsilon must be nonnegative: {epsilon}")
    return BoxSet(A1.lower - epsilon, A1.upper + epsilon)


def safety_transfer(p_abstract: float, delta: float) -> float:
    """Reach probability carried from the abstract system to the concrete one.

    If the abstract output enters the inflated set with probability at most
    ``p_abstract`` and the deviation bound is ``delta``, the concrete output
    enters the original set with probability at most their (capped) sum.
    """
    for name, v in (("p_abstract", p_abstract), ("delta", delta)):
        if not 0.0 <= v <= 1.0:
            raise DomainError(f"{name} must lie in [0,1]: {v}")
    return min(p_abstract + delta, 1.0)
