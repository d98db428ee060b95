"""Per-subsystem abstraction certificates and their quadratic closeness function.

A certificate ``(M, K, P, Q, S, Rtilde, pi, kappa_hat)`` relates a concrete
subsystem ``(A, B, C, D, F)`` to a reduced candidate ``(Ahat, Bhat, Chat,
Dhat, Fhat)`` through the lifted error ``e = x - P xhat``.  It is valid when

* ``M`` is symmetric positive (semi)definite and dominates the output Gram
  matrix, ``C'C <= M`` with ``C`` the full stacked output map;
* the closed loop contracts in the ``M``-metric,
  ``(1 + pi) (A + BK)' M (A + BK) <= (1 - kappa_hat) M``;
* the structural equalities ``A P = P Ahat - B Q``, ``D = P Dhat - B S`` and
  ``C P = Chat`` hold.

Those facts make ``V(x, xhat) = e' M e`` a one-step expected-decrease
function: with the concrete input chosen by :func:`interface`,

    E[V+] - V  <=  -kappa_hat V
                   + rho_int ||omega - omegahat||^2
                   + rho_ext ||nuhat||^2
                   + psi,

with the closed-form coefficients produced by :func:`derive_constants`.
"""

import warnings
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

import numpy as np
from scipy.linalg import solve_discrete_are, solve_discrete_lyapunov

from .errors import (
    DimensionMismatch,
    Infeasible,
    RankDeficientWarning,
    SingularGramWarning,
)
from .model import LinearSubsystem, _matrix

__all__ = [
    "AbstractionCandidate",
    "AbstractionCertificate",
    "SpsfConstants",
    "ConditionCheck",
    "ConditionReport",
    "StructuralSolution",
    "check_conditions",
    "synthesize_MK",
    "solve_structural",
    "compute_Rtilde",
    "derive_constants",
    "evaluate_V",
    "interface",
    "expected_V_next",
    "expected_decrease_bound",
]

RHO_EXT_VARIANTS = ("printed", "symmetric")


@dataclass(frozen=True, eq=False)
class AbstractionCandidate:
    """Reduced-order model plus the lifting matrix ``P`` that embeds its state.

    The internal input space is shared with the concrete subsystem (``Dhat``
    has the same column count as ``D``), and the output blocks keep their row
    counts so both systems write into the same output space.
    """

    Ahat: np.ndarray
    Bhat: np.ndarray
    Dhat: np.ndarray
    Fhat: np.ndarray
    Chat_ext: np.ndarray
    Chat_int: Mapping[int, np.ndarray]
    P: np.ndarray

    def __post_init__(self):
        for name in ("Ahat", "Bhat", "Dhat", "Fhat", "Chat_ext", "P"):
            object.__setattr__(self, name, _matrix(getattr(self, name), name))
        blocks = {int(j): _matrix(m, f"Chat_int[{j}]") for j, m in self.Chat_int.items()}
        object.__setattr__(self, "Chat_int", MappingProxyType(blocks))

    @property
    def nhat(self) -> int:
        return self.Ahat.shape[0]

    @property
    def mhat(self) -> int:
        return self.Bhat.shape[1]

    @classmethod
    def induced(cls, s: LinearSubsystem, P, Ahat, Bhat, Dhat, Fhat=None) -> "AbstractionCandidate":
        """Candidate whose output blocks are inherited from the concrete map.

        Sets ``Chat = C P`` blockwise, which satisfies the output-matching
        equality by construction, and defaults ``Fhat`` to a noiseless
        abstraction (zero columns), the choice that minimizes the offset
        ``psi``.
        """
        P = _matrix(P, "P")
        Ahat = _matrix(Ahat, "Ahat")
        if Fhat is None:
            Fhat = np.zeros((Ahat.shape[0], 0))
        return cls(
            Ahat=Ahat,
            Bhat=Bhat,
            Dhat=Dhat,
            Fhat=Fhat,
            Chat_ext=s.C_ext @ P,
            Chat_int={j: blk @ P for j, blk in s.C_int.items()},
            P=P,
        )

    def as_subsystem(self, id: int) -> LinearSubsystem:
        """View the candidate as a subsystem so it can be interconnected."""
        return LinearSubsystem(
            id=id,
            A=self.Ahat,
            B=self.Bhat,
            D=self.Dhat,
            F=self.Fhat,
            C_ext=self.Chat_ext,
            C_int=dict(self.Chat_int),
        )


@dataclass(frozen=True, eq=False)
class AbstractionCertificate:
    """Witness data for one concrete/abstract subsystem pair.

    ``residuals`` optionally carries the numerical slack of each condition as
    reported by :func:`check_conditions`.
    """

    M: np.ndarray
    K: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    S: np.ndarray
    Rtilde: np.ndarray
    pi: float
    kappa_hat: float
    residuals: Mapping[str, float] | None = None

    def __post_init__(self):
        for name in ("M", "K", "P", "Q", "S", "Rtilde"):
            object.__setattr__(self, name, _matrix(getattr(self, name), name))
        object.__setattr__(self, "pi", float(self.pi))
        object.__setattr__(self, "kappa_hat", float(self.kappa_hat))


@dataclass(frozen=True)
class SpsfConstants:
    """Closed-form constants of the one-step decrease inequality.

    ``alpha_coef`` scales the quadratic output lower bound ``alpha(s) =
    alpha_coef * s**2``; the decrease rate is linear, ``kappa(s) =
    kappa_hat * s``; the gain terms are quadratic with coefficients
    ``rho_int_coef`` and ``rho_ext_coef``; ``psi`` is the additive noise
    offset.
    """

    alpha_coef: float
    kappa_hat: float
    rho_int_coef: float
    rho_ext_coef: float
    psi: float

    def __post_init__(self):
        if not 0.0 < self.kappa_hat < 1.0:
            raise ValueError(f"kappa_hat out of (0,1): {self.kappa_hat}")
        for name in ("alpha_coef", "rho_int_coef", "rho_ext_coef", "psi"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    value: float
    threshold: float
    passed: bool


@dataclass(frozen=True)
class ConditionReport:
    """Residuals of every certificate condition plus domain violations."""

    tol: float
    checks: tuple[ConditionCheck, ...]
    violations: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return not self.violations and all(c.passed for c in self.checks)

    def values(self) -> dict[str, float]:
        return {c.name: c.value for c in self.checks}

    def render(self) -> str:
        width = max(len(c.name) for c in self.checks)
        lines = [f"{'condition':<{width}}  {'residual':>13}  {'threshold':>13}  status"]
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            lines.append(f"{c.name:<{width}}  {c.value:>13.6e}  {c.threshold:>13.6e}  {status}")
        for v in self.violations:
            lines.append(f"violation: {v}")
        return "\n".join(lines)


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _min_eig(m: np.ndarray) -> float:
    if m.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(_sym(m))[0])


def _max_eig(m: np.ndarray) -> float:
    if m.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(_sym(m))[-1])


def _spec_norm(m: np.ndarray) -> float:
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def stacked_outputs(s: LinearSubsystem, cand: AbstractionCandidate) -> tuple[np.ndarray, np.ndarray]:
    """Stack concrete and abstract output blocks in matching order."""
    if set(cand.Chat_int) != set(s.C_int):
        raise DimensionMismatch(
            f"candidate internal output keys {sorted(cand.Chat_int)} "
            f"!= concrete keys {sorted(s.C_int)}"
        )
    concrete = dict(s.C_int)
    concrete[s.id] = s.C_ext
    abstract = dict(cand.Chat_int)
    abstract[s.id] = cand.Chat_ext
    order = sorted(concrete)
    return (
        np.vstack([concrete[j] for j in order]),
        np.vstack([abstract[j] for j in order]),
    )


def check_conditions(
    s: LinearSubsystem,
    cand: AbstractionCandidate,
    cert: AbstractionCertificate,
    tol: float = 1e-9,
) -> ConditionReport:
    """Evaluate all certificate conditions and report their numerical slack.

    Matrix-inequality margins (minimum eigenvalues) must be ``>= -tol``
    scaled by ``max(1, ||M||)``; equality residuals (spectral norms) must be
    ``<= tol``.  Nothing is raised: the report carries pass/fail per check.
    """
    C_full, Chat_full = stacked_outputs(s, cand)
    M, K, P = cert.M, cert.K, cert.P
    n, nhat = s.n, cand.nhat
    if P.shape != (n, nhat):
        raise DimensionMismatch(f"P is {P.shape}, expected ({n}, {nhat})")
    if K.shape != (s.m, n):
        raise DimensionMismatch(f"K is {K.shape}, expected ({s.m}, {n})")
    Abar = s.A + s.B @ K
    scale = max(1.0, _spec_norm(M))
    eig_tol = tol * scale

    m_defect = max(_spec_norm(M - M.T), max(0.0, -_min_eig(M)))
    out_margin = _min_eig(M - C_full.T @ C_full)
    dec_margin = _min_eig((1.0 - cert.kappa_hat) * M - (1.0 + cert.pi) * Abar.T @ M @ Abar)
    drift_res = _spec_norm(s.A @ P - P @ cand.Ahat + s.B @ cert.Q)
    internal_res = _spec_norm(s.D - P @ cand.Dhat + s.B @ cert.S)
    output_res = _spec_norm(C_full @ P - Chat_full)

    checks = (
        ConditionCheck("M symmetric positive", m_defect, eig_tol, m_defect <= eig_tol),
        ConditionCheck("output bound", out_margin, -eig_tol, out_margin >= -eig_tol),
        ConditionCheck("decrease", dec_margin, -eig_tol, dec_margin >= -eig_tol),
        ConditionCheck("drift match", drift_res, tol, drift_res <= tol),
        ConditionCheck("internal input match", internal_res, tol, internal_res <= tol),
        ConditionCheck("output match", output_res, tol, output_res <= tol),
    )
    violations = []
    if not 0.0 < cert.kappa_hat < 1.0:
        violations.append(f"kappa_hat out of (0,1): {cert.kappa_hat}")
    if cert.pi <= 0.0:
        violations.append(f"pi must be positive: {cert.pi}")
    return ConditionReport(tol=tol, checks=checks, violations=tuple(violations))


def synthesize_MK(
    A, B, C, pi: float, kappa_hat: float, *, tol: float = 1e-9
) -> tuple[np.ndarray, np.ndarray]:
    """Find ``(M, K)`` satisfying the output-bound and decrease inequalities.

    The decrease condition is equivalent to Schur stability of the scaled
    closed loop ``gamma (A + BK)`` with ``gamma = sqrt((1+pi)/(1-kappa_hat))``.
    ``K`` is chosen by uniform shrinkage ``K = -eta B^+ A`` (swept over eta)
    when ``B`` is square and invertible, otherwise as the optimal regulator
    gain of the gamma-scaled pair.  ``M`` is then the scaled Lyapunov series

        M = sum_k gamma**(2k) (A+BK)'**k (C'C + eps I) (A+BK)**k,

    evaluated as the fixed point of the associated discrete Lyapunov
    equation; folding ``eps I`` into the generator gives both inequalities a
    guaranteed positive margin.

    Raises
    ------
    Infeasible
        If no gain renders the scaled closed loop Schur stable.
    """
    A = _matrix(A, "A")
    B = _matrix(B, "B")
    C = _matrix(C, "C")
    n, m = B.shape
    if A.shape != (n, n) or C.shape[1] != n:
        raise DimensionMismatch("A/B/C dimensions inconsistent")
    if pi <= 0 or not 0.0 < kappa_hat < 1.0:
        raise Infeasible(f"need pi > 0 and kappa_hat in (0,1), got {pi}, {kappa_hat}")
    gamma = np.sqrt((1.0 + pi) / (1.0 - kappa_hat))

    K = None
    if m == n and np.linalg.cond(B) < 1e12:
        Binv_A = np.linalg.solve(B, A)
        for eta in np.linspace(0.0, 1.0, 21):
            cand = -eta * Binv_A
            if gamma * _spectral_radius(A + B @ cand) <= 0.9:
                K = cand
                break
    if K is None:
        try:
            X = solve_discrete_are(gamma * A, gamma * B, np.eye(n), np.eye(m))
        except Exception as exc:
            raise Infeasible(f"no stabilizing gain found: {exc}") from exc
        G = np.linalg.solve(np.eye(m) + gamma**2 * B.T @ X @ B, gamma**2 * B.T @ X @ A)
        K = -G
    if gamma * _spectral_radius(A + B @ K) >= 1.0:
        raise Infeasible("scaled closed loop is not Schur stable")

    G = gamma * (A + B @ K)
    Abar = A + B @ K
    eps = 1e-8 * _spec_norm(C.T @ C) + 1e-12
    for _ in range(3):
        # M = sum_k G'**k (C'C + eps I) G**k, i.e. M = G'MG + C'C + eps I,
        # evaluated by a backward-stable direct solve
        W = _sym(C.T @ C + eps * np.eye(n))
        M = _sym(solve_discrete_lyapunov(G.T, W, method="bilinear"))
        # never hand back a failing pair: verify at the caller's tolerance
        scale = max(1.0, _spec_norm(M))
        ok = _min_eig(M - C.T @ C) >= -tol * scale and (
            _min_eig((1.0 - kappa_hat) * M - (1.0 + pi) * Abar.T @ M @ Abar)
            >= -tol * scale
        )
        if ok:
            return M, K
        eps *= 1e4
    raise Infeasible("certificate margins lost to round-off")


def _spectral_radius(m: np.ndarray) -> float:
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(m))))


@dataclass(frozen=True, eq=False)
class StructuralSolution:
    Q: np.ndarray
    S: np.ndarray
    drift_residual: float
    internal_residual: float


def solve_structural(s: LinearSubsystem, cand: AbstractionCandidate) -> StructuralSolution:
    """Least-squares ``Q`` and ``S`` for the structural equalities.

    Solves ``B Q = P Ahat - A P`` and ``B S = P Dhat - D`` in the
    minimum-norm least-squares sense and reports the attained residual norms;
    certificate validity requires them to be numerically zero.

    Warns with :class:`RankDeficientWarning` when ``B`` lacks full column
    rank (the solution is then non-unique).
    """
    P = cand.P
    rhs_q = P @ cand.Ahat - s.A @ P
    rhs_s = P @ cand.Dhat - s.D
    if np.linalg.matrix_rank(s.B) < s.m:
        warnings.warn(
            "B lacks full column rank; returning minimum-norm Q, S", RankDeficientWarning
        )
    Q = np.linalg.lstsq(s.B, rhs_q, rcond=None)[0]
    S = np.linalg.lstsq(s.B, rhs_s, rcond=None)[0]
    return StructuralSolution(
        Q=Q,
        S=S,
        drift_residual=_spec_norm(s.B @ Q - rhs_q),
        internal_residual=_spec_norm(s.B @ S - rhs_s),
    )


def compute_Rtilde(B, M, P, Bhat) -> np.ndarray:
    """Input-matching gain ``Rtilde = (B'MB)^{-1} B'M P Bhat``.

    This is the weighted least-squares choice that minimizes
    ``||sqrt(M)(B Rtilde - P Bhat)||`` and hence the external gain
    coefficient.  Falls back to a pseudo-inverse (with
    :class:`SingularGramWarning`) when the Gram matrix ``B'MB`` is singular.
    """
    B = _matrix(B, "B")
    M = _matrix(M, "M")
    P = _matrix(P, "P")
    Bhat = _matrix(Bhat, "Bhat")
    gram = B.T @ M @ B
    rhs = B.T @ M @ P @ Bhat
    if gram.size == 0:
        return np.zeros((B.shape[1], Bhat.shape[1]))
    if np.linalg.cond(gram) > 1e12:
        warnings.warn("B'MB is singular; using pseudo-inverse", SingularGramWarning)
        return np.linalg.pinv(gram) @ rhs
    return np.linalg.solve(gram, rhs)


def _young_coefficients(pi: float, rho_ext_variant: str) -> tuple[float, float]:
    if rho_ext_variant not in RHO_EXT_VARIANTS:
        raise ValueError(f"rho_ext_variant must be one of {RHO_EXT_VARIANTS}")
    young_int = 1.0 + 2.0 / pi + pi / 2.0
    if rho_ext_variant == "printed":
        young_ext = 1.0 + 2.0 / pi + 2.0 / pi
    else:
        young_ext = 1.0 + 2.0 / pi + pi / 2.0
    return young_int, young_ext


def derive_constants(
    s: LinearSubsystem,
    cand: AbstractionCandidate,
    cert: AbstractionCertificate,
    *,
    rho_ext_variant: str = "printed",
) -> SpsfConstants:
    """Closed-form decrease-inequality constants for a valid certificate.

    With spectral norms throughout:

    * ``rho_int_coef = (1 + 2/pi + pi/2) ||sqrt(M) D||^2``
    * ``rho_ext_coef = (1 + 2/pi + 2/pi) ||sqrt(M)(B Rtilde - P Bhat)||^2``
    * ``psi = Tr(F'MF + Fhat'P'MP Fhat)``

    The default external coefficient is the one consistent with splitting the
    mixed cross term as ``2ab <= (pi/2) a^2 + (2/pi) b^2``; the ``symmetric``
    variant mirrors the internal coefficient instead and is only a valid
    bound for ``pi >= 2``.
    """
    young_int, young_ext = _young_coefficients(cert.pi, rho_ext_variant)
    M, P = cert.M, cert.P
    rho_int = young_int * max(0.0, _max_eig(s.D.T @ M @ s.D))
    X = s.B @ cert.Rtilde - P @ cand.Bhat
    rho_ext = young_ext * max(0.0, _max_eig(X.T @ M @ X))
    PF = P @ cand.Fhat
    psi = float(np.trace(s.F.T @ M @ s.F) + np.trace(PF.T @ M @ PF))
    return SpsfConstants(
        alpha_coef=1.0,
        kappa_hat=cert.kappa_hat,
        rho_int_coef=rho_int,
        rho_ext_coef=rho_ext,
        psi=max(0.0, psi),
    )


def evaluate_V(x, xhat, M, P) -> float:
    """Quadratic closeness function ``(x - P xhat)' M (x - P xhat)``."""
    e = np.asarray(x, dtype=float) - np.asarray(P, dtype=float) @ np.asarray(xhat, dtype=float)
    return float(e @ np.asarray(M, dtype=float) @ e)


def interface(x, xhat, nuhat, omegahat, cert: AbstractionCertificate) -> np.ndarray:
    """Refine an abstract input into the concrete one:

    ``nu = K (x - P xhat) + Q xhat + Rtilde nuhat + S omegahat``.
    """
    x = np.asarray(x, dtype=float)
    xhat = np.asarray(xhat, dtype=float)
    nuhat = np.asarray(nuhat, dtype=float)
    omegahat = np.asarray(omegahat, dtype=float)
    return (
        cert.K @ (x - cert.P @ xhat)
        + cert.Q @ xhat
        + cert.Rtilde @ nuhat
        + cert.S @ omegahat
    )


def expected_V_next(
    x,
    xhat,
    nu,
    nuhat,
    omega,
    omegahat,
    s: LinearSubsystem,
    cand: AbstractionCandidate,
    cert: AbstractionCertificate,
) -> float:
    """Exact one-step conditional expectation of the closeness function.

    Both noises are zero mean and mutually independent, so the expectation
    splits into the deterministic mean drift plus the trace offset:

        E[V+] = || sqrt(M) (mean_x - P mean_xhat) ||^2
                + Tr(F'MF + Fhat'P'MP Fhat).

    When the structural equalities hold and ``nu`` comes from
    :func:`interface`, the mean term equals
    ``(A+BK)(x - P xhat) + D (omega - omegahat) + (B Rtilde - P Bhat) nuhat``.
    """
    x = np.asarray(x, dtype=float)
    xhat = np.asarray(xhat, dtype=float)
    mean_c = s.A @ x + s.B @ np.asarray(nu, dtype=float) + s.D @ np.asarray(omega, dtype=float)
    mean_a = (
        cand.Ahat @ xhat
        + cand.Bhat @ np.asarray(nuhat, dtype=float)
        + cand.Dhat @ np.asarray(omegahat, dtype=float)
    )
    d = mean_c - cert.P @ mean_a
    PF = cert.P @ cand.Fhat
    trace_term = float(np.trace(s.F.T @ cert.M @ s.F) + np.trace(PF.T @ cert.M @ PF))
    return float(d @ cert.M @ d) + trace_term


def expected_decrease_bound(
    v: float, constants: SpsfConstants, omega, omegahat, nuhat
) -> float:
    """Right-hand side of the one-step inequality on ``E[V+]``:

    ``V - kappa_hat V + rho_int ||omega - omegahat||^2
    + rho_ext ||nuhat||^2 + psi``.
    """
    d_omega = np.asarray(omega, dtype=float) - np.asarray(omegahat, dtype=float)
    nuhat = np.asarray(nuhat, dtype=float)
    return (
        (1.0 - constants.kappa_hat) * v
        + constants.rho_int_coef * float(d_omega @ d_omega)
        + constants.rho_ext_coef * float(nuhat @ nuhat)
        + constants.psi
    )
