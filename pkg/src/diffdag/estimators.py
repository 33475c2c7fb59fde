"""Estimation of the difference between two SEM precision matrices.

The population identity Sigma1 (Omega1 - Omega2) Sigma2 = Sigma2 - Sigma1
means the difference solves a linear system without ever forming either dense
precision matrix. The finite-sample estimator is a Dantzig-selector-type
program: minimize ||beta||_1 subject to

    || (S2 kron S1) beta - vec(S2 - S1) ||_inf <= lambda_n,

solved as a linear program after splitting beta into positive and negative
parts. The reshaped solution is symmetrized and hard-thresholded, since only
entries clearly away from zero should count as support.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linprog

from .errors import (
    DiffDagError,
    EstimatorConvergenceError,
    InfeasibleEstimateError,
    InvalidCovarianceError,
)
from .sem import CovariancePair, _symmetrize


@dataclass(frozen=True, eq=False)
class DeltaPrecision:
    """A symmetric matrix of precision differences with its label index.

    ``threshold_applied`` records the hard threshold used to zero small
    entries (0 for population-exact solutions); after thresholding no entry
    may sit in (0, threshold].
    """

    matrix: np.ndarray
    labels: tuple = ()
    threshold_applied: float = 0.0

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"matrix must be square, got {m.shape}")
        p = m.shape[0]
        scale = max(1.0, float(np.abs(m).max()) if m.size else 0.0)
        if m.size and float(np.abs(m - m.T).max()) > 1e-10 * scale:
            raise ValueError("matrix must be symmetric")
        labels = tuple(self.labels) if len(self.labels) else tuple(range(p))
        if len(labels) != p or len(set(labels)) != p:
            raise ValueError("labels must be unique and match the dimension")
        if self.threshold_applied < 0.0:
            raise ValueError("threshold_applied must be nonnegative")
        if self.threshold_applied > 0.0:
            absm = np.abs(m)
            bad = (absm > 0.0) & (absm <= self.threshold_applied)
            if bad.any():
                raise ValueError("entries at or below the threshold must be exactly zero")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_index", {lab: k for k, lab in enumerate(labels)})

    @property
    def p(self) -> int:
        return self.matrix.shape[0]

    def index(self, label) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"unknown vertex label {label!r}") from None

    def entry(self, i, j) -> float:
        return float(self.matrix[self.index(i), self.index(j)])

    def zero_rows(self) -> frozenset:
        """Labels whose entire row is exactly zero."""
        mask = np.abs(self.matrix).max(axis=1) == 0.0 if self.p else np.array([])
        return frozenset(self.labels[i] for i in np.flatnonzero(mask))

    def nonzero_partners(self, label) -> list:
        i = self.index(label)
        return [self.labels[j] for j in np.flatnonzero(self.matrix[i, :]) if j != i]

    def support_size(self) -> int:
        return int(np.count_nonzero(self.matrix))

    def restrict(self, labels) -> "DeltaPrecision":
        wanted = set(labels)
        keep = [lab for lab in self.labels if lab in wanted]
        missing = wanted - set(keep)
        if missing:
            raise KeyError(f"unknown vertex labels {sorted(missing, key=repr)!r}")
        idx = [self.index(lab) for lab in keep]
        return DeltaPrecision(
            self.matrix[np.ix_(idx, idx)], tuple(keep), self.threshold_applied
        )

    def to_json(self) -> dict:
        return {
            "labels": list(self.labels),
            "matrix": [[float(v) for v in row] for row in self.matrix],
            "threshold": self.threshold_applied,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DeltaPrecision":
        return cls(
            matrix=np.array(obj["matrix"], dtype=float),
            labels=tuple(obj.get("labels") or ()),
            threshold_applied=float(obj.get("threshold", 0.0)),
        )


@dataclass(frozen=True)
class EstimatorConfig:
    """Knobs of the constrained-l1 estimator.

    With ``lambda_auto`` the constraint radius is set to
    ``lambda_scale * sqrt(log(2 p / lambda_delta) / min(n1, n2))``; the scale
    is exposed because the theory pins it only up to an instance-dependent
    constant.
    """

    lambda_n: float = 0.0
    epsilon: float = 0.125
    lambda_auto: bool = False
    lambda_scale: float = 1.0
    lambda_delta: float = 0.05
    solver_tol: float = 1e-7
    max_iter: int = 50_000

    def __post_init__(self):
        if self.lambda_n < 0.0:
            raise ValueError("lambda_n must be nonnegative")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.solver_tol <= 0.0:
            raise ValueError("solver_tol must be positive")
        if self.lambda_scale <= 0.0:
            raise ValueError("lambda_scale must be positive")
        if not 0.0 < self.lambda_delta < 1.0:
            raise ValueError("lambda_delta must lie strictly between 0 and 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    @classmethod
    def from_json(cls, obj: dict) -> "EstimatorConfig":
        return cls(**obj)


def auto_lambda(p: int, n1: int, n2: int, scale: float = 1.0, delta: float = 0.05) -> float:
    """Sample-size driven constraint radius scale * sqrt(log(2p/delta) / n)."""
    n = min(n1, n2)
    if n < 1:
        raise ValueError("auto lambda needs positive sample counts")
    return scale * math.sqrt(math.log(2.0 * p / delta) / n)


def resolve_lambda(cov: CovariancePair, cfg: EstimatorConfig) -> float:
    if not cfg.lambda_auto:
        return cfg.lambda_n
    return auto_lambda(cov.p, cov.n1, cov.n2, cfg.lambda_scale, cfg.lambda_delta)


def solve_population(cov: CovariancePair) -> DeltaPrecision:
    """Exact precision difference from positive-definite covariances.

    Solves Sigma1 X Sigma2 = Sigma2 - Sigma1, whose unique solution is
    Omega1 - Omega2.
    """
    try:
        c1 = sla.cho_factor(cov.sigma1)
        c2 = sla.cho_factor(cov.sigma2)
    except np.linalg.LinAlgError:
        raise InvalidCovarianceError(
            "population solve requires positive-definite covariance matrices"
        ) from None
    t = sla.cho_solve(c1, cov.sigma2 - cov.sigma1)
    dm = sla.cho_solve(c2, t.T).T
    return DeltaPrecision(_symmetrize(dm), cov.labels, 0.0)


def dantzig_selector(
    sigma1: np.ndarray,
    sigma2: np.ndarray,
    lambda_n: float,
    solver_tol: float = 1e-7,
    max_iter: int = 50_000,
) -> np.ndarray:
    """Raw minimizer of the constrained-l1 program, reshaped to p x p.

    Returns the solution before any symmetrization or thresholding. When zero
    is feasible it is returned outright (it has the smallest possible l1
    norm); when lambda_n is 0 and both matrices admit a Cholesky factor the
    feasible set is the singleton exact solution, which is computed directly.
    """
    s1 = np.asarray(sigma1, dtype=float)
    s2 = np.asarray(sigma2, dtype=float)
    p = s1.shape[0]
    rhs = s2 - s1
    b = rhs.flatten(order="F")
    if lambda_n >= float(np.abs(b).max()):
        return np.zeros((p, p))
    if lambda_n == 0.0:
        try:
            c1 = sla.cho_factor(s1)
            c2 = sla.cho_factor(s2)
            return sla.cho_solve(c2, sla.cho_solve(c1, rhs).T).T
        except np.linalg.LinAlgError:
            pass  # rank-deficient: fall through to the LP

    n = p * p
    kron = np.kron(s2, s1)
    cost = np.ones(2 * n)
    a_ub = np.block([[kron, -kron], [-kron, kron]])
    b_ub = np.concatenate([b + lambda_n, lambda_n - b])
    res = linprog(
        cost,
        A_ub=a_ub,
        b_ub=b_ub,
        bounds=(0.0, None),
        method="highs",
        options={"maxiter": max_iter, "primal_feasibility_tolerance": max(solver_tol, 1e-10)},
    )
    if res.status == 2:
        raise InfeasibleEstimateError(
            f"constrained l1 program infeasible at lambda_n={lambda_n:g}; "
            "increase lambda_n (the empirical system is inconsistent)"
        )
    if res.status in (1, 4) or res.x is None:
        best = None
        if res.x is not None:
            beta = res.x[:n] - res.x[n:]
            best = float(np.abs(kron @ beta - b).max())
        raise EstimatorConvergenceError(
            f"LP solver stopped early (status {res.status}) at lambda_n={lambda_n:g}",
            best_residual=best,
        )
    if res.status != 0:
        raise DiffDagError(f"unexpected LP status {res.status}")
    beta = res.x[:n] - res.x[n:]
    residual = float(np.abs(kron @ beta - b).max())
    if residual > lambda_n + 100.0 * solver_tol:
        raise EstimatorConvergenceError(
            f"LP solution violates the residual bound ({residual:g} > {lambda_n:g} + tol)",
            best_residual=residual,
        )
    return beta.reshape((p, p), order="F")


def _apply_threshold(m: np.ndarray, epsilon: float) -> np.ndarray:
    out = m.copy()
    out[np.abs(out) <= epsilon] = 0.0
    return out


def estimate_dantzig(cov: CovariancePair, cfg: EstimatorConfig) -> DeltaPrecision:
    """Constrained-l1 estimate, symmetrized and hard-thresholded at epsilon."""
    lam = resolve_lambda(cov, cfg)
    raw = dantzig_selector(cov.sigma1, cov.sigma2, lam, cfg.solver_tol, cfg.max_iter)
    sym = _symmetrize(raw)
    return DeltaPrecision(_apply_threshold(sym, cfg.epsilon), cov.labels, cfg.epsilon)


def estimate_submatrix(
    cov: CovariancePair, subset, cfg: EstimatorConfig, method: str = "auto"
) -> DeltaPrecision:
    """Estimate the precision difference of the marginal models over a subset.

    The covariance pair is restricted to the subset and the configured
    estimator runs on the restriction; "auto" picks the exact solver for
    population pairs and the constrained-l1 program otherwise. For population
    inputs the result equals the difference of marginal precisions (Schur
    complements) over the subset.
    """
    sub = cov.restrict(subset)
    if method == "auto":
        method = "population" if sub.is_population else "dantzig"
    if method == "population":
        return solve_population(sub)
    if method == "dantzig":
        return estimate_dantzig(sub, cfg)
    raise ValueError(f"unknown estimator method {method!r}")


def threshold(dp: DeltaPrecision, epsilon: float) -> DeltaPrecision:
    """Zero all entries with magnitude at or below epsilon (inclusive)."""
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    return DeltaPrecision(_apply_threshold(dp.matrix, epsilon), dp.labels, epsilon)


@dataclass(frozen=True)
class IncoherenceReport:
    """Advisory constants governing when the constrained-l1 program is sharp.

    ``k_o_max`` is the largest off-diagonal magnitude of the Kronecker lift
    Sigma2 kron Sigma1, i.e. the maximum of |Sigma1_ij * Sigma2_kl| over index
    quadruples other than (i==j and k==l). ``k_d_min`` is the smallest
    matching-diagonal product. The reported inequality compares k_o_max
    against lambda_min(Sigma1) * lambda_min(Sigma2) / (2 * nnz(delta)).
    """

    k_o_max: float
    k_d_min: float
    lambda_min_1: float
    lambda_min_2: float
    delta_l0: int
    bound: float
    inequality_holds: bool

    def to_dict(self) -> dict:
        return {
            "k_o_max": self.k_o_max,
            "k_d_min": self.k_d_min,
            "lambda_min_1": self.lambda_min_1,
            "lambda_min_2": self.lambda_min_2,
            "delta_l0": self.delta_l0,
            "bound": self.bound if math.isfinite(self.bound) else None,
            "inequality_holds": self.inequality_holds,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def incoherence_diagnostics(cov: CovariancePair, dp: DeltaPrecision) -> IncoherenceReport:
    """Advisory incoherence constants for a covariance pair and an estimate."""
    a1 = np.abs(cov.sigma1)
    a2 = np.abs(cov.sigma2)
    p = cov.p
    off = ~np.eye(p, dtype=bool)
    off1 = float(a1[off].max()) if p > 1 else 0.0
    off2 = float(a2[off].max()) if p > 1 else 0.0
    k_o_max = max(off1 * float(a2.max()), float(np.diag(a1).max()) * off2)
    k_d_min = float((np.diag(cov.sigma1) * np.diag(cov.sigma2)).min())
    lam1 = float(np.linalg.eigvalsh(cov.sigma1).min())
    lam2 = float(np.linalg.eigvalsh(cov.sigma2).min())
    nnz = dp.support_size()
    bound = math.inf if nnz == 0 else lam1 * lam2 / (2.0 * nnz)
    return IncoherenceReport(
        k_o_max=k_o_max,
        k_d_min=k_d_min,
        lambda_min_1=lam1,
        lambda_min_2=lam2,
        delta_l0=nnz,
        bound=bound,
        inequality_holds=bool(k_o_max <= bound),
    )


def with_resolved_lambda(cov: CovariancePair, cfg: EstimatorConfig) -> EstimatorConfig:
    """A copy of cfg with the auto rule applied once, for reuse on submatrices."""
    if not cfg.lambda_auto:
        return cfg
    return replace(cfg, lambda_n=resolve_lambda(cov, cfg), lambda_auto=False)
