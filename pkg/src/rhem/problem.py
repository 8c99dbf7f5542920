"""Stratified conditional-logit data and its log partial likelihood.

Each stratum holds one observed receiver set (the case) and the receiver
sets it competed with (sampled controls or the full risk set). The log
likelihood is

    sum_m [ beta'x(case_m) - log sum_{r in stratum m} exp(beta'x(r)) ]
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, ValidationError


class EstimationProblem:
    """Covariate rows grouped into strata with exactly one case each.

    Parameters
    ----------
    X : (n_obs, dim) array
        Covariate rows; the rows of one stratum are contiguous.
    sizes : sequence of int
        Number of rows in each stratum, in order.
    case_offsets : sequence of int
        Position of the case row within each stratum.
    names : sequence of str
        Covariate names.
    """

    def __init__(self, X, sizes, case_offsets, names: Sequence[str]):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise DimensionMismatch("X must be two-dimensional")
        sizes = np.asarray(sizes, dtype=np.int64)
        case_offsets = np.asarray(case_offsets, dtype=np.int64)
        if len(sizes) == 0:
            raise ValidationError("an estimation problem needs at least one stratum")
        if len(case_offsets) != len(sizes):
            raise DimensionMismatch("one case offset per stratum is required")
        if np.any(sizes < 1) or sizes.sum() != X.shape[0]:
            raise DimensionMismatch("stratum sizes must be positive and sum to the row count")
        if np.any(case_offsets < 0) or np.any(case_offsets >= sizes):
            raise DimensionMismatch("case offset outside its stratum")
        if len(names) != X.shape[1]:
            raise DimensionMismatch(f"{len(names)} names for {X.shape[1]} covariate columns")
        if not np.all(np.isfinite(X)):
            raise ValidationError("covariate values must be finite")
        self.X = X
        self.sizes = sizes
        self.starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        self.case_rows = self.starts + case_offsets
        self.stratum_of_row = np.repeat(np.arange(len(sizes)), sizes)
        self.names = list(names)
        # rows relative to their stratum's case: same likelihood, no cancellation
        self.D = X - X[self.case_rows][self.stratum_of_row]

    @classmethod
    def from_blocks(cls, blocks, names, case_offsets=None):
        """Build from a list of ``(rows, dim)`` arrays, case in row 0 unless given."""
        d = len(names)
        blocks = [np.asarray(b, dtype=float) for b in blocks]
        blocks = [b if b.ndim == 2 else b.reshape(-1, d) for b in blocks]
        if case_offsets is None:
            case_offsets = [0] * len(blocks)
        X = np.vstack(blocks) if blocks else np.empty((0, d))
        return cls(X, [len(b) for b in blocks], case_offsets, names)

    @property
    def n_strata(self) -> int:
        return len(self.sizes)

    @property
    def n_obs(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def select(self, columns) -> "EstimationProblem":
        """Sub-problem restricted to the given column indices or names."""
        idx = [self.names.index(c) if isinstance(c, str) else int(c) for c in columns]
        return EstimationProblem(
            self.X[:, idx], self.sizes, self.case_rows - self.starts, [self.names[k] for k in idx]
        )

    def stratum(self, m: int) -> tuple[np.ndarray, int]:
        s = self.starts[m]
        return self.X[s : s + self.sizes[m]], int(self.case_rows[m] - s)

    def constant_columns(self) -> list[str]:
        """Covariates that never vary inside any stratum (not identifiable)."""
        if self.dim == 0:
            return []
        hi = np.maximum.reduceat(self.X, self.starts, axis=0)
        lo = np.minimum.reduceat(self.X, self.starts, axis=0)
        flat = np.all(hi - lo == 0, axis=0)
        return [n for n, f in zip(self.names, flat) if f]

    def _check(self, beta):
        beta = np.asarray(beta, dtype=float).reshape(-1)
        if beta.shape[0] != self.dim:
            raise DimensionMismatch(f"beta has length {beta.shape[0]}, problem has {self.dim} covariates")
        if not np.all(np.isfinite(beta)):
            raise ValidationError("beta must be finite")
        return beta

    def _lse(self, eta):
        shift = np.maximum.reduceat(eta, self.starts)
        tot = np.add.reduceat(np.exp(eta - shift[self.stratum_of_row]), self.starts)
        return shift + np.log(tot)


def loglik(problem: EstimationProblem, beta) -> float:
    beta = problem._check(beta)
    return float(-problem._lse(problem.D @ beta).sum())


def _probabilities(problem, beta):
    eta = problem.D @ beta
    lse = problem._lse(eta)
    return lse, np.exp(eta - lse[problem.stratum_of_row])


def gradient(problem: EstimationProblem, beta) -> np.ndarray:
    """Score: sum over strata of x(case) minus the model expectation of x."""
    beta = problem._check(beta)
    _, p = _probabilities(problem, beta)
    return -(problem.D.T @ p)


def hessian(problem: EstimationProblem, beta) -> np.ndarray:
    """Minus the sum over strata of the model covariance of x."""
    beta = problem._check(beta)
    _, p = _probabilities(problem, beta)
    return _hessian_from(problem, p)


def _hessian_from(problem, p):
    D = problem.D
    mu = np.add.reduceat(D * p[:, None], problem.starts, axis=0)
    H = -(D.T @ (D * p[:, None]) - mu.T @ mu)
    return (H + H.T) / 2


def derivatives(problem: EstimationProblem, beta):
    """``(loglik, gradient, hessian)`` in one pass."""
    beta = problem._check(beta)
    lse, p = _probabilities(problem, beta)
    return float(-lse.sum()), -(problem.D.T @ p), _hessian_from(problem, p)
