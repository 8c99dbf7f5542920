"""Maximum partial likelihood estimation and derived reports."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from math import comb
from typing import Sequence

import numpy as np

from .core import AttributeTable, EventStream
from .covariates import CovariateSpec, evaluate_batch, validate_specs
from .errors import (
    MaxIterations,
    NonIdentifiable,
    NumericalError,
    RHEMError,
    RiskSetTooLarge,
    Separation,
    SingularInformation,
)
from .history import DEFAULT_ORDER, DecayConfig, HistoryState
from .problem import EstimationProblem, derivatives, gradient, hessian, loglik
from .sampler import SamplerConfig, combination_table, iter_strata, strata_problem

__all__ = [
    "EstimationProblem",
    "EstimationResult",
    "FitOptions",
    "loglik",
    "gradient",
    "hessian",
    "fit",
    "full_risk_set_problem",
    "contribution_report",
    "resample_study",
]

QUANTILE_PROBS = (0.0, 0.025, 0.5, 0.975, 1.0)
SEPARATION_BOUND = 50.0
RISK_SET_LIMIT = 10_000


@dataclass(frozen=True)
class FitOptions:
    tol: float = 1e-8
    max_iter: int = 100
    ridge: float = 0.0
    rel_tol: float = 1e-10
    max_halvings: int = 30


@dataclass
class EstimationResult:
    names: list[str]
    coef: np.ndarray
    se: np.ndarray
    loglik: float
    loglik_null: float
    n_events: int
    n_obs: int
    iterations: int
    converged: bool
    ridge: float = 0.0
    information: np.ndarray | None = field(default=None, repr=False)
    seed: int | None = None

    @property
    def dim(self) -> int:
        return len(self.coef)

    @property
    def z(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coef / self.se

    @property
    def p(self) -> np.ndarray:
        return np.array([math.erfc(abs(z) / math.sqrt(2)) for z in self.z])

    @property
    def aic(self) -> float:
        return 2 * self.dim - 2 * self.loglik

    @property
    def bic(self) -> float:
        return self.dim * math.log(self.n_events) - 2 * self.loglik

    def table(self) -> list[tuple[str, float, float, float, float]]:
        return list(zip(self.names, self.coef, self.se, self.z, self.p))

    def summary(self) -> str:
        """Coefficient table with significance stars and a fit footer."""
        width = max([len(n) for n in self.names] + [12])
        lines = [f"{'':<{width}}  estimate (se)"]
        for name, b, s, _, p in self.table():
            lines.append(f"{name:<{width}}  {b:.2f} ({s:.2f}){_stars(p)}")
        lines += [
            "-" * (width + 24),
            f"{'AIC':<{width}}  {self.aic:.2f}",
            f"{'BIC':<{width}}  {self.bic:.2f}",
            f"{'Log likelihood':<{width}}  {self.loglik:.2f}",
            f"{'Num. events':<{width}}  {self.n_events:,}",
            f"{'Num. obs.':<{width}}  {self.n_obs:,}",
            f"{'Converged':<{width}}  {self.converged} ({self.iterations} iterations)",
        ]
        if self.ridge:
            lines.append(f"{'Ridge':<{width}}  {self.ridge:g}")
        if self.seed is not None:
            lines.append(f"{'Seed':<{width}}  {self.seed}")
        lines.append("***p<0.001, **p<0.01, *p<0.05")
        return "\n".join(lines)


def _stars(p):
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def _solve(info, g, ridge):
    """Solve ``info @ x = g``; falls back to a small ridge if not positive definite."""
    d = len(g)
    try:
        L = np.linalg.cholesky(info + ridge * np.eye(d))
        return np.linalg.solve(L.T, np.linalg.solve(L, g)), ridge
    except np.linalg.LinAlgError:
        pass
    fallback = max(ridge, 1e-8)
    for _ in range(8):
        try:
            L = np.linalg.cholesky(info + fallback * np.eye(d))
            return np.linalg.solve(L.T, np.linalg.solve(L, g)), fallback
        except np.linalg.LinAlgError:
            fallback *= 100
    raise SingularInformation("information matrix is singular even with ridge regularization")


def fit(problem: EstimationProblem, options: FitOptions = FitOptions(), beta0=None) -> EstimationResult:
    """Newton-Raphson with step halving on the log partial likelihood.

    Raises
    ------
    NonIdentifiable
        Some covariate is constant within every stratum.
    Separation
        A coefficient runs past +-50 (the likelihood has no finite maximum).
    MaxIterations
        No convergence within ``options.max_iter`` iterations; the partial
        result is attached as ``.result``.
    """
    flat = problem.constant_columns()
    if flat:
        raise NonIdentifiable(
            f"covariates {flat} are constant within every stratum; their effect is absorbed "
            "by the baseline rate and cannot be estimated"
        )
    d = problem.dim
    beta = np.zeros(d) if beta0 is None else np.asarray(beta0, dtype=float).copy()
    ll_null = loglik(problem, np.zeros(d))
    ll, g, H = derivatives(problem, beta)
    ridge_used = options.ridge
    converged = False
    it = 0
    while it < options.max_iter:
        it += 1
        step, r = _solve(-H, g, options.ridge)
        ridge_used = max(ridge_used, r)
        scale = 1.0
        for _ in range(options.max_halvings + 1):
            cand = beta + scale * step
            ll_new = loglik(problem, cand)
            if ll_new >= ll - 1e-12 * abs(ll):
                break
            scale /= 2
        else:
            # no ascent possible along the Newton direction: numerically at the optimum
            converged = bool(np.max(np.abs(g), initial=0.0) < max(options.tol, 1e-6))
            break
        moved = scale * step
        change = abs(ll_new - ll)
        beta = cand
        ll, g, H = derivatives(problem, beta)
        if np.any(np.abs(beta) > SEPARATION_BOUND):
            bad = [problem.names[j] for j in np.flatnonzero(np.abs(beta) > SEPARATION_BOUND)]
            raise Separation(
                f"coefficients {bad} diverge (|beta| > {SEPARATION_BOUND:g}); the data are separated",
                result=_result(problem, beta, ll, ll_null, H, it, False, ridge_used),
            )
        small_grad = np.max(np.abs(g), initial=0.0) < options.tol
        small_step = np.max(np.abs(moved), initial=0.0) < 1e-4
        if small_step and (small_grad or change <= options.rel_tol * abs(ll)):
            converged = True
            break

    result = _result(problem, beta, ll, ll_null, H, it, converged, ridge_used)
    if not converged:
        raise MaxIterations(f"no convergence after {it} iterations", result=result)
    return result


def _result(problem, beta, ll, ll_null, H, it, converged, ridge):
    info = -H
    d = len(beta)
    try:
        cov = np.linalg.inv(info + ridge * np.eye(d))
        se = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        se = np.full(d, np.nan)
    return EstimationResult(
        names=list(problem.names),
        coef=beta.copy(),
        se=se,
        loglik=ll,
        loglik_null=ll_null,
        n_events=problem.n_strata,
        n_obs=problem.n_obs,
        iterations=it,
        converged=converged,
        ridge=ridge,
        information=info,
    )


def full_risk_set_problem(
    stream: EventStream,
    specs: Sequence[CovariateSpec],
    attrs: AttributeTable | None = None,
    decay: DecayConfig = DecayConfig(),
    max_order: int = DEFAULT_ORDER,
    limit: int = RISK_SET_LIMIT,
) -> EstimationProblem:
    """One stratum per event holding every same-size receiver set.

    Rows follow lexicographic order of the eligible universe; the case sits
    at its own position.
    """
    validate_specs(specs, attrs, max_order)
    n = stream.n_actors
    for ev in stream:
        size = comb(len(stream.policy.universe(ev.sender, n)), ev.size)
        if size > limit:
            raise RiskSetTooLarge(f"event {ev.index}: risk set has {size} receiver sets (limit {limit})")
    state = HistoryState(decay, max_order)
    blocks, cases = [], []
    for ev in stream:
        universe = stream.policy.universe(ev.sender, n)
        table = universe[combination_table(len(universe), ev.size)]
        blocks.append(evaluate_batch(specs, ev.sender, table, ev.time, attrs, state))
        cases.append(int(np.flatnonzero((table == np.array(ev.receivers)).all(axis=1))[0]))
        state.advance(ev)
    return EstimationProblem.from_blocks(blocks, [s.name for s in specs], cases)


@dataclass
class ContributionReport:
    names: list[str]
    over_null: np.ndarray
    in_full: np.ndarray
    loglik_null: float
    loglik_full: float

    def rows(self, sort: bool = True):
        rows = list(zip(self.names, self.over_null, self.in_full))
        if sort:
            rows.sort(key=lambda r: -r[1])
        return rows

    def format_table(self) -> str:
        width = max([len(n) for n in self.names] + [10])
        lines = [f"{'':<{width}}  {'over null model':>16}  {'in full model':>14}"]
        for name, a, b in self.rows():
            lines.append(f"{name:<{width}}  {a:>16.2f}  {b:>14.2f}")
        return "\n".join(lines)


def contribution_report(problem: EstimationProblem, options: FitOptions = FitOptions(), full: EstimationResult | None = None) -> ContributionReport:
    """Log-likelihood gain of each covariate alone over the null model and
    of the full model over the model without that covariate."""
    if full is None:
        full = fit(problem, options)
    d = problem.dim
    ll_null = loglik(problem, np.zeros(d))
    over_null = np.empty(d)
    in_full = np.empty(d)
    for j in range(d):
        over_null[j] = fit(problem.select([j]), options).loglik - ll_null
        rest = [c for c in range(d) if c != j]
        ll_drop = fit(problem.select(rest), options).loglik if rest else ll_null
        in_full[j] = full.loglik - ll_drop
    return ContributionReport(list(problem.names), over_null, in_full, ll_null, full.loglik)


@dataclass
class ResampleStudy:
    names: list[str]
    seeds: list[int]
    estimates: np.ndarray          # (successful replications, dim)
    failures: list[tuple[int, str]]
    probs: tuple[float, ...] = QUANTILE_PROBS

    @property
    def quantiles(self) -> np.ndarray:
        """``(dim, len(probs))`` quantiles of each coefficient over replications."""
        if len(self.estimates) == 0:
            return np.full((len(self.names), len(self.probs)), np.nan)
        return np.quantile(self.estimates, self.probs, axis=0).T

    def format_table(self) -> str:
        width = max([len(n) for n in self.names] + [10])
        head = "".join(f"{p * 100:>9g}%" for p in self.probs)
        lines = [f"{'':<{width}}{head}"]
        for name, q in zip(self.names, self.quantiles):
            lines.append(f"{name:<{width}}" + "".join(f"{v:>10.3f}" for v in q))
        lines.append(f"replications: {len(self.estimates)} ok, {len(self.failures)} failed")
        for seed, msg in self.failures:
            lines.append(f"  seed {seed}: {msg}")
        return "\n".join(lines)


def _one_replication(args):
    stream, specs, attrs, cfg, decay, max_order, options = args
    strata = list(iter_strata(stream, cfg, specs, attrs, decay, max_order))
    return fit(strata_problem(strata, [s.name for s in specs]), options).coef


def resample_study(
    stream: EventStream,
    specs: Sequence[CovariateSpec],
    attrs: AttributeTable | None,
    cfg: SamplerConfig,
    replications: int | None = None,
    decay: DecayConfig = DecayConfig(),
    max_order: int = DEFAULT_ORDER,
    options: FitOptions = FitOptions(),
    seeds: Sequence[int] | None = None,
    threads: int = 1,
) -> ResampleStudy:
    """Refit on independently sampled control sets (seeds ``seed .. seed+R-1``).

    Replications whose fit fails are recorded in ``failures`` and skipped.
    """
    if seeds is None:
        if replications is None or replications < 2:
            raise ValueError("at least two replications are required")
        seeds = [cfg.seed + r for r in range(replications)]
    elif len(seeds) < 2:
        raise ValueError("at least two replications are required")
    seeds = [int(s) for s in seeds]
    jobs = [
        (stream, specs, attrs, SamplerConfig(cfg.k, s, cfg.policy), decay, max_order, options) for s in seeds
    ]
    outcomes = []
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_one_replication, job) for job in jobs]
            for f in futures:
                try:
                    outcomes.append(f.result())
                except RHEMError as exc:
                    outcomes.append(exc)
    else:
        for job in jobs:
            try:
                outcomes.append(_one_replication(job))
            except RHEMError as exc:
                outcomes.append(exc)
    estimates, failures = [], []
    for seed, out in zip(seeds, outcomes):
        if isinstance(out, Exception):
            failures.append((seed, f"{type(out).__name__}: {out}"))
            warnings.warn(f"replication with seed {seed} failed: {out}", RuntimeWarning, stacklevel=2)
        else:
            estimates.append(out)
    est = np.array(estimates).reshape(len(estimates), len(specs))
    return ResampleStudy([s.name for s in specs], seeds, est, failures)
