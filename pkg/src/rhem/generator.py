"""Synthetic hyperevent streams from known coefficients.

Senders and receiver-set sizes are drawn from exogenous distributions; the
receiver set is then drawn with probability proportional to
``exp(beta'x_t(i, J))`` among all eligible sets of that size.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Mapping, Sequence

import numpy as np

from .core import ActorIndex, AttributeTable, EventStream, Hyperevent, RiskPolicy
from .covariates import ATTRIBUTE_KINDS, CovariateSpec, evaluate_batch, validate_specs
from .errors import InfeasibleSize
from .history import DEFAULT_ORDER, DecayConfig, HistoryState
from .sampler import combination_table

ENUMERATION_LIMIT = 10_000


def actor_labels(n: int) -> list[str]:
    width = len(str(max(n - 1, 0)))
    return [f"a{k:0{width}d}" for k in range(n)]


def random_binary_attributes(n_actors: int, names: Sequence[str], seed: int = 0) -> AttributeTable:
    """Independent fair-coin 0/1 attributes for every actor."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xA77]))
    numeric = {name: rng.integers(0, 2, size=n_actors).astype(float) for name in names}
    return AttributeTable(ActorIndex(actor_labels(n_actors)), numeric)


@dataclass
class GeneratorConfig:
    n_actors: int
    n_events: int
    specs: Sequence[CovariateSpec]
    beta: Sequence[float]
    size_dist: Mapping[int, float] = field(default_factory=lambda: {1: 1.0})
    decay: DecayConfig = DecayConfig(50.0)
    rate: float = 1.0
    seed: int = 0
    attributes: AttributeTable | None = None
    max_order: int = DEFAULT_ORDER
    policy: RiskPolicy = RiskPolicy()
    proposals: int = 2000

    def __post_init__(self):
        if len(self.beta) != len(self.specs):
            raise ValueError("one coefficient per covariate spec is required")
        sizes = np.array(list(self.size_dist), dtype=int)
        probs = np.array(list(self.size_dist.values()), dtype=float)
        if np.any(sizes < 1) or np.any(sizes >= self.n_actors):
            raise InfeasibleSize("receiver sizes must lie in [1, n_actors)")
        if np.any(probs < 0) or not np.isclose(probs.sum(), 1.0):
            raise ValueError("size probabilities must be nonnegative and sum to 1")
        if self.rate <= 0:
            raise ValueError("rate must be positive")


def attributes_for(cfg: GeneratorConfig) -> AttributeTable | None:
    """The config's attribute table, or random binary ones if specs need them."""
    if cfg.attributes is not None:
        return cfg.attributes
    names = sorted({s.attribute for s in cfg.specs if s.kind in ATTRIBUTE_KINDS})
    if not names:
        return None
    return random_binary_attributes(cfg.n_actors, names, cfg.seed)


def _choose(rng, logits):
    w = np.exp(logits - logits.max())
    return int(rng.choice(len(w), p=w / w.sum()))


def simulate(cfg: GeneratorConfig) -> EventStream:
    """Simulate ``cfg.n_events`` hyperevents.

    Receiver sets are drawn exactly when the risk set has at most 10^4
    members and by importance resampling from ``cfg.proposals`` uniform
    proposals otherwise.
    """
    attrs = attributes_for(cfg)
    validate_specs(cfg.specs, attrs, cfg.max_order)
    actors = attrs.actors if attrs is not None and len(attrs.actors) else ActorIndex(actor_labels(cfg.n_actors))
    rng = np.random.default_rng(cfg.seed)
    beta = np.asarray(cfg.beta, dtype=float)
    sizes = np.array(list(cfg.size_dist), dtype=int)
    probs = np.array(list(cfg.size_dist.values()), dtype=float)
    probs = probs / probs.sum()
    state = HistoryState(cfg.decay, cfg.max_order)
    events = []
    t = 0.0
    for m in range(cfg.n_events):
        t += rng.exponential(1.0 / cfg.rate)
        sender = int(rng.integers(cfg.n_actors))
        L = int(rng.choice(sizes, p=probs))
        universe = cfg.policy.universe(sender, cfg.n_actors)
        N = len(universe)
        if L > N:
            raise InfeasibleSize(f"event {m}: size {L} exceeds the {N} eligible receivers")
        if comb(N, L) <= ENUMERATION_LIMIT:
            cands = universe[combination_table(N, L)]
        else:
            keys = rng.random((cfg.proposals, N)).argsort(axis=1)[:, :L]
            cands = np.sort(universe[keys], axis=1)
        X = evaluate_batch(cfg.specs, sender, cands, t, attrs, state)
        pick = _choose(rng, X @ beta) if len(beta) else int(rng.integers(len(cands)))
        ev = Hyperevent(t, sender, tuple(int(a) for a in cands[pick]), m)
        state.advance(ev)
        events.append(ev)
    return EventStream(tuple(events), actors, cfg.policy)
