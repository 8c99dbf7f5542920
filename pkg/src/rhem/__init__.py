"""Relational hyperevent models for multicast interaction streams."""
from .core import (
    ActorIndex,
    AttributeTable,
    EventStream,
    Hyperevent,
    RiskPolicy,
    SizeHistogram,
    parse_attributes,
    parse_events,
    stream_stats,
    write_attributes,
    write_events,
)
from .covariates import CovariateSpec, evaluate, evaluate_batch, parse_spec, parse_spec_file
from .estimator import (
    EstimationResult,
    FitOptions,
    contribution_report,
    fit,
    full_risk_set_problem,
    resample_study,
)
from .generator import GeneratorConfig, simulate
from .history import DecayConfig, HistoryState, HistoryView
from .problem import EstimationProblem, gradient, hessian, loglik
from .sampler import SampledStratum, SamplerConfig, sample_stratum, sample_stream

__version__ = "0.1.0"
