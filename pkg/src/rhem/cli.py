"""``rhem`` command-line interface.

Exit codes: 0 success, 2 validation errors, 3 numerical failures.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig
from .core import AttributeTable, RiskPolicy, parse_attributes, parse_events, stream_stats, write_attributes, write_events
from .covariates import evaluate_batch, parse_spec, validate_specs
from .errors import ConfigMismatch, FormatError, NumericalError, ValidationError
from .estimator import FitOptions, contribution_report, fit, resample_study
from .generator import GeneratorConfig, attributes_for, simulate
from .history import DecayConfig, HistoryState
from .sampler import SamplerConfig, iter_strata, read_sample_csv, strata_problem, write_sample_csv

log = logging.getLogger("rhem")


def _add_common(p, sampling=True):
    p.add_argument("--config", help="INI run configuration; flags override its keys")
    p.add_argument("--events", help="events.csv (TIME,SENDER,RECEIVERS)")
    p.add_argument("--attributes", help="attributes.csv (ACTOR,<name>:<kind>,...)")
    if sampling:
        p.add_argument("--specs", dest="specs_file", help="covariate spec file, one spec per line")
        p.add_argument("--cov", dest="inline_specs", action="append", help="extra covariate spec (repeatable)")
        p.add_argument("--half-life", dest="half_life", type=float)
        p.add_argument("--max-order", dest="max_order", type=int)
        p.add_argument("--k", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--allow-loops", dest="allow_loops", action="store_true",
                       help="let senders address themselves")
    p.add_argument("--threads", type=int)


def _add_fit(p):
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--ridge", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rhem", description="Relational hyperevent models")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="receiver-set size histogram")
    _add_common(p, sampling=False)
    p.add_argument("--out")

    p = sub.add_parser("covariates", help="covariates of observed events (and optional controls)")
    _add_common(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sample", help="case-control sample with covariates")
    _add_common(p)
    p.add_argument("--replications", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("estimate", help="fit the model and print a results table")
    _add_common(p)
    _add_fit(p)
    p.add_argument("--sample", help="sampled-covariate CSV; sampled on the fly when omitted")
    p.add_argument("--contrib", action="store_true", default=None)
    p.add_argument("--replications", type=int)
    p.add_argument("--out", help="output prefix for .txt/.csv tables")

    p = sub.add_parser("contrib", help="per-covariate log-likelihood contributions")
    _add_common(p)
    _add_fit(p)
    p.add_argument("--sample")
    p.add_argument("--out")

    p = sub.add_parser("resample", help="quantiles of estimates over repeated sampling")
    _add_common(p)
    _add_fit(p)
    p.add_argument("--replications", type=int)
    p.add_argument("--out")

    p = sub.add_parser("simulate", help="simulate a stream from known coefficients")
    p.add_argument("--actors", type=int, required=True)
    p.add_argument("--events", type=int, required=True)
    p.add_argument("--beta", required=True, help="file with lines '<spec> <coefficient>'")
    p.add_argument("--size-dist", dest="size_dist", help="file with lines '<size> <probability>'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--half-life", dest="half_life", type=float, default=250.0)
    p.add_argument("--rate", type=float, default=1.0)
    p.add_argument("--max-order", dest="max_order", type=int, default=4)
    p.add_argument("--out", default="events.csv")
    p.add_argument("--attributes-out", dest="attributes_out")

    p = sub.add_parser("run", help="sample, estimate and write every report into the output directory")
    _add_common(p)
    _add_fit(p)
    p.add_argument("--replications", type=int)
    p.add_argument("--contrib", action="store_true", default=None)
    p.add_argument("--output")
    return parser


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    opts = {k: v for k, v in vars(args).items() if k not in ("config", "inline_specs")}
    if getattr(args, "allow_loops", False):
        opts["exclude_sender"] = False
    cfg = cfg.override(**opts)
    if getattr(args, "inline_specs", None):
        cfg.inline_specs = cfg.inline_specs + args.inline_specs
    return cfg


def _load(cfg: RunConfig):
    if not cfg.events:
        raise ValidationError("no events file given (--events or [data] events)")
    attrs = parse_attributes(cfg.attributes) if cfg.attributes else None
    actors = attrs.actors if attrs is not None and len(attrs.actors) else None
    stream = parse_events(cfg.events, actors, RiskPolicy(exclude_sender=cfg.exclude_sender))
    if attrs is not None and not len(attrs.actors):
        attrs = None
    return stream, attrs


def _meta(cfg: RunConfig, seed=None) -> dict:
    seed = cfg.seed if seed is None else seed
    return {"seed": seed, "config": cfg.override(seed=seed).sampling_hash()}


def _fit_options(cfg):
    return FitOptions(tol=cfg.tol, max_iter=cfg.max_iter, ridge=cfg.ridge)


def _write(path, text):
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    print(text)


def _problem(args, cfg):
    """Estimation problem from ``--sample`` or by sampling the event stream."""
    if getattr(args, "sample", None):
        problem, meta = read_sample_csv(args.sample)
        if meta.get("config") and cfg.events:
            expected = cfg.sampling_hash()
            if meta["config"] != expected:
                raise ConfigMismatch(
                    f"{args.sample} was produced with config {meta['config']}, current config is {expected}"
                )
        seed = int(meta["seed"]) if "seed" in meta else None
        return problem, seed, meta.get("config")
    stream, attrs = _load(cfg)
    specs = cfg.specs()
    strata = list(iter_strata(stream, SamplerConfig(cfg.k, cfg.seed, stream.policy), specs, attrs,
                              DecayConfig(cfg.half_life), cfg.max_order))
    return strata_problem(strata, [s.name for s in specs]), cfg.seed, cfg.sampling_hash()


def cmd_stats(args, cfg):
    stream, _ = _load(cfg)
    _write(args.out, stream_stats(stream).format_table())


def cmd_covariates(args, cfg):
    stream, attrs = _load(cfg)
    specs = cfg.specs()
    validate_specs(specs, attrs, cfg.max_order)
    names = [s.name for s in specs]
    k = cfg.k if args.k is not None else 0
    with Path(args.out).open("w", newline="", encoding="utf-8") as fh:
        fh.write("# " + " ".join(f"{a}={b}" for a, b in _meta(cfg).items()) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["EVENT_INDEX", "IS_CASE", *names])
        if k > 0:
            for s in iter_strata(stream, SamplerConfig(k, cfg.seed, stream.policy), specs, attrs,
                                 DecayConfig(cfg.half_life), cfg.max_order):
                for r, row in enumerate(s.covariates):
                    w.writerow([s.index, int(r == 0), *(format(v, ".17g") for v in row)])
        else:
            state = HistoryState(DecayConfig(cfg.half_life), cfg.max_order)
            for ev in stream:
                row = evaluate_batch(specs, ev.sender, np.array([ev.receivers]), ev.time, attrs, state)[0]
                w.writerow([ev.index, 1, *(format(v, ".17g") for v in row)])
                state.advance(ev)


def cmd_sample(args, cfg):
    stream, attrs = _load(cfg)
    specs = cfg.specs()
    names = [s.name for s in specs]
    reps = max(cfg.replications, 1)
    out = Path(args.out)
    for r in range(reps):
        seed = cfg.seed + r
        path = out if reps == 1 else out.with_name(f"{out.stem}_r{r}{out.suffix}")
        strata = iter_strata(stream, SamplerConfig(cfg.k, seed, stream.policy), specs, attrs,
                             DecayConfig(cfg.half_life), cfg.max_order)
        write_sample_csv(path, strata, stream, names, _meta(cfg, seed))
        log.info("wrote %s", path)


def _estimate_tables(result, seed, config_hash):
    header = f"# seed={seed} config={config_hash}"
    lines = ["NAME,ESTIMATE,SE,Z,P"]
    for name, b, s, z, p in result.table():
        lines.append(",".join([name] + [format(float(v), ".10g") for v in (b, s, z, p)]))
    footer = [
        f"# loglik={result.loglik:.6f} loglik_null={result.loglik_null:.6f}",
        f"# AIC={result.aic:.2f} BIC={result.bic:.2f}",
        f"# events={result.n_events} obs={result.n_obs} converged={result.converged} iterations={result.iterations}",
    ]
    return header + "\n" + result.summary(), "\n".join([header, *lines, *footer])


def cmd_estimate(args, cfg):
    problem, seed, chash = _problem(args, cfg)
    result = fit(problem, _fit_options(cfg))
    result.seed = seed
    text, table = _estimate_tables(result, seed, chash)
    prefix = args.out
    if prefix:
        Path(prefix + ".csv").write_text(table + "\n", encoding="utf-8")
    _write(prefix + ".txt" if prefix else None, text)
    if cfg.contrib:
        rep = contribution_report(problem, _fit_options(cfg), full=result)
        _write(prefix + "_contrib.txt" if prefix else None, f"# seed={seed} config={chash}\n" + rep.format_table())
    if cfg.replications and cfg.replications >= 2:
        _resample(cfg, prefix + "_resample.txt" if prefix else None)
    if not result.converged:
        return 3
    return 0


def cmd_contrib(args, cfg):
    problem, seed, chash = _problem(args, cfg)
    rep = contribution_report(problem, _fit_options(cfg))
    _write(args.out, f"# seed={seed} config={chash}\n" + rep.format_table())


def _resample(cfg, out):
    stream, attrs = _load(cfg)
    study = resample_study(
        stream, cfg.specs(), attrs, SamplerConfig(cfg.k, cfg.seed, stream.policy),
        replications=cfg.replications, decay=DecayConfig(cfg.half_life), max_order=cfg.max_order,
        options=_fit_options(cfg), threads=cfg.threads,
    )
    _write(out, f"# seed={cfg.seed} config={cfg.sampling_hash()}\n" + study.format_table())
    return study


def cmd_resample(args, cfg):
    if cfg.replications < 2:
        raise ValidationError("resample needs --replications >= 2")
    _resample(cfg, args.out)


def _read_pairs(path, key=str, value=float):
    pairs = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace("=", " ").split()
        if len(parts) != 2:
            raise FormatError(f"{path}: expected '<key> <value>', got {raw!r}")
        try:
            pairs.append((key(parts[0]), value(parts[1])))
        except ValueError:
            raise FormatError(f"{path}: bad line {raw!r}") from None
    return pairs


def cmd_simulate(args, cfg):
    beta = _read_pairs(args.beta, parse_spec, float)
    sizes = dict(_read_pairs(args.size_dist, int, float)) if args.size_dist else {1: 1.0}
    gen = GeneratorConfig(
        n_actors=args.actors, n_events=args.events, specs=[s for s, _ in beta], beta=[b for _, b in beta],
        size_dist=sizes, decay=DecayConfig(args.half_life), rate=args.rate, seed=args.seed,
        max_order=args.max_order,
    )
    stream = simulate(gen)
    write_events(stream, args.out)
    attrs = attributes_for(gen)
    if attrs is not None:
        path = args.attributes_out or str(Path(args.out).with_name("attributes.csv"))
        write_attributes(attrs, path)
    print(f"wrote {len(stream)} events to {args.out}")


def cmd_run(args, cfg):
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    stream, attrs = _load(cfg)
    specs = cfg.specs()
    names = [s.name for s in specs]
    chash = cfg.sampling_hash()
    _write(str(out / "stats.txt"), stream_stats(stream).format_table())
    strata = list(iter_strata(stream, SamplerConfig(cfg.k, cfg.seed, stream.policy), specs, attrs,
                              DecayConfig(cfg.half_life), cfg.max_order))
    write_sample_csv(out / "sample.csv", strata, stream, names, _meta(cfg))
    problem = strata_problem(strata, names)
    result = fit(problem, _fit_options(cfg))
    result.seed = cfg.seed
    text, table = _estimate_tables(result, cfg.seed, chash)
    (out / "estimates.csv").write_text(table + "\n", encoding="utf-8")
    _write(str(out / "estimates.txt"), text)
    if cfg.contrib:
        rep = contribution_report(problem, _fit_options(cfg), full=result)
        _write(str(out / "contrib.txt"), f"# seed={cfg.seed} config={chash}\n" + rep.format_table())
    if cfg.replications >= 2:
        _resample(cfg, str(out / "resample.txt"))
    return 0 if result.converged else 3


COMMANDS = {
    "stats": cmd_stats,
    "covariates": cmd_covariates,
    "sample": cmd_sample,
    "estimate": cmd_estimate,
    "contrib": cmd_contrib,
    "resample": cmd_resample,
    "simulate": cmd_simulate,
    "run": cmd_run,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = _config(args) if args.command != "simulate" else None
        status = COMMANDS[args.command](args, cfg)
    except (ValidationError, OSError, ValueError) as exc:
        print(f"rhem: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"rhem: numerical failure: {exc}", file=sys.stderr)
        return 3
    return status or 0


if __name__ == "__main__":
    sys.exit(main())
