"""Run configuration: INI file with one section per module, overridable by CLI flags."""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .covariates import CovariateSpec, parse_spec, parse_spec_file
from .errors import FormatError
from .history import DEFAULT_ORDER, ONE_WEEK

# config key -> (section, dataclass field, type)
_KEYS = {
    "events": ("data", "events", str),
    "attributes": ("data", "attributes", str),
    "output": ("data", "output", str),
    "half_life": ("decay", "half_life", float),
    "max_order": ("decay", "max_order", int),
    "k": ("sampler", "k", int),
    "seed": ("sampler", "seed", int),
    "replications": ("sampler", "replications", int),
    "exclude_sender": ("sampler", "exclude_sender", bool),
    "specs": ("covariates", "specs_file", str),
    "tol": ("estimator", "tol", float),
    "max_iter": ("estimator", "max_iter", int),
    "ridge": ("estimator", "ridge", float),
    "contrib": ("estimator", "contrib", bool),
    "threads": ("run", "threads", int),
}


@dataclass
class RunConfig:
    events: str | None = None
    attributes: str | None = None
    output: str = "."
    half_life: float = ONE_WEEK
    max_order: int = DEFAULT_ORDER
    k: int = 100
    seed: int = 0
    replications: int = 0
    exclude_sender: bool = True
    specs_file: str | None = None
    inline_specs: list[str] = field(default_factory=list)
    tol: float = 1e-8
    max_iter: int = 100
    ridge: float = 0.0
    contrib: bool = False
    threads: int = 1

    @classmethod
    def load(cls, path) -> "RunConfig":
        """Read an INI or TOML (``.toml``) file; relative paths resolve against its directory."""
        path = Path(path)
        sections = _read_toml(path) if path.suffix.lower() == ".toml" else _read_ini(path)
        known = {(sec, key) for key, (sec, _, _) in _KEYS.items()} | {("covariates", "list")}
        for section, items in sections.items():
            for key in items:
                if (section, key) not in known:
                    raise FormatError(f"{path}: unknown key [{section}] {key}")
        values = {}
        for key, (section, attr, typ) in _KEYS.items():
            if key in sections.get(section, {}):
                raw = sections[section][key]
                try:
                    values[attr] = _convert(raw, typ)
                except (KeyError, TypeError, ValueError):
                    raise FormatError(f"{path}: bad value for [{section}] {key}: {raw!r}") from None
        for attr in ("events", "attributes", "output", "specs_file"):
            if attr in values and not Path(values[attr]).is_absolute():
                values[attr] = str(path.parent / values[attr])
        listed = sections.get("covariates", {}).get("list")
        if listed is not None:
            lines = listed.splitlines() if isinstance(listed, str) else [str(x) for x in listed]
            values["inline_specs"] = [ln.strip() for ln in lines if ln.strip()]
        return cls(**values)

    def override(self, **kwargs) -> "RunConfig":
        names = {f.name for f in fields(self)}
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None and k in names})

    def specs(self) -> list[CovariateSpec]:
        specs = parse_spec_file(self.specs_file) if self.specs_file else []
        return specs + [parse_spec(s) for s in self.inline_specs]

    def sampling_hash(self) -> str:
        """Digest of everything that determines the sampled covariate file."""
        payload = {
            "events": _file_digest(self.events),
            "attributes": _file_digest(self.attributes),
            "specs": [s.to_line() for s in self.specs()],
            "half_life": self.half_life,
            "max_order": self.max_order,
            "k": self.k,
            "seed": self.seed,
            "exclude_sender": self.exclude_sender,
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_BOOLEANS = {"1": True, "yes": True, "true": True, "on": True, "0": False, "no": False, "false": False, "off": False}


def _convert(raw, typ):
    if isinstance(raw, bool):
        if typ is not bool:
            raise TypeError(raw)
        return raw
    if typ is bool:
        return _BOOLEANS[str(raw).strip().lower()]
    if isinstance(raw, (list, dict)) or (typ is int and isinstance(raw, float)):
        raise TypeError(raw)
    return typ(raw)


def _read_ini(path):
    parser = configparser.ConfigParser()
    try:
        with path.open(encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise FormatError(f"{path}: {exc}") from None
    return {sec: dict(parser[sec]) for sec in parser.sections()}


def _read_toml(path):
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None
    for sec, items in data.items():
        if not isinstance(items, dict):
            raise FormatError(f"{path}: top-level key {sec!r} must be a [section]")
    return data


def _file_digest(path):
    if not path:
        return None
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
