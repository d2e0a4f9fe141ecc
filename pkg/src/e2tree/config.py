"""Run configuration: an INI file with one section per stage.

Example::

    [data]
    path = ../src/e2tree/data/iris.csv
    response = Petal.Length
    columns = Sepal.Width:numeric, Sepal.Length:numeric, Petal.Width:numeric, Species:categorical
    fraction = 0.7
    seed = 210

    [forest]
    n_trees = 500
    mtry = 1

    [e2tree]
    gamma = 0.05

    [output]
    dir = ../out/iris

Relative paths resolve against the config file's directory. Any key can be
overridden with ``section.key=value`` strings (command line beats file beats
defaults).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .cooccurrence import NormalizationMode
from .dataset import KINDS
from .forest import ForestConfig
from .surrogate import COMMON_ANCESTOR, TERMINAL, StopConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    path: Path
    response: str
    columns: dict[str, str]
    fraction: float = 0.7
    seed: int = 0
    train_size: int | None = None
    rounding: str = "half_up"


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig
    forest: ForestConfig = field(default_factory=ForestConfig)
    stop: StopConfig = field(default_factory=StopConfig)
    normalization: NormalizationMode = NormalizationMode.JACOBSON_RANGE
    surrogate_normalization: NormalizationMode = NormalizationMode.JACOBSON_RANGE
    node_source: str = "in_bag"
    ohat_rule: str = TERMINAL
    k: int | None = None
    out_dir: Path = Path("out")
    n_jobs: int = 1


def _parse_columns(text: str) -> dict[str, str]:
    cols = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        name, sep, kind = item.rpartition(":")
        if not sep or kind.strip() not in KINDS:
            raise ConfigError(f"bad column declaration {item!r} (want name:numeric|categorical)")
        cols[name.strip()] = kind.strip()
    return cols


def _opt_int(text: str | None) -> int | None:
    if text is None or text.strip().lower() in ("", "none", "auto"):
        return None
    return int(text)


def load_config(path=None, overrides=()) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    cp.optionxform = str
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"no such config file: {path}")
        cp.read(path, encoding="utf-8")
        base = path.resolve().parent
    for ov in overrides:
        key, sep, value = ov.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {ov!r} must look like section.key=value")
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, name, value.strip())

    def get(section, key, default=None):
        return cp.get(section, key, fallback=default)

    try:
        if get("data", "path") is None or get("data", "response") is None:
            raise ConfigError("[data] needs 'path' and 'response'")
        data = DataConfig(
            path=(base / get("data", "path")).resolve(),
            response=get("data", "response"),
            columns=_parse_columns(get("data", "columns", "")),
            fraction=float(get("data", "fraction", "0.7")),
            seed=int(get("data", "seed", "0")),
            train_size=_opt_int(get("data", "train_size")),
            rounding=get("data", "rounding", "half_up"),
        )
        if not data.columns:
            raise ConfigError("[data] columns is empty")
        forest = ForestConfig(
            n_trees=int(get("forest", "n_trees", "500")),
            mtry=_opt_int(get("forest", "mtry")),
            min_leaf=int(get("forest", "min_leaf", "5")),
            seed=int(get("forest", "seed", "0")),
        )
        stop = StopConfig(
            gamma=float(get("e2tree", "gamma", "0.05")),
            alpha=float(get("e2tree", "alpha", "0.05")),
            min_node=int(get("e2tree", "min_node", "5")),
            max_depth=int(get("e2tree", "max_depth", "10")),
            objective=get("e2tree", "objective", "within"),
        )
        ohat_rule = get("e2tree", "ohat", TERMINAL)
        if ohat_rule not in (TERMINAL, COMMON_ANCESTOR):
            raise ConfigError(f"unknown ohat rule {ohat_rule!r}")
        node_source = get("forest", "node_source", "in_bag")
        if node_source not in ("in_bag", "all"):
            raise ConfigError(f"unknown node_source {node_source!r}")
        cfg = RunConfig(
            data=data,
            forest=forest,
            stop=stop,
            normalization=NormalizationMode(get("forest", "normalization", "jacobson_range")),
            surrogate_normalization=NormalizationMode(get("e2tree", "normalization", "jacobson_range")),
            node_source=node_source,
            ohat_rule=ohat_rule,
            k=_opt_int(get("fidelity", "k")),
            out_dir=(base / get("output", "dir", "out")).resolve(),
            n_jobs=int(get("run", "n_jobs", "1")),
        )
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from e
    if cfg.k is not None and cfg.k < 1:
        raise ConfigError("[fidelity] k must be >= 1")
    return cfg


def with_out_dir(cfg: RunConfig, out_dir) -> RunConfig:
    return replace(cfg, out_dir=Path(out_dir).resolve())


def as_dict(cfg: RunConfig) -> dict:
    def conv(v):
        if isinstance(v, Path):
            return str(v)
        if hasattr(v, "__dataclass_fields__"):
            return {f.name: conv(getattr(v, f.name)) for f in fields(v)}
        if isinstance(v, NormalizationMode):
            return v.value
        return v

    return conv(cfg)
