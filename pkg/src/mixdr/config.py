"""Experiment configuration: model specs, training specs and data sources.

A model spec is a plain dict (JSON friendly)::

    {"family": "normal", "n_components": 2,
     "params": {"loc": [{"type": "intercept"}, {"type": "linear", "features": "all"}],
                "scale": [{"type": "intercept"}]},
     "transforms": {"scale": "softplus"},
     "gating": {"terms": [{"type": "intercept"}], "transform": "softmax"},
     "xi": 0.0, "rho": 0.0}

``components`` (a list of per-component ``{"family", "params", "transforms"}``)
may replace ``family``/``n_components`` for heterogeneous mixtures. Features are
given as 0-based indices, column names (``x1``...) or ``"all"``.
"""

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .distributions import get_family
from .exceptions import ConfigError
from .mixture import Component, MixtureModel
from .optim import CLRConfig, TrainConfig
from .predictors import term_from_dict

PACKAGE_CONFIGS = Path(__file__).parent / "configs"


def feature_names(p):
    return [f"x{j + 1}" for j in range(p)]


def _resolve_feature(f, names):
    if isinstance(f, (int, np.integer)):
        if not 0 <= f < len(names):
            raise ConfigError(f"feature index {f} out of range for {len(names)} features")
        return int(f)
    if f in names:
        return names.index(f)
    raise ConfigError(f"unknown feature {f!r}; available: {names}")


def resolve_term(spec, names):
    spec = dict(spec)
    if "features" in spec:
        feats = spec["features"]
        if feats == "all":
            spec["features"] = list(range(len(names)))
        else:
            spec["features"] = [_resolve_feature(f, names) for f in feats]
    if "feature" in spec:
        spec["feature"] = _resolve_feature(spec["feature"], names)
    if spec.get("type") == "spline" and spec.get("features") is not None:
        raise ConfigError("spline terms take a single 'feature'")
    return term_from_dict(spec)


def _default_params(family):
    fam = get_family(family)
    out = {}
    for k, name in enumerate(fam.param_names):
        if k == 0:
            out[name] = [{"type": "intercept"}, {"type": "linear", "features": "all"}]
        else:
            out[name] = [{"type": "intercept"}]
    return out


def _expand_components(spec):
    if "components" in spec:
        comps = spec["components"]
        if not isinstance(comps, list) or not comps:
            raise ConfigError("model.components must be a non-empty list")
        return comps
    if "family" not in spec:
        raise ConfigError("model needs 'family' or 'components'")
    n = spec.get("n_components", 1)
    if not isinstance(n, int) or n < 1:
        raise ConfigError("model.n_components must be a positive integer")
    base = {"family": spec["family"], "params": spec.get("params"),
            "transforms": spec.get("transforms")}
    return [copy.deepcopy(base) for _ in range(n)]


def build_model(spec, n_features):
    """Construct an (un-set-up) ``MixtureModel`` from a model spec."""
    if not isinstance(spec, dict):
        raise ConfigError("model spec must be a mapping")
    names = feature_names(n_features)
    components = []
    for cs in _expand_components(spec):
        family = get_family(cs.get("family"))
        params = cs.get("params") or _default_params(family)
        unknown = set(params) - set(family.param_names)
        if unknown:
            raise ConfigError(f"model.params: {family.name} has no parameter(s) {sorted(unknown)}")
        preds = {}
        for name in family.param_names:
            terms = params.get(name, [{"type": "intercept"}])
            preds[name] = [resolve_term(t, names) for t in terms]
        components.append(Component(family, preds, cs.get("transforms")))
    gating = spec.get("gating") or {}
    gterms = gating.get("terms", [{"type": "intercept"}])
    M = len(components)
    gating_preds = [[resolve_term(t, names) for t in gterms] for _ in range(M)]
    return MixtureModel(components, gating=gating_preds,
                        gating_transform=gating.get("transform", "softmax"),
                        xi=float(spec.get("xi", 0.0)), rho=float(spec.get("rho", 0.0)))


def train_config(spec, seed=0, jobs=1):
    """``TrainConfig`` from a train spec.

    ``lr`` is a nominal rate: the CLR peak when ``clr`` is true, otherwise a
    constant rate. ``base_lr`` with a ``clr`` mapping sets the schedule explicitly.
    """
    spec = dict(spec or {})
    common = {}
    for key in ("optimizer", "epochs", "batch_size", "restarts", "shuffle"):
        if key in spec:
            common[key] = spec[key]
    unknown = set(spec) - {"optimizer", "epochs", "batch_size", "restarts", "shuffle",
                           "lr", "base_lr", "clr", "cycle_length", "init_from"}
    if unknown:
        raise ConfigError(f"unknown train option(s): {sorted(unknown)}")
    try:
        if "base_lr" in spec:
            clr = spec.get("clr", {})
            if clr is True:
                clr = {}
            clr_cfg = None if clr in (False, None) else CLRConfig(**clr)
            return TrainConfig(base_lr=spec["base_lr"], clr=clr_cfg, seed=seed, jobs=jobs, **common)
        lr = spec.get("lr", 0.1)
        use_clr = spec.get("clr", True)
        if isinstance(use_clr, dict):
            raise ConfigError("a clr mapping requires base_lr")
        extra = {"cycle_length": spec["cycle_length"]} if "cycle_length" in spec and use_clr else {}
        return TrainConfig.from_lr(lr, clr=bool(use_clr), seed=seed, jobs=jobs, **extra, **common)
    except TypeError as exc:
        raise ConfigError(f"bad train options: {exc}") from None


@dataclass
class ExperimentConfig:
    name: str
    seed: int
    data: dict
    model: dict
    train: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)
    path: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def resolve(self, p):
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


_TOP_KEYS = {"name", "seed", "data", "model", "train", "eval", "path", "sweep", "description"}


def parse_config(raw, base_dir="."):
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
    for key in ("data", "model"):
        if key not in raw:
            raise ConfigError(f"config field {key!r} is required")
    data = raw["data"]
    sources = [k for k in ("generator", "csv") if k in data]
    if len(sources) != 1:
        raise ConfigError("data must have exactly one of 'generator' or 'csv'")
    if "generator" in data:
        from .simgen import GENERATORS
        if data["generator"] not in GENERATORS:
            raise ConfigError(f"data.generator: unknown generator {data['generator']!r}")
        fam = data.get("options", {}).get("family")
        if fam is not None:
            try:
                get_family(fam)
            except ConfigError:
                raise ConfigError(f"data.options.family: unknown family {fam!r}") from None
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    return ExperimentConfig(
        name=raw.get("name", "experiment"), seed=seed, data=data, model=raw["model"],
        train=raw.get("train", {}), eval=raw.get("eval", {}), path=raw.get("path", {}),
        sweep=raw.get("sweep", {}), base_dir=Path(base_dir))


def load_config(path):
    path = Path(path)
    if not path.exists() and (PACKAGE_CONFIGS / path.name).exists():
        path = PACKAGE_CONFIGS / path.name
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(raw, base_dir=path.parent)


def bundled_configs():
    return sorted(PACKAGE_CONFIGS.glob("*.json"))
