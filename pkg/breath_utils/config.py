"""
Run configuration
=================
Every pipeline toggle and hyperparameter lives on RunConfig. Values come from
defaults, then an optional ``key=value`` file, then overrides (CLI ``--key value``
pairs or experiment dictionaries), lowest precedence first.
"""

import dataclasses
import logging
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

from .errors import ConfigError, InvalidFilterParams
from .preprocess import FilterParams
from .records import RANGE_IDS

logger = logging.getLogger(__name__)

MODEL_NAMES = ("knn", "rf", "lr", "gb", "svc")
MODES = ("single", "multiple")
SCALERS = ("standard", "robust", "none")
RETAIN_POLICIES = ("window", "plateau")

_TRUE = {"on", "true", "yes", "1"}
_FALSE = {"off", "false", "no", "0"}


def _parse_bool(text):
    if isinstance(text, bool):
        return text
    lowered = str(text).strip().lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ValueError(f"expected on/off, got {text!r}")


def _parse_names(text):
    if isinstance(text, (list, tuple)):
        return tuple(str(item).strip() for item in text)
    return tuple(item.strip() for item in str(text).split(",") if item.strip())


def _parse_gamma(text):
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return float(text)
    stripped = str(text).strip()
    if stripped in ("scale", "auto"):
        return stripped
    return float(stripped)


@dataclass(frozen=True)
class RunConfig:
    ranges: Tuple[str, ...] = ("R2",)
    filtering: bool = True
    plateau_q: float = 0.5
    sg_window: int = 7
    sg_polyorder: int = 3
    sg_deriv: int = 0
    baseline_window: int = 31
    baseline_polyorder: int = 2
    hp1: float = 1e-4
    hp2: float = 1e-3
    peak_floor: float = 1e-4
    z_thresh: float = 8.0
    mode: str = "single"
    retain: str = "window"
    max_combos: int = 10000
    sample_combos: int = 0
    scaler: str = "standard"
    surf: bool = False
    surf_k: int = 200
    surf_max_instances: int = 2000
    pca_components: int = 20
    models: Tuple[str, ...] = MODEL_NAMES
    knn_k: int = 5
    rf_trees: int = 100
    gb_rounds: int = 100
    gb_depth: int = 3
    gb_shrinkage: float = 0.1
    svm_c: float = 1.0
    svm_gamma: Any = "scale"
    lr_l2: float = 1.0
    folds: int = 10
    repeats: int = 1
    seed: int = 0
    n_jobs: int = 1
    per_row_test: bool = False

    def __post_init__(self):
        object.__setattr__(self, "ranges", _parse_names(self.ranges))
        object.__setattr__(self, "models", _parse_names(self.models))
        self.validate()

    def validate(self):
        if self.ranges not in ((range_id,) for range_id in RANGE_IDS) and self.ranges != RANGE_IDS:
            raise ConfigError(
                f"ranges must be a single range or all of {','.join(RANGE_IDS)}, got {','.join(self.ranges)}"
            )
        _require_choice("mode", self.mode, MODES)
        _require_choice("scaler", self.scaler, SCALERS)
        _require_choice("retain", self.retain, RETAIN_POLICIES)
        unknown = [name for name in self.models if name not in MODEL_NAMES]
        if unknown or not self.models:
            raise ConfigError(f"models must be a non-empty subset of {','.join(MODEL_NAMES)}, got {self.models}")
        if self.folds < 2:
            raise ConfigError("folds must be at least 2")
        for key in ("repeats", "max_combos", "knn_k", "rf_trees", "gb_rounds", "gb_depth", "surf_k",
                    "surf_max_instances"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be at least 1")
        for key in ("sample_combos", "pca_components"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be non-negative")
        if self.n_jobs == 0:
            raise ConfigError("n_jobs must be non-zero")
        if self.svm_c <= 0 or self.lr_l2 <= 0 or self.gb_shrinkage <= 0:
            raise ConfigError("svm.c, lr.l2 and gb.shrinkage must be positive")
        if isinstance(self.svm_gamma, float) and self.svm_gamma <= 0:
            raise ConfigError("svm.gamma must be positive, 'scale' or 'auto'")
        self.filter_params()

    @property
    def whole_spectrum(self) -> bool:
        return len(self.ranges) == len(RANGE_IDS)

    def filter_params(self) -> FilterParams:
        try:
            return FilterParams(
                sg_window=self.sg_window,
                sg_polyorder=self.sg_polyorder,
                sg_deriv=self.sg_deriv,
                hp1=self.hp1,
                hp2=self.hp2,
                plateau_q=self.plateau_q,
                z_thresh=self.z_thresh,
                baseline_window=self.baseline_window,
                baseline_polyorder=self.baseline_polyorder,
                peak_floor=self.peak_floor,
                enabled=self.filtering,
            )
        except InvalidFilterParams as e:
            raise ConfigError(str(e)) from e

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> "OrderedDict[str, Any]":
        """Snapshot keyed by config-file names, embedded in every report"""
        snapshot = OrderedDict()
        for key, (attr, _) in CONFIG_KEYS.items():
            value = getattr(self, attr)
            snapshot[key] = list(value) if isinstance(value, tuple) else value
        return snapshot


def _require_choice(key, value, choices):
    if value not in choices:
        raise ConfigError(f"{key} must be one of {'/'.join(choices)}, got {value!r}")


# config-file key -> (RunConfig attribute, parser)
CONFIG_KEYS: Dict[str, tuple] = {
    "ranges": ("ranges", _parse_names),
    "filtering": ("filtering", _parse_bool),
    "plateau_q": ("plateau_q", float),
    "sg.window": ("sg_window", int),
    "sg.polyorder": ("sg_polyorder", int),
    "sg.deriv": ("sg_deriv", int),
    "baseline.window": ("baseline_window", int),
    "baseline.polyorder": ("baseline_polyorder", int),
    "hp1": ("hp1", float),
    "hp2": ("hp2", float),
    "peak_floor": ("peak_floor", float),
    "z_thresh": ("z_thresh", float),
    "mode": ("mode", str),
    "retain": ("retain", str),
    "max_combos": ("max_combos", int),
    "sample_combos": ("sample_combos", int),
    "scaler": ("scaler", str),
    "surf": ("surf", _parse_bool),
    "surf.k": ("surf_k", int),
    "surf.max_instances": ("surf_max_instances", int),
    "pca_components": ("pca_components", int),
    "models": ("models", _parse_names),
    "knn.k": ("knn_k", int),
    "rf.trees": ("rf_trees", int),
    "gb.rounds": ("gb_rounds", int),
    "gb.depth": ("gb_depth", int),
    "gb.shrinkage": ("gb_shrinkage", float),
    "svm.c": ("svm_c", float),
    "svm.gamma": ("svm_gamma", _parse_gamma),
    "lr.l2": ("lr_l2", float),
    "folds": ("folds", int),
    "repeats": ("repeats", int),
    "seed": ("seed", int),
    "n_jobs": ("n_jobs", int),
    "per_row_test": ("per_row_test", _parse_bool),
}
_ATTR_TO_KEY = {attr: key for key, (attr, _) in CONFIG_KEYS.items()}


def normalize_key(key: str) -> str:
    """Accept ``sg.window``, ``sg_window`` and ``sg-window`` spellings"""
    key = key.strip().lstrip("-")
    if key in CONFIG_KEYS:
        return key
    attr = key.replace("-", "_").replace(".", "_")
    if attr in _ATTR_TO_KEY:
        return _ATTR_TO_KEY[attr]
    raise ConfigError(f"unknown config key {key!r}")


def parse_config_file(path) -> Dict[str, str]:
    """Read a ``key=value`` file; ``#`` starts a comment, blank lines are skipped"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    entries = {}
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{number}: expected key=value, got {raw_line.strip()!r}")
        key, value = line.split("=", 1)
        entries[normalize_key(key)] = value.strip()
    return entries


def _coerce(key: str, value):
    attr, parser = CONFIG_KEYS[key]
    try:
        if isinstance(value, str) or parser in (_parse_names, _parse_bool, _parse_gamma):
            return attr, parser(value)
        return attr, value
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid value {value!r} for {key}: {e}") from e


def load_run_config(path=None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Resolve a RunConfig from defaults, an optional config file and overrides.

    Raises:
        ConfigError: unknown keys, unparseable values or invalid combinations
    """
    values = {}
    layers = []
    if path is not None:
        layers.append(parse_config_file(path))
    if overrides:
        layers.append({normalize_key(key): value for key, value in overrides.items()})
    for layer in layers:
        for key, value in layer.items():
            attr, parsed = _coerce(key, value)
            values[attr] = parsed
    try:
        config = RunConfig(**values)
    except TypeError as e:
        raise ConfigError(str(e)) from e
    logger.debug(f"Resolved run config: {dict(config.to_dict())}")
    return config


def overrides_from_args(extra_args) -> Dict[str, str]:
    """Turn leftover ``--key value`` / ``--key=value`` CLI tokens into overrides"""
    overrides = {}
    tokens = list(extra_args)
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if not token.startswith("--"):
            raise ConfigError(f"unexpected argument {token!r}")
        if "=" in token:
            key, value = token[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(f"missing value for {token}")
            key, value = token[2:], tokens[i + 1]
            i += 2
        overrides[normalize_key(key)] = value
    return overrides
