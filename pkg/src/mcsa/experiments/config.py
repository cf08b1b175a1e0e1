"""Flat key-value experiment configuration.

Format: one ``key = value`` per line, ``#`` starts a comment, blank lines
ignored. Unknown keys are hard errors; every parse or validation failure
names the offending line.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional

EXPERIMENTS = ("gaussian_convergence", "variance_simulation", "gradient_variance",
               "stepsize_sweep")
METHODS = ("MSC", "MSCRB", "JSA", "PMCSA", "ELBO")
OPTIMIZERS = ("sgd", "momentum", "nesterov", "adam")
SCHEDULES = ("constant", "inv_sqrt", "inv")


class ConfigError(Exception):
    """Invalid experiment configuration; message carries line context."""


@dataclass
class ExperimentConfig:
    experiment: str = ""
    dim: int = 20
    nu: float = 0.0                      # Wishart degrees of freedom; 0 = isotropic
    methods: List[str] = field(default_factory=lambda: ["MSC", "MSCRB", "PMCSA"])
    budgets: List[int] = field(default_factory=lambda: [4, 16, 64])
    iterations: int = 5000
    repetitions: int = 10
    optimizer: str = "adam"
    schedule: str = "constant"
    gamma: float = 0.01
    alpha: float = 0.95                  # defensive weight; 1.0 = plain proposal
    tail_df: float = 5.0
    target_offset: float = 6.0           # per-dim mean of isotropic targets
    seed: int = 12345
    output_path: str = ""
    record_stride: int = 0               # 0 = auto: max(1, iterations // 200)
    num_chains: int = 512                # gradient_variance replicate chains
    num_replicates: int = 16384          # variance_simulation draws per cell
    delta_mus: List[float] = field(default_factory=lambda: [0.0, 2.0, 4.0])
    gammas: List[float] = field(default_factory=lambda: [
        1e-4, 3.1622776601683794e-4, 1e-3, 3.1622776601683794e-3, 1e-2,
        3.1622776601683795e-2, 1e-1, 3.1622776601683798e-1, 1.0])
    optimizers: List[str] = field(default_factory=lambda: list(OPTIMIZERS))
    record_walltime: bool = False        # real timings break byte reproducibility

    def effective_stride(self) -> int:
        if self.record_stride > 0:
            return self.record_stride
        return max(1, self.iterations // 200)


_INT_KEYS = {"dim", "iterations", "repetitions", "seed", "record_stride",
             "num_chains", "num_replicates"}
_FLOAT_KEYS = {"nu", "gamma", "alpha", "tail_df", "target_offset"}
_STR_KEYS = {"experiment", "optimizer", "schedule", "output_path"}
_BOOL_KEYS = {"record_walltime"}
_LIST_KEYS = {"methods", "budgets", "delta_mus", "gammas", "optimizers"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | _BOOL_KEYS | _LIST_KEYS


def _parse_scalar(key: str, raw: str, line_no: int):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _BOOL_KEYS:
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise ConfigError(f"line {line_no}: cannot parse value {raw!r} for key "
                          f"{key!r}") from None


def _parse_list(key: str, raw: str, line_no: int):
    items = [s.strip() for s in raw.split(",") if s.strip()]
    if not items:
        raise ConfigError(f"line {line_no}: key {key!r} needs a non-empty list")
    try:
        if key == "budgets":
            return [int(s) for s in items]
        if key in ("delta_mus", "gammas"):
            return [float(s) for s in items]
        return items
    except ValueError:
        raise ConfigError(f"line {line_no}: cannot parse list {raw!r} for key "
                          f"{key!r}") from None


def parse_config(text: str) -> ExperimentConfig:
    cfg = ExperimentConfig()
    seen: Dict[str, int] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in _ALL_KEYS:
            raise ConfigError(f"line {line_no}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {line_no}: duplicate key {key!r} "
                              f"(first set on line {seen[key]})")
        seen[key] = line_no
        value = (_parse_list(key, raw, line_no) if key in _LIST_KEYS
                 else _parse_scalar(key, raw, line_no))
        setattr(cfg, key, value)
    _validate(cfg, seen)
    return cfg


def parse_config_file(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def _where(key: str, seen: Dict[str, int]) -> str:
    return f"line {seen[key]}: " if key in seen else f"key {key!r} (default): "


def _validate(cfg: ExperimentConfig, seen: Dict[str, int]) -> None:
    def fail(key, msg):
        raise ConfigError(_where(key, seen) + msg)

    if cfg.experiment not in EXPERIMENTS:
        fail("experiment", f"experiment must be one of {', '.join(EXPERIMENTS)}; "
                           f"got {cfg.experiment!r}")
    if cfg.dim < 1:
        fail("dim", "dim must be >= 1")
    if cfg.nu < 0:
        fail("nu", "nu must be >= 0 (0 selects the isotropic target)")
    if cfg.nu > 0 and cfg.nu < cfg.dim:
        fail("nu", f"nu must be >= dim for a full-rank target (nu={cfg.nu:g}, "
                   f"dim={cfg.dim})")
    if not cfg.budgets:
        fail("budgets", "budgets must be non-empty")
    for method in cfg.methods:
        if method not in METHODS:
            fail("methods", f"unknown method {method!r}; valid: {', '.join(METHODS)}")
    for n in cfg.budgets:
        if n < 1:
            fail("budgets", "budgets must be >= 1")
        if n < 2 and any(m in ("MSC", "MSCRB") for m in cfg.methods):
            fail("budgets", "MSC/MSCRB need budget N >= 2")
    if cfg.iterations < 0:
        fail("iterations", "iterations must be >= 0")
    if cfg.repetitions < 1:
        fail("repetitions", "repetitions must be >= 1")
    if cfg.optimizer not in OPTIMIZERS:
        fail("optimizer", f"optimizer must be one of {', '.join(OPTIMIZERS)}")
    if cfg.schedule not in SCHEDULES:
        fail("schedule", f"schedule must be one of {', '.join(SCHEDULES)}")
    if cfg.gamma <= 0:
        fail("gamma", "gamma must be positive")
    if not (0.0 < cfg.alpha <= 1.0):
        fail("alpha", "alpha must lie in (0, 1]")
    if cfg.tail_df <= 0:
        fail("tail_df", "tail_df must be positive")
    if cfg.record_stride < 0:
        fail("record_stride", "record_stride must be >= 0 (0 = auto)")
    if cfg.num_chains < 2:
        fail("num_chains", "num_chains must be >= 2")
    if cfg.num_replicates < 2:
        fail("num_replicates", "num_replicates must be >= 2")
    if cfg.experiment == "variance_simulation" and cfg.dim != 1:
        fail("dim", "variance_simulation is a 1-D study; set dim = 1")
    if cfg.experiment == "gradient_variance" and "ELBO" in cfg.methods:
        fail("methods", "gradient_variance studies the chain-based estimators; "
                        "ELBO has no replicate chains")
    if cfg.experiment == "stepsize_sweep":
        if not cfg.gammas:
            fail("gammas", "stepsize_sweep needs a non-empty gamma grid")
        if any(g <= 0 for g in cfg.gammas):
            fail("gammas", "gamma grid entries must be positive")
        if not cfg.optimizers:
            fail("optimizers", "stepsize_sweep needs a non-empty optimizer grid")
        for opt in cfg.optimizers:
            if opt not in OPTIMIZERS:
                fail("optimizers", f"unknown optimizer {opt!r}")
    if "ELBO" in cfg.methods and any(n < 1 for n in cfg.budgets):
        fail("budgets", "ELBO needs at least one draw per step")
