"""Run configuration: YAML text to validated dataclasses and back.

Unknown keys are errors (reported with their full key path), range violations
name the offending key, and ``parse -> serialize -> parse`` is a fixpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import yaml

from .integrator import SCHEMES, SimParams
from .noise import FAMILIES, NoiseSpec, DEFAULT_SMALLNESS_THRESHOLD

MODES = ("simulate", "twin", "verify-lemmas", "example-1d", "convergence", "check-noise")

LEMMA_IDS = (
    "kato_ponce",
    "commutator_alpha",
    "double_commutator",
    "negative_sobolev",
    "leray_commutator",
    "multiplier_commutator",
    "cancellation",
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class InitialSpec:
    kind: str = "random"  # zero | random | checkpoint
    amplitude: float = 0.1
    decay: float = 5.0
    seed: int = 100
    path: str | None = None


@dataclass(frozen=True)
class CheckpointSpec:
    write: str | None = None
    resume: str | None = None


@dataclass(frozen=True)
class TwinSpec:
    delta: float = 1e-6
    perturb_seed: int = 11
    paths: int = 1


@dataclass(frozen=True)
class LemmaSpec:
    ids: tuple[str, ...] = ("kato_ponce", "commutator_alpha", "double_commutator",
                            "negative_sobolev", "leray_commutator")
    samples: int = 50
    resolutions: tuple[int, ...] = (4, 8, 16)
    s: float = 3.0
    alpha_values: tuple[float, ...] = (-0.5, 0.0, 0.5)
    beta: float = 2.0
    decay: float = 3.0
    seed: int = 7
    b_wavenumber: int = 4
    slope_limit: float = 0.1


@dataclass(frozen=True)
class Example1DSpec:
    r: float = 1.0
    tau: float = 0.0
    kmax: int = 64
    tolerance: float = 1e-10


@dataclass(frozen=True)
class ConvergenceSpec:
    dts: tuple[float, ...] = (1e-2, 5e-3, 2.5e-3)
    T: float = 0.25
    paths: int = 4
    min_order: float = 0.4


@dataclass(frozen=True)
class NoiseCheckSpec:
    smallness_threshold: float = DEFAULT_SMALLNESS_THRESHOLD


@dataclass(frozen=True)
class RunConfig:
    mode: str
    output: str | None = None
    params: SimParams = field(default_factory=lambda: SimParams(
        n=8, s=1.5, sigma=3.5, rho=2.0, dt=0.01, T=1.0))
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    initial: InitialSpec = field(default_factory=InitialSpec)
    checkpoint: CheckpointSpec = field(default_factory=CheckpointSpec)
    twin: TwinSpec = field(default_factory=TwinSpec)
    lemmas: LemmaSpec = field(default_factory=LemmaSpec)
    example1d: Example1DSpec = field(default_factory=Example1DSpec)
    convergence: ConvergenceSpec = field(default_factory=ConvergenceSpec)
    noise_check: NoiseCheckSpec = field(default_factory=NoiseCheckSpec)
    fitted_c_sigma: float | None = None


def _default_params(**kw) -> SimParams:
    base = dict(n=8, s=1.5, sigma=3.5, rho=2.0, dt=0.01, T=1.0)
    base.update(kw)
    return SimParams(**base)


_SECTIONS = {
    "params": (_default_params, {
        "n": int, "s": float, "sigma": float, "rho": float, "dt": float, "T": float,
        "f0": float, "scheme": str, "seed": int, "ensemble_size": int, "p": float,
        "record_every": int,
    }),
    "noise": (NoiseSpec, {
        "modes": int, "decay": float, "amplitude": float, "max_wavenumber": int,
        "seed": int, "family": str,
    }),
    "initial": (InitialSpec, {
        "kind": str, "amplitude": float, "decay": float, "seed": int, "path": str,
    }),
    "checkpoint": (CheckpointSpec, {"write": str, "resume": str}),
    "twin": (TwinSpec, {"delta": float, "perturb_seed": int, "paths": int}),
    "lemmas": (LemmaSpec, {
        "ids": tuple, "samples": int, "resolutions": tuple, "s": float,
        "alpha_values": tuple, "beta": float, "decay": float, "seed": int,
        "b_wavenumber": int, "slope_limit": float,
    }),
    "example1d": (Example1DSpec, {"r": float, "tau": float, "kmax": int, "tolerance": float}),
    "convergence": (ConvergenceSpec, {"dts": tuple, "T": float, "paths": int, "min_order": float}),
    "noise_check": (NoiseCheckSpec, {"smallness_threshold": float}),
}

_TOP_SCALARS = {"mode": str, "output": str, "fitted_c_sigma": float}


def _coerce(value, typ, path):
    if value is None:
        return None
    try:
        if typ is tuple:
            if not isinstance(value, (list, tuple)):
                raise TypeError
            return tuple(value)
        if typ is int:
            if isinstance(value, bool) or (isinstance(value, float) and value != int(value)):
                raise TypeError
            return int(value)
        if typ is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError
            return float(value)
        if typ is str:
            if not isinstance(value, str):
                raise TypeError
            return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: expected {typ.__name__}, got {value!r}") from None
    raise ConfigError(f"{path}: unsupported type")


def parse_config(text: str, mode: str | None = None) -> RunConfig:
    """Parse and validate a YAML configuration document."""
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed configuration: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")

    unknown = []
    for key in raw:
        if key not in _SECTIONS and key not in _TOP_SCALARS:
            unknown.append(key)
    for section, (_, fields) in _SECTIONS.items():
        body = raw.get(section)
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"{section}: expected a mapping")
        for key in body:
            if key not in fields:
                unknown.append(f"{section}.{key}")
    if unknown:
        raise ConfigError("unknown configuration keys: " + ", ".join(sorted(unknown)))

    kwargs = {}
    for key, typ in _TOP_SCALARS.items():
        if key in raw and raw[key] is not None:
            kwargs[key] = _coerce(raw[key], typ, key)
    for section, (cls, fields) in _SECTIONS.items():
        body = raw.get(section)
        if body is None:
            continue
        sec_kwargs = {}
        for key, typ in fields.items():
            if key in body:
                sec_kwargs[key] = _coerce(body[key], typ, f"{section}.{key}")
        try:
            kwargs[section] = cls(**sec_kwargs)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{section}: {exc}") from exc

    if mode is not None:
        if "mode" in kwargs and kwargs["mode"] != mode:
            raise ConfigError(
                f"mode: configuration says {kwargs['mode']!r} but the command is {mode!r}"
            )
        kwargs["mode"] = mode
    if "mode" not in kwargs:
        raise ConfigError("mode: required (set it in the file or pick a subcommand)")
    cfg = RunConfig(**kwargs)
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    if cfg.mode not in MODES:
        raise ConfigError(f"mode: unknown mode {cfg.mode!r} (choose from {MODES})")
    if cfg.params.scheme not in SCHEMES:
        raise ConfigError(f"params.scheme: unknown scheme {cfg.params.scheme!r}")
    if cfg.noise.family not in FAMILIES:
        raise ConfigError(f"noise.family: unknown family {cfg.noise.family!r}")
    if cfg.initial.kind not in ("zero", "random", "checkpoint"):
        raise ConfigError(f"initial.kind: unknown kind {cfg.initial.kind!r}")
    if cfg.initial.kind == "checkpoint" and not cfg.initial.path:
        raise ConfigError("initial.path: required when initial.kind is 'checkpoint'")
    if cfg.initial.amplitude < 0:
        raise ConfigError("initial.amplitude: must be nonnegative")
    if cfg.twin.delta < 0:
        raise ConfigError("twin.delta: must be nonnegative")
    if cfg.twin.paths < 1:
        raise ConfigError("twin.paths: must be >= 1")
    if cfg.lemmas.samples < 1:
        raise ConfigError("lemmas.samples: must be >= 1")
    if any(n < 2 for n in cfg.lemmas.resolutions):
        raise ConfigError("lemmas.resolutions: entries must be >= 2")
    for lid in cfg.lemmas.ids:
        if lid not in LEMMA_IDS:
            raise ConfigError(f"lemmas.ids: unknown lemma id {lid!r} (choose from {LEMMA_IDS})")
    if cfg.example1d.kmax < 5:
        raise ConfigError("example1d.kmax: must be >= 5")
    if cfg.example1d.r <= 0:
        raise ConfigError("example1d.r: must be positive")
    if cfg.example1d.tau < 0:
        raise ConfigError("example1d.tau: must be nonnegative")
    if cfg.example1d.tolerance <= 0:
        raise ConfigError("example1d.tolerance: must be positive")
    if len(cfg.convergence.dts) < 2:
        raise ConfigError("convergence.dts: need at least two step sizes")
    if any(dt <= 0 for dt in cfg.convergence.dts):
        raise ConfigError("convergence.dts: entries must be positive")
    if cfg.convergence.T <= 0:
        raise ConfigError("convergence.T: must be positive")
    if cfg.noise_check.smallness_threshold < 0:
        raise ConfigError("noise_check.smallness_threshold: must be nonnegative")


def serialize_config(cfg: RunConfig) -> str:
    """YAML text that parses back to an identical configuration."""
    doc: dict = {"mode": cfg.mode}
    if cfg.output is not None:
        doc["output"] = cfg.output
    if cfg.fitted_c_sigma is not None:
        doc["fitted_c_sigma"] = cfg.fitted_c_sigma
    for section, (cls, fields) in _SECTIONS.items():
        body = asdict(getattr(cfg, section))
        body = {k: (list(v) if isinstance(v, tuple) else v) for k, v in body.items() if v is not None}
        doc[section] = body
    return yaml.safe_dump(doc, sort_keys=True)


def apply_overrides(text_pairs: list[str], base: str) -> str:
    """Merge ``key.path=value`` overrides into a YAML document (textual)."""
    raw = yaml.safe_load(base) or {}
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    for pair in text_pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        key, value = pair.split("=", 1)
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-mapping")
        node[parts[-1]] = yaml.safe_load(value)
    return yaml.safe_dump(raw, sort_keys=True)
