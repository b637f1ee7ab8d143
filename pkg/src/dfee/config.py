"""Experiment configuration: ``key = value`` files overridden by command-line flags."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .densities import DensityModel, load_tabulated
from .ensemble import EnsembleConfig, default_threads
from .errors import ConfigurationError
from .lattice import BoxGeometry

COMMANDS = (
    "variance-scan",
    "shift-decay",
    "hcr-bound",
    "splitting",
    "projection-decay",
    "resolvent-check",
    "fractional-moments",
    "area-law-2d",
    "density-check",
)


def _floats(text):
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).replace(" ", "").split(",") if v)


def _ints(text):
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v)


def _pairs(text):
    if isinstance(text, (list, tuple)):
        return tuple((int(x), int(y)) for x, y in text)
    out = []
    for item in str(text).replace(" ", "").split(","):
        if item:
            x, y = item.split(":")
            out.append((int(x), int(y)))
    return tuple(out)


def _bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _str(text):
    return str(text)


# key -> (parser, default, help)
KEYS = {
    "dimension": (int, 1, "lattice dimension d (1 or 2)"),
    "half_width": (int, 256, "box half-width N; the box is [-N, N]^d"),
    "block_half_width": (int, 0, "block half-width M for single-block use (0 <= M <= N)"),
    "density": (_str, "exponential", "exponential | shifted_exponential | half_gaussian | tabulated"),
    "rate": (float, 1.0, "rate a of the (shifted) exponential density"),
    "offset": (float, 0.0, "offset of the shifted exponential density"),
    "scale": (float, 1.0, "scale of the half-Gaussian density"),
    "density_file": (_str, "", "two-column (v, f(v)) file for the tabulated density"),
    "kappa": (float, 1.0, "declared finite-moment exponent of the density"),
    "fermi_energy": (float, 1.0, "Fermi energy E > 0"),
    "realizations": (int, 1000, "number of disorder realizations n"),
    "master_seed": (int, 0, "master seed of the counter-based random streams"),
    "shift_t": (float, 0.0, "origin shift t applied to every realization"),
    "threads": (int, None, "worker threads (default: $DFEE_THREADS or 1)"),
    "M_list": (_ints, (25, 50, 100), "block half-widths M for scans"),
    "splitting_M": (_ints, (10, 20, 40), "block half-widths for splitting residuals"),
    "t_list": (_floats, (2.0, 5.0, 10.0, 20.0, 50.0), "origin shifts t (> E) for shift scans"),
    "t_grid": (_floats, (0.5, 1.0, 2.0), "shift values for density checks"),
    "toy_n": (int, 100000, "Monte Carlo size of the toy variance checks"),
    "s": (float, 0.5, "fractional-moment exponent s in (0, 1)"),
    "lambda": (float, 0.5, "real part of the spectral parameter z"),
    "eta": (float, 0.1, "imaginary part of z (nonzero)"),
    "pairs": (_pairs, tuple((x, -1) for x in range(1, 16)), "site pairs x:y for fractional moments"),
    "alpha": (float, 0.5, "exponent alpha in (0, 1) of the entropy bound functional"),
    "r_max": (int, 20, "largest distance in the projection decay profile"),
    "with_bound": (_bool, True, "variance-scan: also run the shift scan for the bound A"),
    "checks": (int, 100, "number of random cases per resolvent identity"),
    "output_dir": (_str, ".", "directory receiving CSV files and the manifest"),
}

COMMAND_DEFAULTS = {
    "area-law-2d": {"dimension": 2, "half_width": 16, "M_list": (4, 6, 8), "realizations": 300},
    "resolvent-check": {"half_width": 200},
    "projection-decay": {"realizations": 500},
    "shift-decay": {"half_width": 128},
    "hcr-bound": {"half_width": 128},
    "fractional-moments": {"half_width": 128},
}


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    dimension: int
    half_width: int
    block_half_width: int
    density: str
    rate: float
    offset: float
    scale: float
    density_file: str
    kappa: float
    fermi_energy: float
    realizations: int
    master_seed: int
    shift_t: float
    threads: int
    M_list: tuple
    splitting_M: tuple
    t_list: tuple
    t_grid: tuple
    toy_n: int
    s: float
    lambda_: float
    eta: float
    pairs: tuple
    alpha: float
    r_max: int
    with_bound: bool
    checks: int
    output_dir: str

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lambda_")
        return d

    def geometry(self) -> BoxGeometry:
        return BoxGeometry(self.dimension, self.half_width, self.block_half_width)

    def density_model(self) -> DensityModel:
        kind = self.density
        if kind == "exponential":
            return DensityModel.exponential(self.rate, kappa=self.kappa)
        if kind == "shifted_exponential":
            return DensityModel.shifted_exponential(self.rate, self.offset, kappa=self.kappa)
        if kind == "half_gaussian":
            return DensityModel.half_gaussian(self.scale, kappa=self.kappa)
        if kind == "tabulated":
            if not self.density_file:
                raise ConfigurationError("density_file: required for the tabulated density")
            return load_tabulated(self.density_file, kappa=self.kappa)
        raise ConfigurationError(f"density: unknown kind {kind!r}")

    def ensemble(self, **overrides) -> EnsembleConfig:
        kw = dict(geometry=self.geometry(), density=self.density_model(),
                  fermi_energy=self.fermi_energy, realizations=self.realizations,
                  master_seed=self.master_seed, shift_t=self.shift_t, threads=self.threads)
        kw.update(overrides)
        return EnsembleConfig(**kw)


def _field_name(key):
    return "lambda_" if key == "lambda" else key


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file {path} not found")
    out = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key] = value
    return out


def parse_config(command: str, file_values: dict | None = None, flag_values: dict | None = None
                 ) -> ExperimentConfig:
    """Merge defaults, file values and flags (flags win) and validate."""
    if command not in COMMANDS:
        raise ConfigurationError(f"command: unknown command {command!r}")
    merged = {k: v[1] for k, v in KEYS.items()}
    merged.update(COMMAND_DEFAULTS.get(command, {}))
    for source in (file_values or {}, flag_values or {}):
        for key, value in source.items():
            key = key.replace("-", "_") if key not in KEYS else key
            if key not in KEYS:
                raise ConfigurationError(f"{key}: unknown key")
            parser = KEYS[key][0]
            try:
                merged[key] = parser(value) if value is not None else None
            except (TypeError, ValueError):
                raise ConfigurationError(f"{key}: cannot parse {value!r}") from None
    if merged["threads"] is None:
        merged["threads"] = default_threads()
    cfg = ExperimentConfig(command=command, **{_field_name(k): v for k, v in merged.items()})
    validate(cfg)
    return cfg


def _fail(key, msg):
    raise ConfigurationError(f"{key}: {msg}")


def validate(cfg: ExperimentConfig) -> None:
    if cfg.dimension not in (1, 2):
        _fail("dimension", "must be 1 or 2")
    if cfg.half_width < 1:
        _fail("half_width", "must be >= 1")
    if not 0 <= cfg.block_half_width <= cfg.half_width:
        _fail("block_half_width", f"{cfg.block_half_width} not in [0, half_width={cfg.half_width}]")
    if cfg.realizations < 2:
        _fail("realizations", "must be >= 2")
    if not cfg.fermi_energy > 0:
        _fail("fermi_energy", "must be > 0")
    if cfg.shift_t < 0:
        _fail("shift_t", "must be >= 0")
    if cfg.threads < 1:
        _fail("threads", "must be >= 1")
    if not 0 < cfg.s < 1:
        _fail("s", "must lie in (0, 1)")
    if cfg.eta == 0:
        _fail("eta", "must be nonzero")
    if not 0 < cfg.alpha < 1:
        _fail("alpha", "must lie in (0, 1)")
    if any(t <= 0 for t in cfg.t_grid):
        _fail("t_grid", "values must be > 0")
    if cfg.toy_n < 1000:
        _fail("toy_n", "must be >= 1000")
    if cfg.checks < 1:
        _fail("checks", "must be >= 1")
    N = cfg.half_width
    cmd = cfg.command
    if cmd in ("variance-scan", "splitting", "shift-decay", "hcr-bound", "projection-decay",
               "resolvent-check", "fractional-moments") and cfg.dimension != 1:
        _fail("dimension", f"{cmd} is one-dimensional")
    if cmd == "area-law-2d":
        if cfg.dimension != 2:
            _fail("dimension", "area-law-2d needs dimension = 2")
        if (2 * N + 1) ** 2 > 40_000:
            _fail("half_width", "box exceeds the 4e4-site cap")
        if not cfg.M_list or max(cfg.M_list) > N:
            _fail("M_list", "block half-widths must not exceed half_width")
    if cmd == "variance-scan":
        if not cfg.M_list or max(cfg.M_list) > N / 2:
            _fail("M_list", f"values must be <= N/2 = {N / 2}")
    if cmd == "splitting" and (not cfg.splitting_M or max(cfg.splitting_M) > N / 2):
        _fail("splitting_M", f"values must be <= N/2 = {N / 2}")
    if cmd in ("shift-decay", "hcr-bound") or (cmd == "variance-scan" and cfg.with_bound):
        if not cfg.t_list or min(cfg.t_list) <= cfg.fermi_energy:
            _fail("t_list", "values must exceed fermi_energy")
    if cmd == "projection-decay" and cfg.r_max > N / 2:
        _fail("r_max", f"must be <= N/2 = {N / 2}")
    if cmd == "fractional-moments":
        if not cfg.pairs:
            _fail("pairs", "need at least one pair")
        if any(max(abs(x), abs(y)) > N for x, y in cfg.pairs):
            _fail("pairs", "sites outside the box")
        if cfg.realizations < 10:
            _fail("realizations", "fractional moments need >= 10 realizations")
    for v in (cfg.rate, cfg.scale):
        if not (v > 0 and math.isfinite(v)):
            _fail("rate" if v is cfg.rate else "scale", "must be positive")


def config_help() -> str:
    lines = ["configuration keys (file 'key = value' or flag '--key value'):"]
    for key, (_, default, text) in KEYS.items():
        if isinstance(default, tuple):
            if default and isinstance(default[0], tuple):
                default = ",".join(f"{x}:{y}" for x, y in default)
            else:
                default = ",".join(str(v) for v in default)
        lines.append(f"  {key:<17} {text} [default: {default}]")
    lines.append("per-command default overrides:")
    for cmd, over in COMMAND_DEFAULTS.items():
        items = ", ".join(f"{k}={','.join(map(str, v)) if isinstance(v, tuple) else v}"
                          for k, v in over.items())
        lines.append(f"  {cmd:<19} {items}")
    return "\n".join(lines)


def field_names() -> list:
    return [f.name for f in fields(ExperimentConfig)]
