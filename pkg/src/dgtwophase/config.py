"""Run configuration: sectioned ``key = value`` files with dotted overrides.

Example::

    [problem]
    preset = anisotropic_lens
    model = A
    T = 800

    [scheme]
    kind = implicit
    tau = 3

Every field of :class:`RunConfig` is addressed as ``section.key``; the
command line accepts the same names through ``--override``.
"""
import configparser
from dataclasses import dataclass, fields
from typing import Optional, Tuple

from .adapt import P_STRATEGIES
from .physics import MODELS, PRESETS
from .stepper import SCHEMES

# section -> RunConfig attribute -> file key
SECTIONS = {
    "problem": {"preset": "preset", "model": "model", "T": "T", "cutoff": "cutoff",
                "macro_nx": "macro_nx", "macro_ny": "macro_ny", "K_lens": "K_lens",
                "J_n": "J_n"},
    "scheme": {"kind": "scheme", "tau": "tau", "alpha": "alpha", "tol_iter": "tol_iter",
               "max_outer": "max_outer", "beta": "beta", "s_eval": "s_eval",
               "newton_atol": "newton_atol", "newton_rtol": "newton_rtol",
               "newton_max_iter": "newton_max_iter", "limiter": "limiter",
               "limit_each_newton": "limit_each_newton", "s_min": "s_min", "s_max": "s_max"},
    "adapt": {"max_level": "max_level", "max_order": "max_order", "min_order": "min_order",
              "initial_order": "initial_order", "p_strategy": "p_strategy",
              "initial_htol": "initial_htol", "initial_passes": "initial_passes",
              "ptol_factor": "ptol_factor", "frac_ptol": "frac_ptol", "h_adapt": "h_adapt",
              "cadence": "adapt_every"},
    "output": {"dir": "output_dir", "every": "output_every", "times": "output_times",
               "vtk": "vtk", "line_points": "line_points"},
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    preset: str = "anisotropic_lens"
    model: str = "A"
    T: Optional[float] = None  # None: preset default
    cutoff: bool = False
    macro_nx: int = 10
    macro_ny: int = 6
    K_lens: Optional[float] = None  # diagonal lens permeability; None: preset value
    J_n: Optional[float] = None  # inflow flux; None: preset value
    scheme: str = "implicit"
    tau: float = 3.0
    alpha: float = 1.0
    tol_iter: float = 3e-2
    max_outer: int = 100
    beta: Optional[float] = None
    s_eval: float = 0.5
    newton_atol: float = 1e-10
    newton_rtol: float = 1e-8
    newton_max_iter: int = 30
    limiter: bool = True
    limit_each_newton: bool = False
    s_min: float = 0.0
    s_max: float = 1.0
    max_level: int = 3
    max_order: int = 3
    min_order: int = 1
    initial_order: Optional[int] = None  # None: max_order
    p_strategy: str = "diff"
    initial_htol: float = 1e-16
    initial_passes: int = 3
    ptol_factor: float = 1e-2
    frac_ptol: float = 1.0
    h_adapt: bool = True
    adapt_every: int = 1
    output_dir: str = "output"
    output_every: int = 50
    output_times: Tuple[float, ...] = (200.0, 400.0, 600.0, 800.0)
    vtk: bool = True
    line_points: int = 512

    def validate(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {sorted(MODELS)}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.p_strategy not in P_STRATEGIES:
            raise ConfigError(f"unknown p-strategy {self.p_strategy!r}")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.T is not None and (self.T < 0 or (self.T > 0 and self.tau > self.T)):
            raise ConfigError("need 0 <= T and tau <= T")
        if self.max_order < 1 or self.max_level < 0:
            raise ConfigError("need max_order >= 1 and max_level >= 0")
        if self.line_points < 2:
            raise ConfigError("line sampling needs at least two points")
        return self


_FIELDS = {f.name: f for f in fields(RunConfig)}
_KEYMAP = {f"{sec}.{k}": attr for sec, keys in SECTIONS.items() for k, attr in keys.items()}


def _convert(attr, text):
    f = _FIELDS[attr]
    default = f.default
    text = text.strip()
    if attr == "output_times":
        return tuple(float(v) for v in text.replace(",", " ").split())
    if text.lower() in ("none", "") and default is None:
        return None
    kind = type(default) if default is not None else {"T": float, "beta": float, "K_lens": float,
                                                       "J_n": float, "initial_order": int}[attr]
    if kind is bool:
        low = text.lower()
        if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
            raise ConfigError(f"{attr}: expected a boolean, got {text!r}")
        return low in ("1", "true", "yes", "on")
    try:
        if kind is int:
            v = float(text)
            if not v.is_integer():
                raise ValueError
            return int(v)
        return kind(text)
    except ValueError as err:
        raise ConfigError(f"{attr}: cannot parse {text!r}") from err


def apply_override(cfg, item):
    """Apply one ``section.key=value`` string to ``cfg`` in place."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not KEY=VALUE")
    key, value = item.split("=", 1)
    key = key.strip()
    attr = _KEYMAP.get(key)
    if attr is None:
        raise ConfigError(f"unknown key {key!r}; known keys: {', '.join(sorted(_KEYMAP))}")
    setattr(cfg, attr, _convert(attr, value))
    return cfg


def load_config(path=None, overrides=()):
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        if not parser.read(path):
            raise ConfigError(f"cannot read config file {path}")
        for sec in parser.sections():
            if sec not in SECTIONS:
                raise ConfigError(f"unknown section [{sec}]")
            for key, value in parser.items(sec):
                apply_override(cfg, f"{sec}.{key}={value}")
    for item in overrides:
        apply_override(cfg, item)
    return cfg.validate()


def dump_config(cfg):
    """Render ``cfg`` in the file format (round-trips through :func:`load_config`)."""
    lines = []
    for sec, keys in SECTIONS.items():
        lines.append(f"[{sec}]")
        for key, attr in keys.items():
            v = getattr(cfg, attr)
            if isinstance(v, tuple):
                v = " ".join(f"{x:g}" for x in v)
            lines.append(f"{key} = {v}")
        lines.append("")
    return "\n".join(lines)
