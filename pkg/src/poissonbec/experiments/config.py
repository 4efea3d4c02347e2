"""Experiment configuration: dataclass, INI-style file format, overrides.

A configuration file is flat ``key = value`` text grouped under section
headers::

    [model]
    rate = 1
    density = 2 rho_c      # a number, or a multiple of the LS critical density
    beta = 1

    [potential]
    shape = box            # box | triangle | delta | tabulated
    shape_param = 1        # box height, triangle peak or delta weight
    support_left = 0.5
    support_right = 0.5
    strength = ln N        # number | comma list | "ln N" | "c * ln N"

    [run]
    sizes = 250, 500, 1000, 2000
    trials = 500
    seed = 12345

Every key belongs to exactly one section (see ``SECTIONS``); unknown keys
and keys in the wrong section are rejected with the offending line number.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
import os
import re
from dataclasses import dataclass
from typing import Optional

from ..errors import InvalidParameterError

KINDS = ("gap_law", "energy_bounds", "condensation", "lifshitz", "ls_compare")
SEED_ENV = "POISSONBEC_SEED"

SECTIONS = {
    "model": ("rate", "density", "beta"),
    "potential": ("shape", "shape_param", "support_left", "support_right", "samples", "strength"),
    "run": ("kind", "sizes", "trials", "seed", "grid_resolution", "out_dir"),
    "events": ("zeta1", "zeta2", "eps_window", "theta"),
    "gaps": ("thresholds", "gap_ranks", "c_hat", "iid_k", "concentration_eps", "largest_gap_zeta"),
    "bounds": ("prob_slack", "eig_slack", "levels", "energy_cutoff", "edge_a", "edge_b", "tol"),
    "thermo": ("comparator", "tail_tolerance"),
    "lifshitz": ("energy_min", "energy_max", "energy_points", "fit_window", "control_window",
                 "ids_floor"),
}


class ConfigError(InvalidParameterError):
    """Malformed configuration file or value."""


@dataclass
class ExperimentConfig:
    kind: str
    rate: float = 1.0
    density: str = "1"
    beta: float = 1.0
    shape: str = "box"
    shape_param: float = 1.0
    support_left: float = 0.5
    support_right: float = 0.5
    samples: tuple = ()
    strength: str = "1"
    sizes: tuple = (1000,)
    trials: int = 100
    seed: int = 0
    grid_resolution: Optional[float] = None
    out_dir: str = "runs"
    zeta1: float = 0.5
    zeta2: float = 0.25
    eps_window: str = "E2"
    theta: Optional[float] = None
    thresholds: tuple = (0.5, 1.0, 2.0)
    gap_ranks: tuple = (2, 5, 10)
    c_hat: float = 2.0
    iid_k: int = 1000
    concentration_eps: float = 0.25
    largest_gap_zeta: float = 0.3
    prob_slack: float = 0.01
    eig_slack: float = 10.0
    levels: int = 5
    energy_cutoff: float = 40.0
    edge_a: Optional[float] = None
    edge_b: Optional[float] = None
    tol: float = 1e-10
    comparator: str = "soft"
    tail_tolerance: float = 1e-3
    energy_min: float = 0.02
    energy_max: float = 1.0
    energy_points: int = 40
    fit_window: Optional[tuple] = None
    control_window: tuple = (1e-4, 1e-2)
    ids_floor: float = 1e-6

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not 0 < self.zeta2 < self.zeta1 < 1:
            raise ConfigError("need 0 < zeta2 < zeta1 < 1")
        if not self.sizes or list(self.sizes) != sorted(self.sizes):
            raise ConfigError("sizes must be a nonempty ascending list")
        if not self.rate > 0 or not self.beta > 0:
            raise ConfigError("rate and beta must be positive")
        if self.comparator not in ("soft", "ls"):
            raise ConfigError("comparator must be 'soft' or 'ls'")
        strength_ladder(self.strength, self.sizes[0])

    def to_ini(self) -> str:
        """The resolved configuration in the file format (round-trips through ``load``)."""
        lines = []
        values = dataclasses.asdict(self)
        for section, keys in SECTIONS.items():
            lines.append(f"[{section}]")
            for key in keys:
                v = values[key]
                if v is None:
                    continue
                if isinstance(v, (tuple, list)):
                    if not v:
                        continue
                    v = ", ".join(_fmt(x) for x in v)
                else:
                    v = _fmt(v)
                lines.append(f"{key} = {v}")
            lines.append("")
        return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


_LN = re.compile(r"^\s*(?:([0-9.eE+-]+)\s*\*?\s*)?ln\s*\(?\s*N\s*\)?\s*$")


def strength_ladder(spec: str, n: int) -> list[float]:
    """Strength scale(s) for particle number ``n``.

    ``"10"`` is a fixed strength, ``"10, 100"`` a ladder of fixed strengths
    and ``"ln N"`` / ``"2 * ln N"`` a strength growing with the system.
    """
    spec = str(spec).strip()
    m = _LN.match(spec)
    if m:
        factor = float(m.group(1)) if m.group(1) else 1.0
        return [factor * math.log(n)]
    try:
        vals = [float(s) for s in spec.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse strength {spec!r}") from None
    if not vals or any(v < 0 for v in vals):
        raise ConfigError(f"strength must be nonnegative, got {spec!r}")
    return vals


def resolve_density(spec: str, rate: float, beta: float) -> float:
    """A number, or ``"<c> rho_c"`` meaning c times the LS critical density."""
    from ..thermo import critical_density_ls

    s = str(spec).replace("*", " ").strip()
    if s.endswith("rho_c"):
        head = s[: -len("rho_c")].strip()
        factor = float(head) if head else 1.0
        return factor * critical_density_ls(rate, beta)
    value = float(s)
    if not value > 0:
        raise ConfigError("density must be positive")
    return value


def _floats(s):
    return tuple(float(x) for x in s.replace(";", ",").split(",") if x.strip())


def _ints(s):
    return tuple(int(float(x)) for x in s.replace(";", ",").split(",") if x.strip())


_PARSERS = {
    "rate": float, "beta": float, "density": str, "shape": str, "shape_param": float,
    "support_left": float, "support_right": float, "samples": _floats, "strength": str,
    "kind": str, "sizes": _ints, "trials": int, "seed": int, "grid_resolution": float,
    "out_dir": str, "zeta1": float, "zeta2": float, "eps_window": str, "theta": float,
    "thresholds": _floats, "gap_ranks": _ints, "c_hat": float, "iid_k": int,
    "concentration_eps": float, "largest_gap_zeta": float, "prob_slack": float,
    "eig_slack": float, "levels": int, "energy_cutoff": float, "edge_a": float,
    "edge_b": float, "tol": float, "comparator": str, "tail_tolerance": float,
    "energy_min": float, "energy_max": float, "energy_points": int, "fit_window": _floats,
    "control_window": _floats, "ids_floor": float,
}


def _line_of(text: str, key: str) -> int:
    for i, line in enumerate(text.splitlines(), 1):
        if re.match(rf"^\s*{re.escape(key)}\s*[=:]", line):
            return i
    return 0


def parse_config_text(text: str, kind: Optional[str] = None, source: str = "<config>") -> dict:
    """Parse file text into a dict of typed values (no defaults applied)."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    out = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in parser.items(section):
            line = _line_of(text, key)
            if key not in _PARSERS:
                raise ConfigError(f"{source}:{line}: unknown key {key!r}")
            if key not in SECTIONS[section]:
                raise ConfigError(f"{source}:{line}: key {key!r} does not belong in [{section}]")
            try:
                out[key] = _PARSERS[key](raw.strip())
            except ValueError:
                raise ConfigError(f"{source}:{line}: bad value for {key!r}: {raw!r}") from None
    if kind is not None:
        out["kind"] = kind
    return out


def build_config(file_values: Optional[dict] = None, overrides: Optional[dict] = None,
                 env: Optional[dict] = None) -> ExperimentConfig:
    """Merge file values, the seed environment variable and flag overrides.

    Precedence for the seed: flag > environment > file.
    """
    values = dict(file_values or {})
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            values["seed"] = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    if "kind" not in values:
        raise ConfigError("experiment kind missing")
    return ExperimentConfig(**values)


def load_config(path, kind: Optional[str] = None, overrides: Optional[dict] = None,
                env: Optional[dict] = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return build_config(parse_config_text(text, kind, str(path)), overrides, env)
