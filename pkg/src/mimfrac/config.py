"""Flat key=value run configuration and the named preset registries.

A run is described by one small text file: model parameters, mesh and time
grid sizes, named presets for the coefficient functions, the observation
frame, noise, and the descent parameters.  Everything is validated up
front, so commands either fail before the first solve or not at all.
Arbitrary expressions are deliberately out of scope; the registries hold
the handful of named fields the benchmarks use.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .fem import Coefficients, assemble, build_mesh, mask_from_frame, project_function, zero_boundary
from .fractime import TimeGrid, TimeSeries
from .inversion import InverseConfig
from .solver import ModelProblem

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_config",
    "load_config",
    "canonical_manifest",
    "build_problem",
    "inverse_config",
    "RHO_PRESETS",
    "G_TRUE_PRESETS",
    "INITIAL_PRESETS",
    "DIFFUSION_PRESETS",
    "REACTION_PRESETS",
]


class ConfigError(ValueError):
    """A configuration file or value is invalid; message names the culprit."""


RHO_PRESETS = {
    "example1": lambda t: 2.0 + (2.0 * np.pi * t) ** 2,
    "one": lambda t: np.ones_like(np.asarray(t, dtype=float)),
    "zero": lambda t: np.zeros_like(np.asarray(t, dtype=float)),
}

G_TRUE_PRESETS = {
    "example1": lambda x, y: 0.5 * np.cos(np.pi * x) * np.cos(np.pi * y) + 1.0,
    "example2a": lambda x, y: 3.0 - np.exp(1.0 - 0.5 * (x + y)),
    "example2b": lambda x, y: 0.5 * np.cos(np.pi * x) * np.cos(2.0 * np.pi * y) + 1.0,
    "example2c": lambda x, y: 0.5 * np.sin(np.pi * x) * np.cos(np.pi * y) + 1.0,
    "sine": lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y),
    "zero": lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
}

# Initial values are clamped to the boundary after projection, so the sine
# preset stays admissible on non-unit rectangles too.
INITIAL_PRESETS = {
    "zero": lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
    "sine": lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y),
}

DIFFUSION_PRESETS = {
    "identity": lambda x, y: np.eye(2),
}

REACTION_PRESETS = {
    "zero": lambda x, y: 0.0,
    "one": lambda x, y: 1.0,
}


@dataclass(frozen=True)
class RunConfig:
    """One fully-specified run.

    Required keys are the core model sizes (T, N, nx, ny, alpha, q); all
    other keys default to the standard benchmark choices.  `frame` is the
    square [lo, hi]^2 whose complement is observed; None means the whole
    domain (no observation operator, forward runs only).  `epsilon` is the
    multiplicative noise level in percent.  The armijo/descent fields mirror
    InverseConfig; `refine` is the space-time refinement factor used when
    synthesizing observation data.
    """

    T: float
    N: int
    nx: int
    ny: int
    alpha: float
    q: float
    domain: tuple = (0.0, 1.0, 0.0, 1.0)
    diffusion: str = "identity"
    reaction: str = "zero"
    rho: str = "example1"
    g_true: str = "example1"
    initial: str = "zero"
    frame: tuple | None = None
    epsilon: float = 0.0
    seed: int = 0
    refine: int = 1
    beta: float = 1e-5
    max_iters: int = 100
    grad_tol: float = 1e-8
    armijo_c1: float = 1e-4
    armijo_ratio: float = 0.5
    armijo_step: float = 1.0
    max_backtracks: int = 40
    direction_mode: str = "fletcher-reeves"
    g_max: float | None = None
    out: str = "out"

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError(f"T must be positive, got {self.T}")
        if self.N < 1:
            raise ConfigError(f"N must be at least 1, got {self.N}")
        if self.nx < 2 or self.ny < 2:
            raise ConfigError(f"nx, ny must be at least 2, got {self.nx}, {self.ny}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.q < 0:
            raise ConfigError(f"q must be nonnegative, got {self.q}")
        x0, x1, y0, y1 = self.domain
        if not (x0 < x1 and y0 < y1):
            raise ConfigError(f"degenerate domain rectangle {self.domain}")
        for name, registry in (
            ("diffusion", DIFFUSION_PRESETS),
            ("reaction", REACTION_PRESETS),
            ("rho", RHO_PRESETS),
            ("g_true", G_TRUE_PRESETS),
            ("initial", INITIAL_PRESETS),
        ):
            value = getattr(self, name)
            if value not in registry:
                known = ", ".join(sorted(registry))
                raise ConfigError(f"unknown {name} preset {value!r} (known: {known})")
        if self.frame is not None:
            lo, hi = self.frame
            if not (x0 <= lo < hi <= x1 and y0 <= lo < hi <= y1):
                raise ConfigError(
                    f"frame [{lo}, {hi}]^2 must sit inside the domain {self.domain}"
                )
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be nonnegative, got {self.epsilon}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must fit in 64 bits, got {self.seed}")
        if self.refine < 1:
            raise ConfigError(f"refine must be at least 1, got {self.refine}")
        try:
            inverse_config(self)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


_REQUIRED = ("T", "N", "nx", "ny", "alpha", "q")
_KEY_ORDER = tuple(f.name for f in fields(RunConfig))
_INT_KEYS = frozenset({"N", "nx", "ny", "seed", "refine", "max_iters", "max_backtracks"})
_FLOAT_KEYS = frozenset(
    {"T", "alpha", "q", "epsilon", "beta", "grad_tol",
     "armijo_c1", "armijo_ratio", "armijo_step"}
)
_STR_KEYS = frozenset(
    {"diffusion", "reaction", "rho", "g_true", "initial", "direction_mode", "out"}
)


def _convert(key: str, value: str):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _STR_KEYS:
            return value
        if key == "domain":
            parts = tuple(float(v) for v in value.split(","))
            if len(parts) != 4:
                raise ValueError("expected x0,x1,y0,y1")
            return parts
        if key == "frame":
            if value.lower() == "none":
                return None
            parts = tuple(float(v) for v in value.split(","))
            if len(parts) != 2:
                raise ValueError("expected lo,hi")
            return parts
        if key == "g_max":
            return None if value.lower() == "none" else float(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})") from exc
    raise AssertionError(f"unhandled key {key!r}")


def parse_config(text: str) -> RunConfig:
    """Parse key=value lines ('#' starts a comment) into a validated RunConfig."""
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = key.strip(), value.strip()
        if key not in _KEY_ORDER:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for key {key!r}")
        entries[key] = value
    missing = [key for key in _REQUIRED if key not in entries]
    if missing:
        raise ConfigError("missing required keys: " + ", ".join(missing))
    return RunConfig(**{key: _convert(key, value) for key, value in entries.items()})


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="ascii"))


def _format(key: str, value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(f"{v:.17g}" for v in value)
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def canonical_manifest(config: RunConfig) -> str:
    """Render every field as one key=value line; parses back to an equal config."""
    return "".join(
        f"{key}={_format(key, getattr(config, key))}\n" for key in _KEY_ORDER
    )


def build_problem(config: RunConfig) -> ModelProblem:
    """Materialize mesh, matrices, grid and fields; g is the configured truth."""
    mesh = build_mesh(config.nx, config.ny, config.domain)
    mask = mask_from_frame(mesh, config.frame) if config.frame is not None else None
    coeffs = Coefficients(
        A=DIFFUSION_PRESETS[config.diffusion], c=REACTION_PRESETS[config.reaction]
    )
    system = assemble(mesh, coeffs, mask)
    grid = TimeGrid(T=config.T, N=config.N)
    rho = TimeSeries.from_function(grid, RHO_PRESETS[config.rho])
    g_true = project_function(mesh, G_TRUE_PRESETS[config.g_true])
    a = zero_boundary(mesh, project_function(mesh, INITIAL_PRESETS[config.initial]))
    return ModelProblem(mesh, grid, system, config.alpha, config.q, rho, g_true, a)


def inverse_config(config: RunConfig) -> InverseConfig:
    return InverseConfig(
        beta=config.beta,
        g_max=config.g_max,
        max_iters=config.max_iters,
        grad_tol=config.grad_tol,
        armijo_c1=config.armijo_c1,
        armijo_ratio=config.armijo_ratio,
        armijo_step=config.armijo_step,
        max_backtracks=config.max_backtracks,
        direction_mode=config.direction_mode,
    )
