"""Run configuration: one JSON file plus flag overrides, flags win.

The effective configuration (with an auto-resolved truncation depth
filled in) is what every command emits next to its outputs, together
with a SHA-256 hash of its canonical JSON form, so any artifact can be
traced back to the exact parameters and seed that produced it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from typing import Any, Mapping

from .decomposition import solve_truncation_depth
from .driver import HurstParams, TimeGrid, make_grid, make_hurst_params
from .optimizer import MarketParams

__all__ = ["ConfigError", "RunConfig", "DEFAULT_TAIL_TOL"]

DEFAULT_TAIL_TOL = 1.0e-4

# JSON key -> attribute name ("lambda" is reserved in Python)
_KEY_TO_ATTR = {
    "H": "H",
    "s": "s",
    "T": "T",
    "L": "L",
    "n_past": "n_past",
    "n_future": "n_future",
    "mu": "mu",
    "sigma": "sigma",
    "lambda": "lam",
    "k": "k",
    "x0": "x0",
    "s0": "s0",
    "seed": "seed",
    "replicas": "replicas",
    "output_dir": "output_dir",
}
_ATTR_TO_KEY = {v: k for k, v in _KEY_TO_ATTR.items()}
_INT_KEYS = {"n_past", "n_future", "seed", "replicas"}


class ConfigError(ValueError):
    """Invalid or unknown configuration input."""


@dataclass(frozen=True)
class RunConfig:
    H: float = 0.75
    s: float = 0.0
    T: float = 1.0
    L: float | str = "auto"
    n_past: int = 2000
    n_future: int = 200
    mu: float = 0.1
    sigma: float = 1.0
    lam: float = 1.0
    k: float = 0.1
    x0: float = 0.0
    s0: float = 1.0
    seed: int = 20260810
    replicas: int = 100_000
    output_dir: str = "out"

    def __post_init__(self) -> None:
        if not (0.5 < self.H < 1.0):
            raise ConfigError(f"H must lie in (1/2, 1), got {self.H}")
        if not self.T > self.s:
            raise ConfigError(f"T={self.T} must exceed s={self.s}")
        if isinstance(self.L, str):
            if self.L != "auto":
                raise ConfigError(f'L must be a positive number or "auto", got {self.L!r}')
        elif not self.L > 0.0:
            raise ConfigError(f"L must be positive, got {self.L}")
        if self.n_past < 1:
            raise ConfigError(f"n_past must be >= 1, got {self.n_past}")
        if self.n_future < 2:
            raise ConfigError(f"n_future must be >= 2, got {self.n_future}")
        if not self.lam > 0.0:
            raise ConfigError(f"lambda must be positive, got {self.lam}")
        if not self.k > 0.0:
            raise ConfigError(f"k must be positive, got {self.k}")
        if self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed}")
        if self.replicas < 1:
            raise ConfigError(f"replicas must be >= 1, got {self.replicas}")

    # -- derived objects ---------------------------------------------------

    def hurst(self) -> HurstParams:
        return make_hurst_params(self.H)

    def resolved(self, tail_tol: float = DEFAULT_TAIL_TOL) -> "RunConfig":
        """Fill in an auto truncation depth; idempotent when L is numeric."""
        if self.L == "auto":
            L = solve_truncation_depth(self.T - self.s, self.hurst(), tol=tail_tol)
            return replace(self, L=L)
        return self

    def grid(self) -> TimeGrid:
        cfg = self.resolved()
        return make_grid(cfg.s, cfg.T, float(cfg.L), cfg.n_past, cfg.n_future)

    def market(self) -> MarketParams:
        return MarketParams(
            mu=self.mu, sigma=self.sigma, lam=self.lam, k=self.k,
            s0=self.s0, x0=self.x0,
        )

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for key, attr in _KEY_TO_ATTR.items():
            out[key] = getattr(self, attr)
        return out

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    # -- construction ------------------------------------------------------

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "RunConfig":
        unknown = set(data) - set(_KEY_TO_ATTR)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            attr = _KEY_TO_ATTR[key]
            if key in _INT_KEYS:
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ConfigError(f"{key} must be an integer, got {value!r}")
                kwargs[attr] = value
            elif key == "L":
                kwargs[attr] = value if isinstance(value, str) else float(value)
            elif key == "output_dir":
                if not isinstance(value, str):
                    raise ConfigError(f"output_dir must be a string, got {value!r}")
                kwargs[attr] = value
            else:
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f"{key} must be a number, got {value!r}")
                kwargs[attr] = float(value)
        return cls(**kwargs)

    @classmethod
    def load(
        cls, path: str | None = None, overrides: Mapping[str, Any] | None = None
    ) -> "RunConfig":
        """Defaults, then the JSON file, then flag overrides."""
        data = cls().to_dict()
        if path is not None:
            try:
                with open(path, encoding="utf-8") as fh:
                    loaded = json.load(fh)
            except OSError as exc:
                raise ConfigError(f"cannot read config file {path}: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"malformed config file {path}: {exc}") from exc
            if not isinstance(loaded, dict):
                raise ConfigError("config file must hold a JSON object")
            unknown = set(loaded) - set(_KEY_TO_ATTR)
            if unknown:
                raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
            data.update(loaded)
        if overrides:
            data.update(overrides)
        return cls.from_mapping(data)
