"""Model parameters, the exponential-sum kernel and the aggregation map.

Everything downstream (matrix construction, simulation, PDE solves) consumes
a validated :class:`ModelParams`, so all precondition checks live here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

Array = NDArray[np.float64]


def _vector(values, name: str) -> Array:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Multifactor square-root volatility model.

    The model carries positive weights ``w``, positive non-decreasing
    mean-reversion nodes ``x`` (equal nodes are allowed), a mean level
    ``theta >= 0``, an aggregate reversion rate ``lam``, a vol-of-vol
    ``nu >= 0`` and an anchor vector ``v0`` for the factor mean reversion.
    The driving quantity everywhere is the aggregate ``w @ y``.
    """

    w: Array
    x: Array
    theta: float
    lam: float
    nu: float
    v0: Array

    def __post_init__(self):
        object.__setattr__(self, "w", _vector(self.w, "w"))
        object.__setattr__(self, "x", _vector(self.x, "x"))
        object.__setattr__(self, "v0", _vector(self.v0, "v0"))
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "nu", float(self.nu))
        if self.x.size != self.w.size:
            raise ValueError(f"w and x must have equal length, got {self.w.size} and {self.x.size}")
        if self.v0.size != self.w.size:
            raise ValueError(f"v0 must have length {self.w.size}, got {self.v0.size}")
        if np.any(self.w <= 0.0):
            raise ValueError("all weights w must be strictly positive")
        if self.x[0] <= 0.0 or np.any(np.diff(self.x) < 0.0):
            raise ValueError("nodes x must be strictly positive and non-decreasing")
        if self.theta < 0.0:
            raise ValueError(f"theta must be >= 0, got {self.theta}")
        if self.nu < 0.0:
            raise ValueError(f"nu must be >= 0, got {self.nu}")

    @property
    def n_factors(self) -> int:
        return self.w.size

    @property
    def wbar(self) -> float:
        """Total weight, the kernel value at time zero."""
        return float(np.sum(self.w))

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        try:
            return cls(
                w=data["w"],
                x=data["x"],
                theta=data["theta"],
                lam=data["lambda"],
                nu=data["nu"],
                v0=data["v0"],
            )
        except KeyError as exc:
            raise ValueError(f"parameter file is missing key {exc}") from exc

    @classmethod
    def from_json(cls, path: str | Path) -> "ModelParams":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "w": self.w.tolist(),
            "x": self.x.tolist(),
            "theta": self.theta,
            "lambda": self.lam,
            "nu": self.nu,
            "v0": self.v0.tolist(),
        }


def load_params(path: str | Path) -> ModelParams:
    """Read a JSON parameter file with keys w, x, theta, lambda, nu, v0."""
    return ModelParams.from_json(path)


def kernel_eval(params: ModelParams, t):
    """Evaluate the exponential-sum kernel ``sum_i w_i exp(-x_i t)``.

    Accepts a scalar or an array of times, all of which must be >= 0.
    The result is strictly positive and non-increasing in t.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0):
        raise ValueError("kernel_eval requires t >= 0")
    vals = np.exp(-np.multiply.outer(t_arr, params.x)) @ params.w
    return float(vals) if np.isscalar(t) or t_arr.ndim == 0 else vals


def aggregate(params: ModelParams, y) -> float:
    """Weighted aggregate ``w @ y`` of a factor state vector."""
    y_arr = np.asarray(y, dtype=float)
    if y_arr.shape != (params.n_factors,):
        raise ValueError(f"state must have shape ({params.n_factors},), got {y_arr.shape}")
    return float(params.w @ y_arr)
