"""Named parameter sets for one-command reproduction of the reference runs."""

from __future__ import annotations

import numpy as np

from .admissible import AdmissibleMatrix, build_canonical, build_q3
from .cone import canonical_anchor
from .model import ModelParams

#: truncation boxes of the PDE study, all of side length 4
PDE_BOXES = {
    "box1": ((0.0, 4.0), (0.0, 4.0)),
    "box2": ((-0.5, 3.5), (-0.5, 3.5)),
    "box3": ((-0.5, 3.5), (0.0, 4.0)),
}

#: family parameters of the three-dimensional sample-cloud runs;
#: the first two lie inside the feasibility intervals, the third does not.
#: The violation in fig3c is deliberately strong: mild ones produce a cone
#: that still contains the reachable states, so no escape would be visible.
FIG3_FAMILY = {
    "fig3a": (1.0, 2.0),
    "fig3b": (1.1, 1.5),
    "fig3c": (2.0, 2.0),
}

#: per-preset default grids (T, M, n_paths) at desk scale
DEFAULT_GRIDS = {
    "table1": (1.0, 1000, 1000),
    "fig1": (1.0, 1000, 100000),
    "fig2": (10.0, 10000, 1000),
    "fig3a": (10.0, 10000, 1000),
    "fig3b": (10.0, 10000, 1000),
    "fig3c": (10.0, 10000, 1000),
}


def params_table1() -> ModelParams:
    """Two-factor volatility parameters of the PDE numerical example."""
    return ModelParams(
        w=(0.4, 1.8), x=(0.1, 3.5), theta=0.8, lam=1.2, nu=0.7, v0=(0.2, 0.3)
    )


def params_fig2() -> ModelParams:
    """Two-factor sample-cloud parameters, anchor proportional to 1/x."""
    w = np.array([1.0, 2.0])
    x = np.array([1.0, 10.0])
    return ModelParams(
        w=w, x=x, theta=0.02, lam=0.3, nu=0.3, v0=canonical_anchor(w, x, 0.02)
    )


def params_fig3() -> ModelParams:
    """Three-factor sample-cloud parameters, anchor proportional to 1/x."""
    w = np.array([1.0, 2.0, 3.0])
    x = np.array([1.0, 5.0, 25.0])
    return ModelParams(
        w=w, x=x, theta=0.02, lam=0.3, nu=0.3, v0=canonical_anchor(w, x, 0.02)
    )


def preset(name: str) -> tuple[ModelParams, AdmissibleMatrix]:
    """Resolve a preset name to its parameters and transform matrix."""
    if name == "table1":
        params = params_table1()
        return params, build_canonical(params.w, params.x)
    if name in ("fig1", "fig2"):
        params = params_fig2()
        return params, build_canonical(params.w, params.x)
    if name in FIG3_FAMILY:
        params = params_fig3()
        a, b = FIG3_FAMILY[name]
        return params, build_q3(params.w, params.x, a, b)
    raise ValueError(f"unknown preset {name!r}, expected one of "
                     f"table1, fig1, fig2, fig3a, fig3b, fig3c")
