"""The invariant state-space cone and its membership and boundary checks.

The cone is the image of the non-negative orthant under the inverse of an
admissible matrix, optionally shifted so that an arbitrary anchor with the
same aggregate becomes reachable.  Membership, the canonical proportional
anchor, the non-negativity of the inverse rate matrix and the tangency /
inward-drift conditions on the orthant boundary are all made executable
here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .admissible import AdmissibleMatrix
from .model import ModelParams

Array = NDArray[np.float64]

#: default absolute membership tolerance on transformed coordinates
MEMBERSHIP_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ConeDomain:
    """State-space cone: all y with Q @ (y - shift) in the non-negative orthant."""

    matrix: AdmissibleMatrix
    shift: Array = None
    tol: float = MEMBERSHIP_TOL

    def __post_init__(self):
        n = self.matrix.n
        shift = np.zeros(n) if self.shift is None else np.asarray(self.shift, dtype=float)
        if shift.shape != (n,):
            raise ValueError(f"shift must have shape ({n},), got {shift.shape}")
        agg = float(self.matrix.w @ shift)
        scale = max(1.0, float(np.linalg.norm(self.matrix.w) * np.linalg.norm(shift)))
        if abs(agg) > 1e-12 * scale:
            raise ValueError(f"shift must have zero aggregate, got w @ shift = {agg}")
        object.__setattr__(self, "shift", shift)

    @classmethod
    def for_initial_state(cls, matrix: AdmissibleMatrix, y0, tol: float = MEMBERSHIP_TOL) -> "ConeDomain":
        """Cone shifted by y0 minus the proportional anchor with equal aggregate."""
        y0_arr = np.asarray(y0, dtype=float)
        agg = float(matrix.w @ y0_arr)
        if agg < 0.0:
            raise ValueError(f"initial state must have non-negative aggregate, got {agg}")
        anchor = canonical_anchor(matrix.w, matrix.x, agg)
        return cls(matrix=matrix, shift=y0_arr - anchor, tol=tol)


def canonical_anchor(w, x, Y0: float) -> Array:
    """Anchor proportional to 1/x whose aggregate equals Y0.

    Returns mu / x componentwise with mu = Y0 / sum(w_i / x_i), the unique
    vector of this shape satisfying w @ anchor = Y0.
    """
    w_arr = np.asarray(w, dtype=float)
    x_arr = np.asarray(x, dtype=float)
    if float(Y0) < 0.0:
        raise ValueError(f"aggregate must be >= 0, got {Y0}")
    mu = float(Y0) / float(np.sum(w_arr / x_arr))
    return mu / x_arr


def transformed(domain: ConeDomain, y) -> Array:
    """Coordinates Q @ (y - shift) of a point; all must be >= 0 inside the cone."""
    y_arr = np.asarray(y, dtype=float)
    if y_arr.shape != (domain.matrix.n,):
        raise ValueError(f"point must have shape ({domain.matrix.n},), got {y_arr.shape}")
    return domain.matrix.Q @ (y_arr - domain.shift)


def contains(domain: ConeDomain, y) -> bool:
    """Membership test at the domain tolerance."""
    return bool(np.min(transformed(domain, y)) >= -domain.tol)


def canonical_halfspaces(w) -> list[tuple[Array, float]]:
    """Halfspace description of the canonical cone with zero shift.

    Returns pairs (coefficients, bound) meaning coefficients @ y >= bound:
    the aggregate inequality w @ y >= 0 followed by, for each leading block,
    w_1 y_1 + ... + w_i y_i >= (w_1 + ... + w_i) y_{i+1}.
    """
    w_arr = np.asarray(w, dtype=float)
    n = w_arr.size
    out: list[tuple[Array, float]] = [(w_arr.copy(), 0.0)]
    for i in range(n - 1):
        coeff = np.zeros(n)
        coeff[: i + 1] = w_arr[: i + 1]
        coeff[i + 1] = -np.sum(w_arr[: i + 1])
        out.append((coeff, 0.0))
    return out


def m_matrix_inverse_check(matrix: AdmissibleMatrix, tol: float = 1e-12) -> bool:
    """True when every entry of Q @ diag(1/x) @ Q^-1 is >= -tol.

    For an admissible matrix the rate matrix is an M-matrix, so its inverse
    is entrywise non-negative; this implies the canonical anchor lies inside
    the cone.  Non-admissible matrices are still evaluable, the guarantee is
    simply lost.
    """
    inv_rate = (matrix.Q / matrix.x) @ matrix.Qinv
    return bool(np.min(inv_rate) >= -tol)


@dataclass(frozen=True)
class BoundaryCheckReport:
    """Worst-case drift and diffusion components over sampled boundary points."""

    n_samples: int
    max_diffusion_abs: float
    min_drift: float
    worst_face: int
    n_violations: int
    drift_tol: float

    @property
    def ok(self) -> bool:
        return self.n_violations == 0


def boundary_condition_check(
    matrix: AdmissibleMatrix,
    params: ModelParams,
    mu: float = 0.0,
    n_samples: int = 1000,
    seed: int = 0,
    drift_tol: float = 1e-10,
) -> BoundaryCheckReport:
    """Audit tangency and inward drift on every face of the orthant.

    For each face i the transformed dynamics must have a vanishing noise
    component and a drift component >= -drift_tol at points with the i-th
    coordinate set to zero.  Samples the free coordinates uniformly over a
    box matched to simulation magnitudes (the condition is linear, so any
    positive box is conclusive) and always includes the corner.
    """
    if mu < 0.0:
        raise ValueError(f"mu must be >= 0, got {mu}")
    n = matrix.n
    g = matrix.G
    wbar = float(np.sum(matrix.w))
    hi = 10.0 * max(float(np.max(params.v0)), params.theta / float(np.min(params.x)))
    if hi <= 0.0:
        hi = 1.0
    rng = np.random.default_rng(seed)

    max_diff = 0.0
    min_drift = np.inf
    worst_face = 0
    n_violations = 0
    for face in range(n):
        pts = rng.uniform(0.0, hi, size=(n_samples, n))
        pts[:, face] = 0.0
        pts[0] = 0.0  # corner belongs to every face
        z_last = pts[:, n - 1]
        drift = -(pts @ g.T) + np.outer(
            wbar * (params.theta - params.lam * z_last + mu), np.eye(n)[n - 1]
        )
        sigma_face = params.nu * wbar * np.sqrt(z_last) if face == n - 1 else np.zeros(n_samples)
        max_diff = max(max_diff, float(np.max(np.abs(sigma_face))))
        face_min = float(np.min(drift[:, face]))
        if face_min < min_drift:
            min_drift = face_min
            worst_face = face
        n_violations += int(np.sum(drift[:, face] < -drift_tol))

    return BoundaryCheckReport(
        n_samples=n_samples,
        max_diffusion_abs=max_diff,
        min_drift=float(min_drift),
        worst_face=worst_face,
        n_violations=n_violations,
        drift_tol=drift_tol,
    )
