"""Uncertainty-ellipse geometry: construction, intersection areas, global utility.

The per-target score of the radar network is the area of the common
intersection of every radar's position-uncertainty ellipse for that target;
the global utility is the mean over targets of exp(-area / area_scale).

Intersection areas are computed by polygonizing each ellipse (inscribed,
counterclockwise) and clipping the convex polygons sequentially. Two kernel
backends exist: a compiled Cython core and a pure numpy fallback. The
compiled one is preferred; set NETRADAR_PURE_GEOMETRY=1 to force the
fallback.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import _purepy

if os.environ.get("NETRADAR_PURE_GEOMETRY"):
    _impl = _purepy
else:
    try:
        from . import _core as _impl
    except ImportError:
        _impl = _purepy

BACKEND = _impl.BACKEND_NAME

DEFAULT_VERTICES = 64
DEGENERATE_EIGENVALUE_FLOOR = 1e-12


class GeometryError(ValueError):
    """Raised for invalid geometric inputs (non-SPD covariance, bad shapes)."""


def _check_spd_2x2(cov):
    """Validate symmetry and positive(-ish) spectrum; returns eigh decomposition."""
    cov = np.asarray(cov, dtype=np.float64)
    if cov.shape != (2, 2):
        raise GeometryError(f"covariance must be 2x2, got shape {cov.shape}")
    scale = max(1.0, float(np.abs(cov).max()))
    if abs(cov[0, 1] - cov[1, 0]) > 1e-9 * scale:
        raise GeometryError(
            f"covariance not symmetric: off-diagonal {cov[0, 1]!r} vs {cov[1, 0]!r}"
        )
    evals, evecs = np.linalg.eigh(0.5 * (cov + cov.T))
    if evals[0] < -1e-9 * scale:
        raise GeometryError(f"covariance not positive definite: eigenvalues {evals}")
    return np.maximum(evals, DEGENERATE_EIGENVALUE_FLOOR), evecs


@dataclass(frozen=True)
class Ellipse:
    """Confidence region {x : (x-center)^T cov^-1 (x-center) <= scale_k^2}."""

    center: np.ndarray
    cov: np.ndarray
    scale_k: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        if self.center.shape != (2,):
            raise GeometryError(f"center must be a 2-vector, got shape {self.center.shape}")
        if self.scale_k <= 0:
            raise GeometryError(f"scale_k must be positive, got {self.scale_k}")
        evals, evecs = _check_spd_2x2(self.cov)
        cov = (evecs * evals) @ evecs.T
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))

    @property
    def transform(self):
        """Linear map taking the unit circle onto the ellipse boundary (det > 0)."""
        evals, evecs = np.linalg.eigh(self.cov)
        return self.scale_k * (evecs * np.sqrt(np.maximum(evals, 0.0))) @ evecs.T

    @property
    def area(self):
        """Exact area pi * k^2 * sqrt(det cov)."""
        return np.pi * self.scale_k**2 * float(np.sqrt(max(np.linalg.det(self.cov), 0.0)))

    def contains(self, points):
        """Membership test for an (..., 2) array of points."""
        diff = np.asarray(points, dtype=np.float64) - self.center
        inv = np.linalg.inv(self.cov)
        q = np.einsum("...i,ij,...j->...", diff, inv, diff)
        return q <= self.scale_k**2

    def bounding_box(self):
        """Axis-aligned (xmin, ymin, xmax, ymax) of the exact ellipse."""
        half = self.scale_k * np.sqrt(np.diag(self.cov))
        return (
            self.center[0] - half[0],
            self.center[1] - half[1],
            self.center[0] + half[0],
            self.center[1] + half[1],
        )


@dataclass(frozen=True)
class ConvexPolygon:
    """Counterclockwise convex polygon; degenerate (< 3 vertices) means empty."""

    vertices: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "vertices", np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)
        )

    @property
    def area(self):
        return max(_impl.polygon_area(self.vertices), 0.0)

    def clipped_by(self, other):
        return ConvexPolygon(_impl.clip_convex(self.vertices, other.vertices))


@dataclass(frozen=True)
class UtilityRecord:
    """Per-target intersection areas and the resulting global utility."""

    per_target_area: np.ndarray
    utility: float
    area_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(
            self, "per_target_area", np.asarray(self.per_target_area, dtype=np.float64)
        )


def ellipse_from_covariance(center, pos_cov, scale_k):
    """Build the confidence ellipse of a position covariance.

    Rejects non-SPD covariances with a diagnostic; eigenvalues below the
    degeneracy floor are clamped so downstream polygon clipping stays sound.
    """
    return Ellipse(center=np.asarray(center, dtype=np.float64), cov=pos_cov, scale_k=scale_k)


def polygonize(ellipse, n_vertices=DEFAULT_VERTICES):
    """Inscribed CCW polygon approximation of an ellipse."""
    if n_vertices < 8:
        raise GeometryError(f"need at least 8 vertices, got {n_vertices}")
    return ConvexPolygon(_impl.ellipse_polygon(ellipse.center, ellipse.transform, n_vertices))


def intersection_area(ellipses, vertices_per_ellipse=DEFAULT_VERTICES):
    """Area of the common intersection of a nonempty list of ellipses.

    Each ellipse is polygonized with vertices_per_ellipse vertices and the
    convex polygons are clipped sequentially; an empty intersection gives 0.
    """
    if len(ellipses) == 0:
        raise GeometryError("intersection_area requires at least one ellipse")
    if vertices_per_ellipse < 8:
        raise GeometryError(f"need at least 8 vertices per ellipse, got {vertices_per_ellipse}")
    centers = np.stack([e.center for e in ellipses])
    transforms = np.stack([e.transform for e in ellipses])
    return float(_impl.intersection_area_kernel(centers, transforms, int(vertices_per_ellipse)))


def spd_sqrt_2x2(mats):
    """Symmetric square root of a batch of SPD 2x2 matrices, closed form.

    For SPD M: sqrt(M) = (M + sqrt(det M) I) / sqrt(trace M + 2 sqrt(det M)).
    Shapes (..., 2, 2) in and out; no per-matrix LAPACK calls.
    """
    m = np.asarray(mats, dtype=np.float64)
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    s = np.sqrt(np.maximum(det, 0.0))
    t = np.sqrt(np.maximum(m[..., 0, 0] + m[..., 1, 1] + 2.0 * s, 1e-300))
    out = m.copy()
    out[..., 0, 0] += s
    out[..., 1, 1] += s
    return out / t[..., None, None]


def intersection_areas_batch(centers, transforms, vertices_per_ellipse=DEFAULT_VERTICES):
    """Vectorized intersection areas for B groups of E ellipses.

    centers has shape (B, E, 2) and transforms (B, E, 2, 2), where each
    transform maps the unit circle onto its ellipse (confidence multiplier
    folded in). Returns a (B,) array of areas.
    """
    return np.asarray(
        _impl.intersection_areas_batch(centers, transforms, int(vertices_per_ellipse))
    )


# exp() underflows to exactly 0.0 below about -745; flooring the exponent
# keeps the mathematically strict "utility > 0" true in float64 while only
# changing values already smaller than 1e-261
UTILITY_EXP_FLOOR = -600.0


def utility(per_target_areas, area_scale=1.0):
    """Global performance: mean over targets of exp(-area / area_scale)."""
    areas = np.asarray(per_target_areas, dtype=np.float64)
    if areas.ndim != 1 or areas.size == 0:
        raise GeometryError("per-target areas must be a nonempty 1-D sequence")
    if area_scale <= 0:
        raise GeometryError(f"area_scale must be positive, got {area_scale}")
    if np.any(areas < 0):
        raise GeometryError("areas must be nonnegative")
    return float(np.mean(np.exp(np.maximum(-areas / area_scale,
                                           UTILITY_EXP_FLOOR))))


def utility_record(per_target_areas, area_scale=1.0):
    return UtilityRecord(
        per_target_area=np.asarray(per_target_areas, dtype=np.float64),
        utility=utility(per_target_areas, area_scale),
        area_scale=area_scale,
    )
