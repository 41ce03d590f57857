"""Objective-space bookkeeping: dominance, min-max scaling, hypervolume.

Hypervolume is computed exactly for three objectives by slicing along the
first axis and sweeping a 2-D staircase in each slab. All objectives are
minimized and the reference point must be strictly worse than any point
that is meant to contribute.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def dominates(a: np.ndarray, b: np.ndarray) -> bool:
    """True when ``a`` is no worse everywhere and strictly better somewhere."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return bool(np.all(a <= b) and np.any(a < b))


@dataclass(frozen=True)
class NormalizationBounds:
    """Per-axis ideal (min) and nadir (max) used for min-max scaling."""

    ideal: np.ndarray
    nadir: np.ndarray

    @classmethod
    def from_points(cls, points: np.ndarray) -> "NormalizationBounds":
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or len(points) == 0:
            raise ValueError("bounds need a non-empty 2-D point set")
        return cls(points.min(axis=0), points.max(axis=0))

    def merged(self, other: "NormalizationBounds") -> "NormalizationBounds":
        return NormalizationBounds(
            np.minimum(self.ideal, other.ideal), np.maximum(self.nadir, other.nadir)
        )

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Scale points into [0, 1] per axis; a degenerate axis maps to 0."""
        points = np.asarray(points, dtype=float)
        span = self.nadir - self.ideal
        safe = np.where(span > 0, span, 1.0)
        scaled = (points - self.ideal) / safe
        return np.where(span > 0, scaled, 0.0)


def normalize(points: np.ndarray) -> tuple[np.ndarray, NormalizationBounds]:
    """Min-max scale a point set by its own per-axis extremes."""
    bounds = NormalizationBounds.from_points(points)
    return bounds.apply(points), bounds


def _staircase_area(yz: np.ndarray, ref_y: float, ref_z: float) -> float:
    # 2-D dominated area: walk points by ascending y, credit each z improvement
    order = np.lexsort((yz[:, 1], yz[:, 0]))
    area = 0.0
    best_z = ref_z
    for y, z in yz[order]:
        if z < best_z:
            area += (ref_y - y) * (best_z - z)
            best_z = z
    return float(area)


def hypervolume(points: np.ndarray, ref: np.ndarray) -> float:
    """Exact volume dominated by ``points`` and bounded by ``ref`` (3-D).

    Points not strictly below the reference on every axis contribute
    nothing and are dropped; duplicates cannot change the result. Empty
    input gives 0.
    """
    ref = np.asarray(ref, dtype=float)
    points = np.asarray(points, dtype=float)
    if ref.shape != (3,):
        raise ValueError(f"reference point must be 3-D, got shape {ref.shape}")
    if points.size == 0:
        return 0.0
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError(f"points must have shape [n, 3], got {points.shape}")
    if not np.isfinite(points).all() or not np.isfinite(ref).all():
        raise ValueError("points and reference must be finite")

    points = points[np.all(points < ref, axis=1)]
    if len(points) == 0:
        return 0.0
    points = np.unique(points, axis=0)  # sorted by x, dedup

    xs = np.unique(points[:, 0])
    edges = np.append(xs, ref[0])
    volume = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        active = points[points[:, 0] <= lo][:, 1:]
        volume += _staircase_area(active, ref[1], ref[2]) * (hi - lo)
    return float(volume)
