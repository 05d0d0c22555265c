"""Tangent-line primitives: distances, projections, curvature and alignment terms.

A tangent line is an infinite line given by an anchor point and a unit
direction. All formulas treat lines as unoriented (flipping the direction
changes nothing). Every function broadcasts over leading batch dimensions, so
a ``TangentLine`` whose arrays have shape ``(n, d)`` represents a whole field
of n tangents and the operations below evaluate vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

# Clamp for the curvature denominator: coincident projected points would
# otherwise divide by zero. Far below any meaningful inter-pixel distance.
DENOM_CLAMP = 1e-6

# Unit-norm tolerance maintained by TangentLine construction.
UNIT_TOL = 1e-12


@dataclass(frozen=True)
class TangentLine:
    """Infinite line through ``anchor`` with unit ``direction`` (d in {2, 3}).

    Arrays may carry leading batch dimensions; the trailing axis is the
    spatial dimension. Directions are renormalized on construction.
    """

    anchor: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        anchor = np.asarray(self.anchor, dtype=float)
        direction = np.asarray(self.direction, dtype=float)
        if anchor.shape != direction.shape:
            raise ConfigurationError(
                f"anchor shape {anchor.shape} != direction shape {direction.shape}"
            )
        d = anchor.shape[-1] if anchor.ndim else 0
        if d not in (2, 3):
            raise ConfigurationError(f"tangent lines must live in 2 or 3 dims, got {d}")
        norm = np.linalg.norm(direction, axis=-1, keepdims=True)
        if np.any(norm == 0.0):
            raise ConfigurationError("zero direction vector")
        # dividing an already-unit row by its ~1.0 norm would perturb last
        # bits; skip those so untouched tangents stay bitwise identical
        norm = np.where(np.abs(norm - 1.0) <= UNIT_TOL, 1.0, norm)
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "direction", direction / norm)

    @property
    def dim(self) -> int:
        return self.anchor.shape[-1]

    def __getitem__(self, idx) -> "TangentLine":
        return TangentLine(self.anchor[idx], self.direction[idx])

    def with_updates(self, idx, anchor, direction) -> "TangentLine":
        """Copy with rows ``idx`` replaced (renormalizes)."""
        a = self.anchor.copy()
        v = self.direction.copy()
        a[idx] = anchor
        v[idx] = direction
        return TangentLine(a, v)


@dataclass(frozen=True)
class CurvatureTerm:
    """Pairwise curvature penalty: ``absolute`` or ``squared`` exponent.

    ``epsilon`` enters only the reweighting that turns squared residuals into
    an absolute-curvature approximation (see solver.abs_curvature_weights).
    """

    kind: str = "squared"
    epsilon: float = 0.1

    def __post_init__(self):
        if self.kind not in ("absolute", "squared"):
            raise ConfigurationError(f"unknown curvature kind {self.kind!r}")
        if self.epsilon < 0:
            raise ConfigurationError("epsilon must be non-negative")


def _rejection(line: TangentLine, p: np.ndarray) -> np.ndarray:
    """Component of (p - anchor) orthogonal to the line direction."""
    r = np.asarray(p, dtype=float) - line.anchor
    along = np.sum(r * line.direction, axis=-1, keepdims=True)
    return r - along * line.direction


def point_line_distance(line: TangentLine, p) -> np.ndarray:
    """Euclidean distance from point(s) ``p`` to the infinite line(s)."""
    return np.linalg.norm(_rejection(line, p), axis=-1)


def project_onto_line(line: TangentLine, p) -> np.ndarray:
    """Orthogonal projection of ``p`` onto the line (the denoised point)."""
    return np.asarray(p, dtype=float) - _rejection(line, p)


def truncated_distance(line: TangentLine, p, tau: float) -> np.ndarray:
    """Hinge distance max(0, dist - tau): no penalty within ``tau`` of the line."""
    if tau < 0:
        raise ConfigurationError("tau must be non-negative")
    return np.maximum(0.0, point_line_distance(line, p) - tau)


def misalignment(line: TangentLine, g) -> np.ndarray:
    """Alignment error ||g|| sin(angle(direction, g)).

    Equals the norm of the rejection of ``g`` from the line direction, so a
    zero prior contributes zero and the sign of the direction is irrelevant.
    """
    g = np.asarray(g, dtype=float)
    along = np.sum(g * line.direction, axis=-1, keepdims=True)
    return np.linalg.norm(g - along * line.direction, axis=-1)


def curvature_pair(
    line_i: TangentLine,
    line_j: TangentLine,
    p_i,
    p_j,
    term: CurvatureTerm,
) -> np.ndarray:
    """Pairwise curvature proxy between two tangents at points p_i, p_j.

    absolute: (||l_i - p_j|| + ||l_j - p_i||) / ||p_i - p_j||
    squared:  (||l_i - p_j||^2 + ||l_j - p_i||^2) / ||p_i - p_j||^2

    The denominator is clamped at DENOM_CLAMP so coincident points stay
    finite. ``p_i``/``p_j`` are whatever points the caller deems current
    (ordinarily the projections of the observed sites onto their tangents);
    the function is symmetric under swapping (i, j) roles.
    """
    p_i = np.asarray(p_i, dtype=float)
    p_j = np.asarray(p_j, dtype=float)
    d_ij = point_line_distance(line_i, p_j)
    d_ji = point_line_distance(line_j, p_i)
    sep = np.linalg.norm(p_i - p_j, axis=-1)
    if term.kind == "absolute":
        return (d_ij + d_ji) / np.maximum(sep, DENOM_CLAMP)
    return (d_ij**2 + d_ji**2) / np.maximum(sep**2, DENOM_CLAMP**2)


def directions_to_angles(direction: np.ndarray) -> np.ndarray:
    """Minimal angle parameterization of unit directions.

    2D -> (theta,) with direction (cos t, sin t); 3D -> (azimuth, elevation)
    with direction (cos e cos a, cos e sin a, sin e).
    """
    direction = np.asarray(direction, dtype=float)
    d = direction.shape[-1]
    if d == 2:
        return np.arctan2(direction[..., 1], direction[..., 0])[..., None]
    azim = np.arctan2(direction[..., 1], direction[..., 0])
    elev = np.arcsin(np.clip(direction[..., 2], -1.0, 1.0))
    return np.stack([azim, elev], axis=-1)


def angles_to_directions(angles: np.ndarray, dim: int) -> np.ndarray:
    """Inverse of :func:`directions_to_angles` (always unit norm)."""
    angles = np.asarray(angles, dtype=float)
    if dim == 2:
        t = angles[..., 0]
        return np.stack([np.cos(t), np.sin(t)], axis=-1)
    a, e = angles[..., 0], angles[..., 1]
    ce = np.cos(e)
    return np.stack([ce * np.cos(a), ce * np.sin(a), np.sin(e)], axis=-1)
