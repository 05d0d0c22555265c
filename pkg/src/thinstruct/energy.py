"""Energy assembly: unary/pairwise potentials, total and expected energy.

The model couples per-site tangent lines L with binary indicators X (or
their mean-field marginals Q):

    E(L, X) = sum_pairs w_ij * psi_ij * x_i * x_j + sum_i psi_i * x_i

with psi_ij = kappa(l_i, l_j) - gamma evaluated at the denoised points and
psi_i = d_plus(l_i, p~_i)^2 / sigma_i_eff^2 + lambda_i + beta * m(l_i, g_i)^pow.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ConfigurationError
from .geometry import (
    CurvatureTerm,
    TangentLine,
    curvature_pair,
    misalignment,
    point_line_distance,
    project_onto_line,
)


@dataclass(frozen=True)
class ProblemSpec:
    """Energy configuration.

    ``mode`` is "detection" (indicators free, truncated distance by default)
    or "point_cloud" (all indicators fixed to 1, Euclidean distance, and
    gamma = beta = 0 by definition). ``distance`` may be given explicitly
    ("truncated" or "euclidean"); None picks the mode default. ``k``
    multiplies per-site scales when the sites carry them (sigma_eff = k *
    sigma_i); otherwise the global ``sigma`` applies. ``raw_anchor_points``
    switches the curvature terms to the observed points instead of the
    denoised projections (experimentation only).
    """

    curvature: CurvatureTerm = CurvatureTerm("squared")
    sigma: float = 1.0
    gamma: float = 0.0
    beta: float = 0.0
    mode: str = "detection"
    distance: Optional[str] = None
    tau: float = 1.0
    alignment_power: int = 2
    k: float = 20.0
    raw_anchor_points: bool = False

    def __post_init__(self):
        if self.mode not in ("detection", "point_cloud"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.sigma <= 0:
            raise ConfigurationError("sigma must be > 0")
        if self.tau < 0:
            raise ConfigurationError("tau must be >= 0")
        if self.gamma < 0 or self.beta < 0:
            raise ConfigurationError("gamma and beta must be >= 0")
        if self.alignment_power not in (1, 2):
            raise ConfigurationError("alignment_power must be 1 or 2")
        if self.k <= 0:
            raise ConfigurationError("k must be > 0")
        if self.distance is None:
            object.__setattr__(
                self,
                "distance",
                "truncated" if self.mode == "detection" else "euclidean",
            )
        if self.distance not in ("truncated", "euclidean"):
            raise ConfigurationError(f"unknown distance mode {self.distance!r}")
        if self.mode == "point_cloud" and (self.gamma != 0 or self.beta != 0):
            raise ConfigurationError("point_cloud mode requires gamma = beta = 0")

    def with_(self, **kw) -> "ProblemSpec":
        return replace(self, **kw)


@dataclass(frozen=True)
class SiteSet:
    """Observed sites: positions p~_i, unary potentials lambda_i, optional
    direction priors g_i and per-site scales sigma_i."""

    positions: np.ndarray
    lambdas: np.ndarray
    priors: Optional[np.ndarray] = None
    scales: Optional[np.ndarray] = None

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        lam = np.asarray(self.lambdas, dtype=float).reshape(-1)
        if pos.shape[1] not in (2, 3):
            raise ConfigurationError("positions must be (n, 2) or (n, 3)")
        if lam.shape[0] != pos.shape[0]:
            raise ConfigurationError("lambdas length mismatch")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "lambdas", lam)
        if self.priors is not None:
            pri = np.asarray(self.priors, dtype=float)
            if pri.shape != pos.shape:
                raise ConfigurationError("priors shape mismatch")
            object.__setattr__(self, "priors", pri)
        if self.scales is not None:
            sc = np.asarray(self.scales, dtype=float).reshape(-1)
            if sc.shape[0] != pos.shape[0]:
                raise ConfigurationError("scales length mismatch")
            if np.any(sc <= 0):
                raise ConfigurationError("scales must be > 0")
            object.__setattr__(self, "scales", sc)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]


def sigma_eff(spec: ProblemSpec, sites: SiteSet) -> np.ndarray:
    """Per-site distance scale: k*sigma_i when scales are present, else sigma."""
    if sites.scales is not None:
        return spec.k * sites.scales
    return np.full(sites.n, spec.sigma)


def denoised_points(spec: ProblemSpec, sites: SiteSet, lines: TangentLine) -> np.ndarray:
    """Points entering the curvature terms: projections of the observed
    sites onto their own tangents (or the raw sites, behind the config switch)."""
    if spec.raw_anchor_points:
        return sites.positions
    return project_onto_line(lines, sites.positions)


def site_distances(spec: ProblemSpec, sites: SiteSet, lines: TangentLine) -> np.ndarray:
    """d_plus(l_i, p~_i) per site, honoring the distance mode."""
    d = point_line_distance(lines, sites.positions)
    if spec.distance == "truncated":
        return np.maximum(0.0, d - spec.tau)
    return d


def unary_potentials(spec: ProblemSpec, sites: SiteSet, lines: TangentLine) -> np.ndarray:
    """psi_i for all sites (vectorized)."""
    d = site_distances(spec, sites, lines)
    psi = (d / sigma_eff(spec, sites)) ** 2 + sites.lambdas
    if spec.beta > 0 and sites.priors is not None:
        m = misalignment(lines, sites.priors)
        psi = psi + spec.beta * m**spec.alignment_power
    return psi


def unary_potential(spec: ProblemSpec, sites: SiteSet, l_i: TangentLine, i: int) -> float:
    """psi_i for one site with its current tangent."""
    sub = SiteSet(
        sites.positions[i : i + 1],
        sites.lambdas[i : i + 1],
        None if sites.priors is None else sites.priors[i : i + 1],
        None if sites.scales is None else sites.scales[i : i + 1],
    )
    line = TangentLine(
        np.atleast_2d(l_i.anchor)[0:1], np.atleast_2d(l_i.direction)[0:1]
    )
    return float(unary_potentials(spec, sub, line)[0])


def pairwise_potential(spec: ProblemSpec, l_i: TangentLine, l_j: TangentLine, p_i, p_j) -> float:
    """psi_ij = kappa(l_i, l_j) - gamma at the given (denoised) points."""
    return float(curvature_pair(l_i, l_j, p_i, p_j, spec.curvature) - spec.gamma)


def pairwise_potentials(spec: ProblemSpec, graph, lines: TangentLine, points: np.ndarray) -> np.ndarray:
    """psi_ij for all pairs of the graph (vectorized); ``points`` are the
    current denoised points."""
    i, j = graph.pairs[:, 0], graph.pairs[:, 1]
    kappa = curvature_pair(lines[i], lines[j], points[i], points[j], spec.curvature)
    return kappa - spec.gamma


def potential_tables(spec: ProblemSpec, sites: SiteSet, graph, lines: TangentLine):
    """(psi_i, psi_ij) evaluated at the current tangents."""
    pts = denoised_points(spec, sites, lines)
    return unary_potentials(spec, sites, lines), pairwise_potentials(spec, graph, lines, pts)


def expected_energy(spec: ProblemSpec, sites: SiteSet, graph, lines: TangentLine, q: np.ndarray) -> float:
    """sum_pairs w_ij psi_ij q_i q_j + sum_i psi_i q_i."""
    q = np.asarray(q, dtype=float)
    psi_i, psi_ij = potential_tables(spec, sites, graph, lines)
    i, j = graph.pairs[:, 0], graph.pairs[:, 1]
    return float(np.sum(graph.weights * psi_ij * q[i] * q[j]) + np.sum(psi_i * q))


def total_energy(spec: ProblemSpec, sites: SiteSet, graph, lines: TangentLine, x=None) -> float:
    """Energy of a hard labeling (x = None means all ones, the point-cloud case)."""
    if x is None:
        x = np.ones(sites.n)
    return expected_energy(spec, sites, graph, lines, np.asarray(x, dtype=float))
