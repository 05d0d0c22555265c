"""End-to-end applications: 2D edge detection, 3D vessel center-lines, and
point-cloud curve fitting.

Conventions: 2D images are arrays indexed [y, x] with pixel centers at
integer coordinates (x, y); site id = y * width + x. 3D volumes are arrays
indexed [x, y, z]; site id = (x * ny + y) * nz + z. Both match the raveled
C order used by the grid graph builders.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import ndimage

from .energy import ProblemSpec, SiteSet
from .errors import ConfigurationError, DataFormatError
from .geometry import CurvatureTerm, TangentLine, project_onto_line
from .graph import build_grid_2d, build_grid_3d, build_knn
from .inference import InferenceState, run_inference
from .solver import TrustRegionConfig, minimize_expected_energy

LAMBDA_INTERCEPT = 1.8
LAMBDA_SLOPE = 1.4


@dataclass(frozen=True)
class GradientField:
    """Normalized Sobel gradients of a grayscale image.

    ``vectors`` has shape (H, W, 2) storing (gx, gy); magnitudes carry unit
    sample standard deviation over the image unless the image was constant.
    """
    vectors: np.ndarray

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.vectors[..., 0], self.vectors[..., 1])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.vectors.shape[:2]


@dataclass(frozen=True)
class VesselField:
    """Per-voxel vesselness, direction, and scale on an (nx, ny, nz) grid."""
    v: np.ndarray
    direction: np.ndarray  # (nx, ny, nz, 3)
    sigma: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        d = np.asarray(self.direction, dtype=float)
        s = np.asarray(self.sigma, dtype=float)
        if v.ndim != 3 or d.shape != v.shape + (3,) or s.shape != v.shape:
            raise DataFormatError("inconsistent vessel field dimensions")
        if np.any(v < 0):
            raise DataFormatError("vesselness must be non-negative")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "sigma", s)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.v.shape


@dataclass
class SubpixelMask:
    """Raster of probabilities at ``scale`` times the source resolution.

    Cell values are the maximum marginal among the sites whose denoised
    point lands in the cell; cells nobody touched stay 0.
    """
    values: np.ndarray
    scale: int
    dropped: int = 0


def sobel_gradients(image, normalize="std") -> GradientField:
    """Per-pixel Sobel gradients normalized by the spread of magnitudes.

    ``normalize`` is "std" (sample standard deviation, the default) or
    "variance" (the literal reading). A constant image yields zero vectors.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim != 2 or img.shape[0] < 3 or img.shape[1] < 3:
        raise ConfigurationError("image must be a 2-D raster of at least 3x3")
    if normalize not in ("std", "variance"):
        raise ConfigurationError(f"unknown normalize mode {normalize!r}")
    gx = ndimage.sobel(img, axis=1, mode="nearest")
    gy = ndimage.sobel(img, axis=0, mode="nearest")
    mag = np.hypot(gx, gy)
    spread = mag.std(ddof=1) if mag.size > 1 else 0.0
    if normalize == "variance":
        spread = spread ** 2
    vectors = np.stack([gx, gy], axis=-1)
    if spread > 0:
        vectors = vectors / spread
    else:
        vectors = np.zeros_like(vectors)
    return GradientField(vectors)


def edge_likelihoods(grad: GradientField, intercept=LAMBDA_INTERCEPT,
                     slope=LAMBDA_SLOPE) -> np.ndarray:
    """lambda_i = 1.8 - 1.4 * |g_i| (per pixel, raveled in site order)."""
    return (intercept - slope * grad.magnitude).ravel()


def _pixel_positions(shape):
    h, w = shape
    xs, ys = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    return np.stack([xs.ravel(), ys.ravel()], axis=1)


def init_edge_tangents(grad: GradientField, positions=None,
                       mode="perpendicular") -> TangentLine:
    """Initial tangents through the pixels.

    ``perpendicular`` (default) orients each line along the edge — the
    gradient rotated by 90 degrees; ``paper-literal`` keeps lines collinear
    with the gradient itself. Zero-gradient pixels get direction (1, 0).
    """
    if mode not in ("perpendicular", "paper-literal"):
        raise ConfigurationError(f"unknown init mode {mode!r}")
    if positions is None:
        positions = _pixel_positions(grad.shape)
    g = grad.vectors.reshape(-1, 2)
    norms = np.hypot(g[:, 0], g[:, 1])
    dirs = np.tile([1.0, 0.0], (len(g), 1))
    nz = norms > 0
    unit = g[nz] / norms[nz, None]
    if mode == "perpendicular":
        unit = np.stack([-unit[:, 1], unit[:, 0]], axis=1)
    dirs[nz] = unit
    return TangentLine(np.array(positions, dtype=float), dirs)


def subpixel_mask(state: InferenceState, sites: SiteSet, s: int, q_min=0.0,
                  shape=None) -> SubpixelMask:
    """Quantize denoised points onto an s-times-finer raster.

    Each site with q >= q_min projects its anchor onto its tangent; the cell
    floor(s * p) takes the maximum marginal among its contributors. Points
    that leave the scaled canvas are dropped and counted.
    """
    s = int(s)
    if s < 1:
        raise ConfigurationError("scale must be an integer >= 1")
    if shape is None:
        h = int(sites.positions[:, 1].max()) + 1
        w = int(sites.positions[:, 0].max()) + 1
    else:
        h, w = shape
    keep = state.q >= q_min
    points = project_onto_line(state.lines, sites.positions)[keep]
    q = state.q[keep]
    cells = np.floor(s * points).astype(int)
    inside = ((cells[:, 0] >= 0) & (cells[:, 0] < s * w)
              & (cells[:, 1] >= 0) & (cells[:, 1] < s * h))
    dropped = int((~inside).sum())
    values = np.zeros((s * h, s * w))
    np.maximum.at(values, (cells[inside, 1], cells[inside, 0]), q[inside])
    return SubpixelMask(values, s, dropped)


def detect_edges_2d(image, sigma=1.0, gamma=0.25, curvature=None, tau=1.0,
                    scale=2, q_min=0.0, init_mode="perpendicular",
                    normalize="std", lambda_intercept=LAMBDA_INTERCEPT,
                    lambda_slope=LAMBDA_SLOPE, outer_tol=1e-6, max_outer=10,
                    mf_tol=1e-6, mf_max_sweeps=50,
                    tr_config=None) -> Tuple[InferenceState, SubpixelMask, SiteSet]:
    """Full edge pipeline: gradients -> likelihoods -> tangent init ->
    alternating inference -> sub-pixel mask.

    Returns the inference state, the mask at ``scale``, and the site set
    (one site per pixel) so callers can relate marginals back to pixels.
    """
    if curvature is None:
        curvature = CurvatureTerm("squared")
    if tr_config is None:
        tr_config = TrustRegionConfig(max_iters=12)
    grad = sobel_gradients(image, normalize=normalize)
    lambdas = edge_likelihoods(grad, lambda_intercept, lambda_slope)
    positions = _pixel_positions(grad.shape)
    sites = SiteSet(positions, lambdas)
    lines0 = init_edge_tangents(grad, positions, mode=init_mode)
    spec = ProblemSpec(curvature=curvature, sigma=sigma, gamma=gamma, tau=tau)
    h, w = grad.shape
    graph = build_grid_2d(w, h)
    state = run_inference(spec, sites, graph, lines0, outer_tol=outer_tol,
                          max_outer=max_outer, mf_tol=mf_tol,
                          mf_max_sweeps=mf_max_sweeps, tr_config=tr_config)
    mask = subpixel_mask(state, sites, scale, q_min=q_min, shape=grad.shape)
    return state, mask, sites


def _pca_directions(points, graph):
    """Leading principal axis of each site's kNN neighborhood (self included)."""
    n, dim = points.shape
    dirs = np.zeros((n, dim))
    for i in range(n):
        nbrs = np.concatenate([[i], graph.neighbors(i)[0]])
        local = points[nbrs] - points[nbrs].mean(axis=0)
        _, _, vt = np.linalg.svd(local, full_matrices=False)
        dirs[i] = vt[0]
    return dirs


def fit_point_cloud(points, sigma=1.0, curvature=None, k_nn=4,
                    tr_config=None):
    """Fit a tangent line per point: kNN graph, local-PCA initialization,
    then a single trust-region solve of the point-cloud energy (all
    indicators on, plain Euclidean data term).

    Returns (tangents, per-iteration solver stats).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ConfigurationError("need at least 2 points")
    if curvature is None:
        curvature = CurvatureTerm("squared")
    if tr_config is None:
        tr_config = TrustRegionConfig()
    graph = build_knn(pts, k_nn)
    spec = ProblemSpec(curvature=curvature, sigma=sigma, mode="point_cloud")
    sites = SiteSet(pts, np.zeros(len(pts)))
    lines0 = TangentLine(pts.copy(), _pca_directions(pts, graph))
    q = np.ones(len(pts))
    lines, stats = minimize_expected_energy(spec, sites, graph, lines0, q,
                                            tr_config)
    return lines, stats


def _normalized_vesselness(v):
    spread = v.std(ddof=1) if v.size > 1 else 0.0
    return v / spread if spread > 0 else np.zeros_like(v)


def retain_voxels(field: VesselField, keep_fraction: float):
    """Ids (in volume raveled order) of the top keep_fraction voxels by v.

    Stable tie-break: equal vesselness keeps raster order.
    """
    if not 0 < keep_fraction <= 1:
        raise ConfigurationError("keep_fraction must be in (0, 1]")
    flat = field.v.ravel()
    n_keep = int(round(keep_fraction * flat.size))
    if n_keep == 0:
        raise ConfigurationError("keep_fraction retains no voxels")
    order = np.argsort(-flat, kind="stable")
    return np.sort(order[:n_keep])


@dataclass
class VesselSites:
    """Bookkeeping that relates retained-voxel sites back to the volume."""
    sites: SiteSet
    graph: object
    lines0: TangentLine
    voxel_ids: np.ndarray
    mask: np.ndarray


def _vessel_sites(field: VesselField, keep_fraction, lambda_intercept,
                  lambda_slope) -> VesselSites:
    ids = retain_voxels(field, keep_fraction)
    nx, ny, nz = field.shape
    mask = np.zeros(nx * ny * nz, dtype=bool)
    mask[ids] = True
    mask = mask.reshape(field.shape)
    graph = build_grid_3d(nx, ny, nz, mask=mask)

    xs, ys, zs = np.unravel_index(ids, field.shape)
    positions = np.stack([xs, ys, zs], axis=1).astype(float)
    v_norm = _normalized_vesselness(field.v).ravel()[ids]
    lambdas = lambda_intercept - lambda_slope * v_norm
    sigmas = field.sigma.ravel()[ids]
    if np.any(sigmas <= 0):
        raise DataFormatError("retained voxels must have positive scale")
    g = field.direction.reshape(-1, 3)[ids]
    norms = np.linalg.norm(g, axis=1)
    dirs = np.tile([1.0, 0.0, 0.0], (len(ids), 1))
    nzero = norms > 0
    dirs[nzero] = g[nzero] / norms[nzero, None]
    sites = SiteSet(positions, lambdas, priors=g, scales=sigmas)
    lines0 = TangentLine(positions.copy(), dirs)
    return VesselSites(sites, graph, lines0, ids, mask)


def detect_vessels_3d(field: VesselField, beta=0.5, k=20.0,
                      keep_fraction=0.15, gamma=0.25, curvature=None,
                      alignment_power=1, lambda_intercept=LAMBDA_INTERCEPT,
                      lambda_slope=LAMBDA_SLOPE, outer_tol=1e-6, max_outer=10,
                      mf_tol=1e-6, mf_max_sweeps=50, tr_config=None,
                      ) -> Tuple[InferenceState, VesselSites]:
    """Vessel center-line inference on the retained top-v voxels.

    The vesselness is std-normalized and mapped through the same linear
    likelihood as edge gradients; the data term uses sigma_eff = k * sigma_i
    per voxel and the beta-weighted misalignment with the filter direction.
    """
    if curvature is None:
        curvature = CurvatureTerm("squared")
    if tr_config is None:
        tr_config = TrustRegionConfig(max_iters=12)
    vs = _vessel_sites(field, keep_fraction, lambda_intercept, lambda_slope)
    spec = ProblemSpec(curvature=curvature, gamma=gamma, beta=beta, k=k,
                       distance="euclidean", alignment_power=alignment_power)
    state = run_inference(spec, vs.sites, vs.graph, vs.lines0,
                          outer_tol=outer_tol, max_outer=max_outer,
                          mf_tol=mf_tol, mf_max_sweeps=mf_max_sweeps,
                          tr_config=tr_config)
    return state, vs


def hysteresis_mask(v, low, high):
    """Voxels above ``low`` 26-connected to a seed above ``high``."""
    if low > high:
        raise ConfigurationError("hysteresis requires low <= high")
    above_low = v >= low
    structure = np.ones((3,) * v.ndim, dtype=bool)
    labels, n = ndimage.label(above_low, structure=structure)
    if n == 0:
        return np.zeros_like(above_low)
    seeded = np.unique(labels[v >= high])
    seeded = seeded[seeded > 0]
    return np.isin(labels, seeded)


@dataclass
class RidgeFit:
    lines: TangentLine
    mask: np.ndarray
    voxel_ids: np.ndarray
    sites: SiteSet
    stats: list


def fit_tangents_fixed_q(field: VesselField, low, high, beta=0.5, k=20.0,
                         gamma=0.25, curvature=None, alignment_power=1,
                         tr_config=None) -> RidgeFit:
    """Freeze Q to the hysteresis ridge mask of the vesselness and run a
    single tangent solve on the ridge voxels."""
    if curvature is None:
        curvature = CurvatureTerm("squared")
    if tr_config is None:
        tr_config = TrustRegionConfig(max_iters=12)
    mask = hysteresis_mask(field.v, low, high)
    ids = np.flatnonzero(mask.ravel())
    if len(ids) == 0:
        warnings.warn("hysteresis produced no ridge voxels")
        empty = TangentLine(np.zeros((0, 3)), np.zeros((0, 3)))
        return RidgeFit(empty, mask, ids, SiteSet(np.zeros((0, 3)),
                                                  np.zeros(0)), [])
    nx, ny, nz = field.shape
    graph = build_grid_3d(nx, ny, nz, mask=mask)
    xs, ys, zs = np.unravel_index(ids, field.shape)
    positions = np.stack([xs, ys, zs], axis=1).astype(float)
    sigmas = field.sigma.ravel()[ids]
    if np.any(sigmas <= 0):
        raise DataFormatError("ridge voxels must have positive scale")
    g = field.direction.reshape(-1, 3)[ids]
    norms = np.linalg.norm(g, axis=1)
    dirs = np.tile([1.0, 0.0, 0.0], (len(ids), 1))
    nzero = norms > 0
    dirs[nzero] = g[nzero] / norms[nzero, None]
    sites = SiteSet(positions, np.zeros(len(ids)), priors=g, scales=sigmas)
    lines0 = TangentLine(positions.copy(), dirs)
    spec = ProblemSpec(curvature=curvature, gamma=gamma, beta=beta, k=k,
                       distance="euclidean", alignment_power=alignment_power)
    q = np.ones(len(ids))
    lines, stats = minimize_expected_energy(spec, sites, graph, lines0, q,
                                            tr_config)
    return RidgeFit(lines, mask, ids, sites, stats)
