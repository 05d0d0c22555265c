"""Synthetic instances with ground truth: point clouds with known tangents,
antialiased test images with boundary masks, and tubular 3D vessel fields.

Every generator takes an explicit seed and draws from its own
``default_rng``, so outputs are bit-reproducible. Images use the value
range [0, 255] with pixel centers at integer coordinates; a pixel covers
the unit square around its center, and edges are rendered with linear
coverage so gradient-based sub-pixel localization is meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigurationError
from .pipelines import VesselField

DEFAULT_FG = 200.0
DEFAULT_BG = 30.0


def _add_noise(image, noise, rng):
    if noise > 0:
        image = image + rng.normal(0.0, noise, image.shape)
    return np.clip(image, 0.0, 255.0)


# -- point clouds ---------------------------------------------------------------


def circle_points(radius=20.0, samples=64, noise=0.0, seed=0, center=(0.0, 0.0)):
    """Evenly spaced circle samples; returns (points, unit tangents)."""
    if samples < 2:
        raise ConfigurationError("need at least 2 samples")
    rng = np.random.default_rng(seed)
    theta = 2.0 * np.pi * np.arange(samples) / samples
    pts = np.stack([center[0] + radius * np.cos(theta),
                    center[1] + radius * np.sin(theta)], axis=1)
    tangents = np.stack([-np.sin(theta), np.cos(theta)], axis=1)
    if noise > 0:
        pts = pts + rng.normal(0.0, noise, pts.shape)
    return pts, tangents


def line_points(length=20.0, samples=32, noise=0.0, seed=0, angle=0.0,
                origin=(0.0, 0.0)):
    """Evenly spaced samples of a straight segment at ``angle``."""
    if samples < 2:
        raise ConfigurationError("need at least 2 samples")
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, length, samples)
    d = np.array([np.cos(angle), np.sin(angle)])
    pts = np.asarray(origin, dtype=float) + t[:, None] * d
    tangents = np.tile(d, (samples, 1))
    if noise > 0:
        pts = pts + rng.normal(0.0, noise, pts.shape)
    return pts, tangents


def square_points(side=10.0, per_side=8, noise=0.0, seed=0):
    """Axis-aligned square boundary walk (corners excluded from sampling)."""
    rng = np.random.default_rng(seed)
    t = (np.arange(per_side) + 0.5) / per_side * side
    zeros = np.zeros(per_side)
    pts = np.concatenate([
        np.stack([t, zeros], axis=1),
        np.stack([zeros + side, t], axis=1),
        np.stack([side - t, zeros + side], axis=1),
        np.stack([zeros, side - t], axis=1),
    ])
    dirs = np.concatenate([
        np.tile([1.0, 0.0], (per_side, 1)),
        np.tile([0.0, 1.0], (per_side, 1)),
        np.tile([-1.0, 0.0], (per_side, 1)),
        np.tile([0.0, -1.0], (per_side, 1)),
    ])
    if noise > 0:
        pts = pts + rng.normal(0.0, noise, pts.shape)
    return pts, dirs


def rounded_corner_points(leg=10.0, radius=3.0, samples=48, noise=0.0, seed=0):
    """A right-angle corner smoothed by a circular arc, sampled uniformly by
    arc length. Returns (points, unit tangents)."""
    if radius <= 0 or leg <= radius:
        raise ConfigurationError("need leg > radius > 0")
    rng = np.random.default_rng(seed)
    l1 = leg - radius
    arc = 0.5 * np.pi * radius
    total = 2 * l1 + arc
    s = (np.arange(samples) + 0.5) / samples * total
    pts = np.zeros((samples, 2))
    tan = np.zeros((samples, 2))
    first = s < l1
    pts[first] = np.stack([s[first] - leg, np.zeros(first.sum())], axis=1)
    tan[first] = [1.0, 0.0]
    on_arc = (s >= l1) & (s < l1 + arc)
    phi = -0.5 * np.pi + (s[on_arc] - l1) / radius
    pts[on_arc] = np.stack([-radius + radius * np.cos(phi),
                            radius + radius * np.sin(phi)], axis=1)
    tan[on_arc] = np.stack([-np.sin(phi), np.cos(phi)], axis=1)
    last = s >= l1 + arc
    pts[last] = np.stack([np.zeros(last.sum()),
                          radius + (s[last] - l1 - arc)], axis=1)
    tan[last] = [0.0, 1.0]
    if noise > 0:
        pts = pts + rng.normal(0.0, noise, pts.shape)
    return pts, tan


# -- images ---------------------------------------------------------------------


def step_edge_image(width=32, height=24, offset=0.3, fg=DEFAULT_FG,
                    bg=DEFAULT_BG, noise=0.0, seed=0):
    """Vertical edge at x = (width-1)/2 + offset, rendered with 1-px linear
    coverage. Returns (image, edge_x)."""
    rng = np.random.default_rng(seed)
    edge_x = (width - 1) / 2.0 + offset
    x = np.arange(width, dtype=float)
    coverage = np.clip(x - edge_x + 0.5, 0.0, 1.0)
    row = bg + (fg - bg) * coverage
    img = np.tile(row, (height, 1))
    return _add_noise(img, noise, rng), edge_x


def disk_image(size=64, radius=20.0, center=None, fg=DEFAULT_FG,
               bg=DEFAULT_BG, noise=0.0, seed=0):
    """Filled disk with linear edge coverage. Returns (image, center, radius)."""
    rng = np.random.default_rng(seed)
    if center is None:
        center = ((size - 1) / 2.0, (size - 1) / 2.0)
    ys, xs = np.mgrid[0:size, 0:size]
    dist = np.hypot(xs - center[0], ys - center[1])
    coverage = np.clip(radius - dist + 0.5, 0.0, 1.0)
    img = bg + (fg - bg) * coverage
    return _add_noise(img, noise, rng), center, radius


def circle_boundary_mask(shape, center, radius):
    """Pixels the circle passes through (nearest-pixel rasterization)."""
    h, w = shape
    n = max(64, int(16 * radius))
    theta = 2.0 * np.pi * np.arange(n) / n
    px = np.rint(center[0] + radius * np.cos(theta)).astype(int)
    py = np.rint(center[1] + radius * np.sin(theta)).astype(int)
    keep = (px >= 0) & (px < w) & (py >= 0) & (py < h)
    mask = np.zeros(shape, dtype=bool)
    mask[py[keep], px[keep]] = True
    return mask


def polygon_image(size=64, vertices=5, seed=0, fg=DEFAULT_FG, bg=DEFAULT_BG,
                  noise=0.0, supersample=4):
    """Random convex polygon rendered with supersampled coverage.

    Returns (image, vertex array, boundary mask)."""
    if vertices < 3:
        raise ConfigurationError("polygon needs at least 3 vertices")
    rng = np.random.default_rng(seed)
    cx = cy = (size - 1) / 2.0
    angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, vertices))
    radii = rng.uniform(0.28 * size, 0.42 * size, vertices)
    verts = np.stack([cx + radii * np.cos(angles),
                      cy + radii * np.sin(angles)], axis=1)
    hull = _convex_hull(verts)

    ss = supersample
    coords = (np.arange(size * ss) + 0.5) / ss - 0.5
    xs, ys = np.meshgrid(coords, coords)
    centroid = hull.mean(axis=0)
    inside = np.ones(xs.shape, dtype=bool)
    for a, b in zip(hull, np.roll(hull, -1, axis=0)):
        edge = b - a
        side = edge[0] * (ys - a[1]) - edge[1] * (xs - a[0])
        ref = edge[0] * (centroid[1] - a[1]) - edge[1] * (centroid[0] - a[0])
        inside &= side * np.sign(ref) >= 0
    coverage = inside.reshape(size, ss, size, ss).mean(axis=(1, 3))
    img = bg + (fg - bg) * coverage

    mask = np.zeros((size, size), dtype=bool)
    for a, b in zip(hull, np.roll(hull, -1, axis=0)):
        n = max(2, int(10 * np.linalg.norm(b - a)))
        t = np.linspace(0.0, 1.0, n)
        pts = a + t[:, None] * (b - a)
        px = np.rint(pts[:, 0]).astype(int)
        py = np.rint(pts[:, 1]).astype(int)
        keep = (px >= 0) & (px < size) & (py >= 0) & (py < size)
        mask[py[keep], px[keep]] = True
    return _add_noise(img, noise, rng), hull, mask


def _convex_hull(points):
    """Vertices of the convex hull in clockwise order (image coordinates)."""
    pts = points[np.lexsort((points[:, 1], points[:, 0]))]

    def half(iterable):
        out = []
        for p in iterable:
            while len(out) >= 2:
                ux, uy = out[-1] - out[-2]
                vx, vy = p - out[-2]
                if ux * vy - uy * vx > 0:
                    break
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def _rect_coverage(shape, xa, xb, ya, yb):
    h, w = shape
    x = np.arange(w, dtype=float)
    y = np.arange(h, dtype=float)
    cx = np.clip(np.minimum(x + 0.5, xb) - np.maximum(x - 0.5, xa), 0.0, 1.0)
    cy = np.clip(np.minimum(y + 0.5, yb) - np.maximum(y - 0.5, ya), 0.0, 1.0)
    return cy[:, None] * cx[None, :]


def _rect_outline(mask, xa, xb, ya, yb):
    h, w = mask.shape
    per = 2 * ((xb - xa) + (yb - ya))
    n = max(16, int(10 * per))
    t = np.linspace(0.0, per, n, endpoint=False)
    pts = []
    for s in t:
        if s < xb - xa:
            pts.append((xa + s, ya))
        elif s < (xb - xa) + (yb - ya):
            pts.append((xb, ya + s - (xb - xa)))
        elif s < 2 * (xb - xa) + (yb - ya):
            pts.append((xb - (s - (xb - xa) - (yb - ya)), yb))
        else:
            pts.append((xa, yb - (s - 2 * (xb - xa) - (yb - ya))))
    pts = np.array(pts)
    px = np.rint(pts[:, 0]).astype(int)
    py = np.rint(pts[:, 1]).astype(int)
    keep = (px >= 0) & (px < w) & (py >= 0) & (py < h)
    mask[py[keep], px[keep]] = True


def gap_image(width=64, height=32, length=40, gap=8, thickness=2.5,
              fg=DEFAULT_FG, bg=DEFAULT_BG, noise=0.0, seed=0):
    """Two collinear bright bars separated by a gap, rendered with exact
    rectangle coverage. The truth mask rasterizes the bar outlines (the
    intensity edges an edge detector should find).

    Returns (image, truth mask)."""
    if length <= gap:
        raise ConfigurationError("need length > gap")
    rng = np.random.default_rng(seed)
    y_c = height / 2.0
    ya, yb = y_c - thickness / 2.0, y_c + thickness / 2.0
    seg = (length - gap) / 2.0
    x0 = (width - length) / 2.0
    bars = [(x0 + 0.25, x0 + seg - 0.25),
            (x0 + length - seg + 0.25, x0 + length - 0.25)]
    img = np.full((height, width), float(bg))
    mask = np.zeros((height, width), dtype=bool)
    for xa, xb in bars:
        img += (fg - bg) * _rect_coverage((height, width), xa, xb, ya, yb)
        _rect_outline(mask, xa, xb, ya, yb)
    return _add_noise(img, noise, rng), mask


# -- 3D tubes --------------------------------------------------------------------


@dataclass
class TubeTruth:
    """Analytic ground truth for a synthetic tube volume."""
    direction: np.ndarray  # (nx, ny, nz, 3) unit tangents of the nearest curve point
    dist: np.ndarray       # (nx, ny, nz) distance to the center-line


def _curve_samples(shape, size):
    m = 4096
    t = np.linspace(0.0, 1.0, m)
    if shape == "helix":
        r_h = 0.3 * size
        turns = 1.5
        phi = 2.0 * np.pi * turns * t
        z0, z1 = 4.0, size - 4.0
        pts = np.stack([size / 2.0 + r_h * np.cos(phi),
                        size / 2.0 + r_h * np.sin(phi),
                        z0 + (z1 - z0) * t], axis=1)
        tan = np.stack([-r_h * np.sin(phi) * 2.0 * np.pi * turns,
                        r_h * np.cos(phi) * 2.0 * np.pi * turns,
                        np.full(m, z1 - z0)], axis=1)
    elif shape == "straight":
        pts = np.stack([np.full(m, size / 2.0), np.full(m, size / 2.0),
                        4.0 + (size - 8.0) * t], axis=1)
        tan = np.tile([0.0, 0.0, 1.0], (m, 1))
    elif shape == "y":
        m3 = m // 3
        stem_t = np.linspace(0.0, 1.0, m3)
        z_mid = size / 2.0
        stem = np.stack([np.full(m3, size / 2.0), np.full(m3, size / 2.0),
                         4.0 + (z_mid - 4.0) * stem_t], axis=1)
        spread = 0.35 * (size - 4.0 - z_mid)
        branch_t = np.linspace(0.0, 1.0, m3)
        left = np.stack([size / 2.0 - spread * branch_t,
                         np.full(m3, size / 2.0),
                         z_mid + (size - 4.0 - z_mid) * branch_t], axis=1)
        right = np.stack([size / 2.0 + spread * branch_t,
                          np.full(m3, size / 2.0),
                          z_mid + (size - 4.0 - z_mid) * branch_t], axis=1)
        pts = np.concatenate([stem, left, right])
        tan = np.concatenate([
            np.tile([0.0, 0.0, 1.0], (m3, 1)),
            np.tile([-spread, 0.0, size - 4.0 - z_mid], (m3, 1)),
            np.tile([spread, 0.0, size - 4.0 - z_mid], (m3, 1)),
        ])
    else:
        raise ConfigurationError(f"unknown tube shape {shape!r}")
    tan = tan / np.linalg.norm(tan, axis=1, keepdims=True)
    return pts, tan


def tube3d(shape="helix", size=64, radius=2.0, dir_noise=0.0, seed=0):
    """Synthetic tube volume with analytic vesselness v = exp(-dist^2 / 2),
    constant scale = tube radius, and direction = nearest-curve tangent
    (optionally perturbed by ``dir_noise``, the std of an additive Gaussian
    on the unit tangent before renormalization).

    Returns (VesselField, TubeTruth)."""
    if size < 16:
        raise ConfigurationError("volume too small for the tube layouts")
    rng = np.random.default_rng(seed)
    curve, curve_tan = _curve_samples(shape, size)
    xs, ys, zs = np.mgrid[0:size, 0:size, 0:size].astype(float)
    voxels = np.stack([xs.ravel(), ys.ravel(), zs.ravel()], axis=1)
    dist, idx = cKDTree(curve).query(voxels)
    true_dirs = curve_tan[idx]

    v = np.exp(-0.5 * dist ** 2).reshape(size, size, size)
    dirs = true_dirs
    if dir_noise > 0:
        dirs = dirs + rng.normal(0.0, dir_noise, dirs.shape)
        norms = np.linalg.norm(dirs, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        dirs = dirs / norms
    field = VesselField(v, dirs.reshape(size, size, size, 3),
                        np.full((size, size, size), float(radius)))
    truth = TubeTruth(true_dirs.reshape(size, size, size, 3),
                      dist.reshape(size, size, size))
    return field, truth
