"""
Fitting tangent lines to noisy point clouds
===========================================

fit_point_cloud assigns every point an infinite tangent line and minimizes
data distance + pairwise curvature over a kNN graph. Two experiments:

1. a noisy circle — the fitted tangents recover the analytic ones;
2. a rounded corner fit twice, once with squared and once with absolute
   curvature: with a strong data term the absolute mode concentrates the
   turning into fewer, sharper pairs (its maximum pair curvature is larger),
   the squared mode spreads it evenly.
"""

import numpy as np

from thinstruct import (
    CurvatureTerm,
    TrustRegionConfig,
    build_knn,
    curvature_pair,
    fit_point_cloud,
    project_onto_line,
)
from thinstruct.synth import circle_points, rounded_corner_points

# --- tangents of a noisy circle ---------------------------------------------
pts, true_tan = circle_points(radius=20.0, samples=64, noise=0.5, seed=11)
lines, stats = fit_point_cloud(pts, sigma=1.0)
cos = np.abs(np.sum(lines.direction * true_tan, axis=1)).clip(0, 1)
err = np.degrees(np.arccos(cos))
print(f"noisy circle: mean tangent error {err.mean():.2f} deg "
      f"(max {err.max():.2f}), {len(stats)} LM iterations")

# --- straight-line bias at a corner ------------------------------------------
pts, _ = rounded_corner_points(leg=10.0, radius=0.2, samples=64,
                               noise=0.02, seed=1)
graph = build_knn(pts, 4)
i, j = graph.pairs[:, 0], graph.pairs[:, 1]
measure = CurvatureTerm("absolute", 0.1)

print("\nrounded corner, strong data term (sigma = 0.1):")
for kind in ("squared", "absolute"):
    lines, _ = fit_point_cloud(pts, sigma=0.1,
                               curvature=CurvatureTerm(kind, 0.1),
                               tr_config=TrustRegionConfig(max_iters=200))
    proj = project_onto_line(lines, pts)
    kap = curvature_pair(lines[i], lines[j], proj[i], proj[j], measure)
    print(f"  {kind:8s}: max pair curvature {kap.max():.4f}, "
          f"pairs above half the max: {(kap > 0.5 * kap.max()).sum()}")
print("absolute mode piles the turn onto fewer pairs — the corner stays "
      "a corner.")
