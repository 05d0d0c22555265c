"""
Sub-pixel edge detection on a synthetic disk
============================================

The 2D pipeline: Sobel gradients -> per-pixel edge likelihoods ->
one tangent line + one on/off indicator per pixel -> alternating
variational inference and trust-region tangent refinement -> denoised
points quantized onto a finer raster.

The detected edge points land well inside a pixel of the true circle:
the tangents slide each pixel's point onto the actual boundary.
"""

from pathlib import Path

import numpy as np

from thinstruct import detect_edges_2d, project_onto_line, write_mask_pgm
from thinstruct.synth import disk_image

img, center, radius = disk_image(size=64, radius=20.0, noise=5.0, seed=3)
print(f"disk image 64x64, radius {radius}, noise sigma 5")

state, mask, sites = detect_edges_2d(img)
conf = state.q >= 0.5
print(f"inference: {state.outer_iters} outer iterations, "
      f"{conf.sum()} of {sites.n} pixels confident (q >= 1/2)")

# how close are the denoised points to the true circle?
pts = project_onto_line(state.lines, sites.positions)[conf]
radial = np.hypot(pts[:, 0] - center[0], pts[:, 1] - center[1])
err = np.abs(radial - radius)
print(f"sub-pixel radial error: mean {err.mean():.3f} px, "
      f"90th percentile {np.percentile(err, 90):.3f} px")

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)
write_mask_pgm(out / "disk_subpixel.pgm", mask.values)
print(f"2x sub-pixel mask written to {out / 'disk_subpixel.pgm'}")
