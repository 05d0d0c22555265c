"""Block-coordinate descent over tangents and hard indicators.

Alternates the same trust-region tangent solve used by inference with an
exact (or ICM) update of the binary indicators. With ICM this is literally
the degenerate family of run_inference — both drive the shared alternation
loop, so their trajectories agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from .energy import potential_tables
from .errors import ConfigurationError
from .geometry import TangentLine
from .inference import _alternate, icm_until_stable, init_marginals
from .solver import TrustRegionConfig

EXHAUSTIVE_LIMIT = 20
_CHUNK = 1 << 16


def _enumerate_best(psi_i, scaled_psi_ij, pairs, n):
    """Scan all 2^n labelings in chunks; site 0 is the least significant bit.

    Ties resolve to the smallest integer encoding (first minimum in
    enumeration order)."""
    best_e = np.inf
    best_code = 0
    site_bits = np.arange(n, dtype=np.int64)
    for start in range(0, 1 << n, _CHUNK):
        codes = np.arange(start, min(start + _CHUNK, 1 << n), dtype=np.int64)
        bits = ((codes[:, None] >> site_bits) & 1).astype(float)
        e = bits @ psi_i
        if len(pairs):
            e += (bits[:, pairs[:, 0]] * bits[:, pairs[:, 1]]) @ scaled_psi_ij
        k = int(np.argmin(e))
        if e[k] < best_e:
            best_e = float(e[k])
            best_code = int(codes[k])
    return ((best_code >> site_bits) & 1).astype(float)


def x_step(spec, sites, graph, lines, x0=None, method="auto"):
    """Minimize the energy over the indicators at fixed tangents.

    ``exhaustive`` enumerates every labeling (n <= 20); ``icm`` runs
    coordinate sweeps from ``x0`` until no flip helps. ``auto`` picks
    exhaustive when affordable.
    """
    n = sites.n
    if method == "auto":
        method = "exhaustive" if n <= EXHAUSTIVE_LIMIT else "icm"
    if method == "exhaustive":
        if n > EXHAUSTIVE_LIMIT:
            raise ConfigurationError(
                f"exhaustive x_step supports at most {EXHAUSTIVE_LIMIT} sites, got {n}"
            )
        psi_i, psi_ij = potential_tables(spec, sites, graph, lines)
        return _enumerate_best(psi_i, graph.weights * psi_ij, graph.pairs, n)
    if method == "icm":
        if x0 is None:
            x0 = (init_marginals(spec, sites, lines) >= 0.5).astype(float)
        x, _ = icm_until_stable(spec, sites, graph, lines, np.array(x0, dtype=float))
        return x
    raise ConfigurationError(f"unknown x_step method {method!r}")


@dataclass
class BcdState:
    lines: TangentLine
    x: np.ndarray
    trace: List[dict] = field(default_factory=list)
    converged: bool = False
    outer_iters: int = 0


def run_bcd(spec, sites, graph, lines0, x0=None, max_outer=50, *,
            x_method="auto", tr_config=TrustRegionConfig(),
            l_rel_tol=1e-9) -> BcdState:
    """Alternate L- and X-steps until the labeling stops changing and the
    tangent solve no longer makes progress (relative decrease < l_rel_tol).

    ``x0`` warm-starts the labeling; by default the unary potentials are
    thresholded at zero. Sites labeled 0 contribute nothing to the tangent
    objective, so their tangents stay frozen at the current values.
    """
    if x_method not in ("auto", "exhaustive", "icm"):
        raise ConfigurationError(f"unknown x_step method {x_method!r}")
    if x0 is None:
        x = (init_marginals(spec, sites, lines0) >= 0.5).astype(float)
    else:
        x = np.array(x0, dtype=float)
        if x.shape != (sites.n,):
            raise ConfigurationError("x0 must have one entry per site")
        if not np.all((x == 0.0) | (x == 1.0)):
            raise ConfigurationError("x0 entries must be 0 or 1")

    if x_method == "icm" or (x_method == "auto" and sites.n > EXHAUSTIVE_LIMIT):
        def q_updater(lines, q):
            return icm_until_stable(spec, sites, graph, lines, q)
    else:
        def q_updater(lines, q):
            new = x_step(spec, sites, graph, lines, q, method="exhaustive")
            return new, {"max_delta": float(np.abs(new - q).max(initial=0.0)),
                         "sweeps": 1, "converged": True}

    def stop_rule(ctx):
        x_stable = ctx["q_info"]["max_delta"] == 0.0
        decrease = ctx["e_before"] - ctx["e_after_l"]
        l_done = decrease < l_rel_tol * max(abs(ctx["e_before"]), 1e-30)
        return x_stable and l_done

    state = _alternate(spec, sites, graph, lines0, x, q_updater, stop_rule,
                       max_outer, tr_config)
    return BcdState(lines=state.lines, x=state.q, trace=state.trace,
                    converged=state.converged, outer_iters=state.outer_iters)
