"""Mean-field variational inference over the detection indicators.

The factorized posterior keeps a Bernoulli marginal q_i per site and a point
estimate per tangent. Optimization alternates a trust-region solve of the
expected energy over tangents (at fixed Q) with coordinate-ascent sweeps of
the marginals (at fixed L):

    q_i <- sigmoid(-(sum_j w_ij psi_ij q_j + psi_i))

applied in raster order of site id, using already-updated neighbors
(Gauss-Seidel). A damped Jacobi variant exists behind ``parallel_updates``.
Constraining q to {0, 1} and replacing the sweep with ICM turns the whole
loop into plain block-coordinate descent over (L, X) — the ``degenerate``
family — which is exactly how the bcd module runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.special import expit

from .energy import (
    ProblemSpec,
    SiteSet,
    expected_energy,
    potential_tables,
    unary_potentials,
)
from .errors import ConfigurationError, NumericalError
from .geometry import TangentLine
from .solver import TrustRegionConfig, build_residuals, lm_solve

try:  # optional acceleration; the pure-python kernels below stay authoritative
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - environment dependent
    numba = None
    HAVE_NUMBA = False


def _gauss_seidel_kernel(q, psi_i, psi_ij, weights, indptr, nbr_sites, nbr_pairs):
    """One in-place raster-order sweep; returns max |delta q_i|."""
    max_delta = 0.0
    for i in range(q.shape[0]):
        s = psi_i[i]
        for t in range(indptr[i], indptr[i + 1]):
            p = nbr_pairs[t]
            s += weights[p] * psi_ij[p] * q[nbr_sites[t]]
        t = -s
        if t >= 0.0:
            new = 1.0 / (1.0 + math.exp(-t))
        else:
            e = math.exp(t)
            new = e / (1.0 + e)
        d = abs(new - q[i])
        if d > max_delta:
            max_delta = d
        q[i] = new
    return max_delta


def _icm_kernel(x, psi_i, psi_ij, weights, indptr, nbr_sites, nbr_pairs):
    """One in-place raster-order ICM sweep; returns max |delta x_i|.

    Flips only on strict decrease (ties keep the current label)."""
    max_delta = 0.0
    for i in range(x.shape[0]):
        s = psi_i[i]
        for t in range(indptr[i], indptr[i + 1]):
            p = nbr_pairs[t]
            s += weights[p] * psi_ij[p] * x[nbr_sites[t]]
        if s < 0.0:
            new = 1.0
        elif s > 0.0:
            new = 0.0
        else:
            new = x[i]
        d = abs(new - x[i])
        if d > max_delta:
            max_delta = d
        x[i] = new
    return max_delta


if HAVE_NUMBA:
    _gauss_seidel_fast = numba.njit(cache=True)(_gauss_seidel_kernel)
    _icm_fast = numba.njit(cache=True)(_icm_kernel)
else:  # pragma: no cover - environment dependent
    _gauss_seidel_fast = _gauss_seidel_kernel
    _icm_fast = _icm_kernel


def init_marginals(spec: ProblemSpec, sites: SiteSet, lines: TangentLine) -> np.ndarray:
    """q0_i = sigmoid(-psi_i) with psi evaluated at the initial tangents."""
    return expit(-unary_potentials(spec, sites, lines))


def _sweep_args(graph, tables):
    psi_i, psi_ij = tables
    return (
        np.asarray(psi_i, dtype=float),
        np.asarray(psi_ij, dtype=float),
        graph.weights,
        graph.indptr,
        graph.neighbor_sites,
        graph.neighbor_pairs,
    )


def mean_field_sweep(spec, sites, graph, lines, q, *, parallel_updates=False,
                     damping=0.5, tables=None):
    """One sweep of the marginal updates; returns (q', max_delta)."""
    if tables is None:
        tables = potential_tables(spec, sites, graph, lines)
    q = np.array(q, dtype=float)
    if parallel_updates:
        psi_i, psi_ij, w, *_ = _sweep_args(graph, tables)
        s = psi_i.copy()
        i, j = graph.pairs[:, 0], graph.pairs[:, 1]
        np.add.at(s, i, w * psi_ij * q[j])
        np.add.at(s, j, w * psi_ij * q[i])
        target = expit(-s)
        q_new = (1.0 - damping) * q + damping * target
        return q_new, float(np.abs(q_new - q).max(initial=0.0))
    delta = _gauss_seidel_fast(q, *_sweep_args(graph, tables))
    return q, float(delta)


def icm_sweep(spec, sites, graph, lines, x, *, tables=None):
    """One raster-order ICM sweep over hard indicators; returns (x', max_delta)."""
    if tables is None:
        tables = potential_tables(spec, sites, graph, lines)
    x = np.array(x, dtype=float)
    delta = _icm_fast(x, *_sweep_args(graph, tables))
    return x, float(delta)


def icm_until_stable(spec, sites, graph, lines, x, max_sweeps=100):
    """ICM sweeps until a full pass makes no flip; returns (x', info)."""
    tables = potential_tables(spec, sites, graph, lines)
    total = 0.0
    for sweeps in range(1, max_sweeps + 1):
        x, delta = icm_sweep(spec, sites, graph, lines, x, tables=tables)
        total = max(total, delta)
        if delta == 0.0:
            break
    return x, {"max_delta": total, "sweeps": sweeps, "converged": delta == 0.0}


@dataclass
class MeanFieldResult:
    q: np.ndarray
    converged: bool
    sweeps: int
    max_delta: float
    energies: Optional[List[float]] = None


def run_mean_field(spec, sites, graph, lines, q0, tol=1e-6, max_sweeps=100, *,
                   parallel_updates=False, tables=None, record_energies=False,
                   sweep=None) -> MeanFieldResult:
    """Sweep until max |delta q| < tol or the sweep budget runs out.

    The first pass doubles as convergence verification: a Q0 already at the
    fixed point converges after that single sweep.
    """
    if tol <= 0:
        raise ConfigurationError("tol must be > 0")
    if max_sweeps < 1:
        raise ConfigurationError("max_sweeps must be >= 1")
    if tables is None:
        tables = potential_tables(spec, sites, graph, lines)
    if sweep is None:
        def sweep(q):
            return mean_field_sweep(spec, sites, graph, lines, q,
                                    parallel_updates=parallel_updates,
                                    tables=tables)
    q = np.array(q0, dtype=float)
    energies = [] if record_energies else None
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        q, delta = sweep(q)
        if record_energies:
            energies.append(expected_energy(spec, sites, graph, lines, q))
        if delta < tol:
            converged = True
            break
    return MeanFieldResult(q, converged, sweeps, delta, energies)


def entropy(q: np.ndarray) -> float:
    """Sum of Bernoulli entropies (natural log), with 0 log 0 = 0."""
    q = np.clip(np.asarray(q, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(q > 0, q * np.log(q), 0.0) - np.where(
            q < 1, (1 - q) * np.log(1 - q), 0.0
        )
    return float(np.sum(h))


def free_energy(spec, sites, graph, lines, q) -> float:
    """Expected energy minus entropy: the negative ELBO up to a constant.

    This is the quantity the marginal sweeps actually descend; the expected
    energy alone may move either way across a Q-step.
    """
    return expected_energy(spec, sites, graph, lines, q) - entropy(q)


def elbo(spec, sites, graph, lines, q) -> float:
    return -free_energy(spec, sites, graph, lines, q)


@dataclass
class InferenceState:
    lines: TangentLine
    q: np.ndarray
    trace: List[dict] = field(default_factory=list)
    converged: bool = False
    outer_iters: int = 0


def _alternate(spec, sites, graph, lines, q, q_updater, stop_rule, max_outer,
               tr_config, trace_hook=None) -> InferenceState:
    """Shared L/Q alternation used by both inference families and bcd."""
    state = InferenceState(lines=lines, q=np.array(q, dtype=float))
    e = expected_energy(spec, sites, graph, state.lines, state.q)
    state.trace.append({
        "outer": 0, "phase": "init", "expected_energy": e,
        "elbo": elbo(spec, sites, graph, state.lines, state.q),
        "max_delta": 0.0, "accepted_steps": 0,
    })
    for outer in range(1, max_outer + 1):
        state.outer_iters = outer
        e_before = e

        system = build_residuals(spec, sites, graph, state.lines, state.q)
        try:
            state.lines, stats = lm_solve(system, tr_config)
        except NumericalError as exc:
            raise NumericalError(
                f"tangent solve failed at outer iteration {outer}: {exc}"
            ) from exc
        accepted = sum(1 for s in stats if s["accepted"])
        e_l = expected_energy(spec, sites, graph, state.lines, state.q)
        state.trace.append({
            "outer": outer, "phase": "L", "expected_energy": e_l,
            "elbo": elbo(spec, sites, graph, state.lines, state.q),
            "max_delta": 0.0, "accepted_steps": accepted,
        })

        state.q, q_info = q_updater(state.lines, state.q)
        e = expected_energy(spec, sites, graph, state.lines, state.q)
        state.trace.append({
            "outer": outer, "phase": "Q", "expected_energy": e,
            "elbo": elbo(spec, sites, graph, state.lines, state.q),
            "max_delta": q_info.get("max_delta", 0.0),
            "accepted_steps": accepted,
        })
        if trace_hook is not None:
            trace_hook(state.trace[-2])
            trace_hook(state.trace[-1])
        ctx = {
            "e_before": e_before, "e_after_l": e_l, "e_after_q": e,
            "q_info": q_info, "outer": outer,
        }
        if stop_rule(ctx):
            state.converged = True
            break
    return state


def run_inference(spec, sites, graph, lines0, outer_tol=1e-6, max_outer=50, *,
                  family="mean_field", x0=None, tr_config=TrustRegionConfig(),
                  mf_tol=1e-6, mf_max_sweeps=100, parallel_updates=False,
                  trace_hook: Optional[Callable[[dict], None]] = None) -> InferenceState:
    """Alternate tangent solves with marginal updates until the expected
    energy settles (relative change below ``outer_tol``) or ``max_outer``.

    ``family="degenerate"`` restricts q to {0, 1} and replaces the sweep
    with ICM, reproducing plain block-coordinate descent.
    """
    if family not in ("mean_field", "degenerate"):
        raise ConfigurationError(f"unknown family {family!r}")
    if family == "mean_field":
        q = init_marginals(spec, sites, lines0) if x0 is None else np.asarray(
            x0, dtype=float)

        def q_updater(lines, q):
            res = run_mean_field(spec, sites, graph, lines, q, tol=mf_tol,
                                 max_sweeps=mf_max_sweeps,
                                 parallel_updates=parallel_updates)
            return res.q, {"max_delta": res.max_delta, "sweeps": res.sweeps,
                           "converged": res.converged}
    else:
        if x0 is None:
            q = (init_marginals(spec, sites, lines0) >= 0.5).astype(float)
        else:
            q = np.asarray(x0, dtype=float)

        def q_updater(lines, q):
            return icm_until_stable(spec, sites, graph, lines, q)

    def stop_rule(ctx):
        change = abs(ctx["e_after_q"] - ctx["e_before"])
        return change < outer_tol * max(abs(ctx["e_before"]), 1e-30)

    return _alternate(spec, sites, graph, lines0, q, q_updater, stop_rule,
                      max_outer, tr_config, trace_hook)


def fixed_point_residual(spec, sites, graph, lines, q) -> np.ndarray:
    """|q_i - sigmoid(-(sum_j w_ij psi_ij q_j + psi_i))| per site."""
    psi_i, psi_ij = potential_tables(spec, sites, graph, lines)
    s = psi_i.copy()
    i, j = graph.pairs[:, 0], graph.pairs[:, 1]
    w = graph.weights
    np.add.at(s, i, w * psi_ij * q[j])
    np.add.at(s, j, w * psi_ij * q[i])
    return np.abs(q - expit(-s))
