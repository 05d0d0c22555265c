"""Inexact Levenberg-Marquardt trust region over tangent parameters.

The expected energy at fixed marginals Q is a weighted nonlinear least
squares problem in the tangent parameters (anchor coordinates plus one angle
in 2D, two in 3D). Residual rows:

  pair (i,j), direction i->j:  sqrt(w_ij q_i q_j [w_abs]) * dist(l_i, p_j)/sep
  site i, truncated distance:  sqrt(q_i)/sigma_i_eff * max(0, dist - tau)
  site i, euclidean distance:  sqrt(q_i)/sigma_i_eff * rejection components
  site i, alignment:           sqrt(beta q_i [irls]) * rejection of g_i

Denoised points (and the IRLS weights of the absolute mode) are constants of
each linearization, refreshed when a step is accepted; every row therefore
depends on exactly one site's parameters. Directed distances are realized as
signed crosses (2D) or rejection components (3D), so the rows are smooth.

The damped normal equations (J^T J + lm * diag(J^T J)) delta = -J^T r are
solved by preconditioned conjugate gradients with a per-site block-Jacobi
preconditioner to a loose tolerance (the "inexact" part), tightened near
convergence. Gain ratio rho gates acceptance; the damping follows Nielsen's
schedule on accept and doubles on reject. Step acceptance is always judged
on the true expected energy, so accepted steps decrease it by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse

from . import autodiff as ad
from .autodiff import Dual
from .energy import ProblemSpec, SiteSet, denoised_points, expected_energy, misalignment
from .errors import ConfigurationError, NumericalError
from .geometry import DENOM_CLAMP, TangentLine, directions_to_angles, point_line_distance

Q_CUTOFF = 1e-12
ABS_WEIGHT_CLAMP = (1e-3, 1e3)


@dataclass(frozen=True)
class TrustRegionConfig:
    initial_damping: float = 1e-3
    damping_up: float = 2.0
    accept_threshold: float = 0.0
    max_iters: int = 50
    inner_tol: float = 1e-2
    inner_tol_final: float = 1e-6
    g_tol: float = 1e-8
    rel_decrease_tol: float = 1e-9
    max_cg_iters: int = 200
    max_rejects: int = 25

    def __post_init__(self):
        if self.initial_damping <= 0:
            raise ConfigurationError("initial damping must be > 0")
        if self.damping_up <= 1:
            raise ConfigurationError("damping factors must be > 1")


def abs_curvature_weights(lines: TangentLine, points: np.ndarray, pairs: np.ndarray,
                          epsilon: float) -> np.ndarray:
    """IRLS weights turning squared distances into absolute-curvature terms.

    Returns shape (P, 2): column 0 weights the dist(l_i, p_j) term, column 1
    the dist(l_j, p_i) term; w = (||p_i - p_j|| + eps)/(dist + eps), clamped.
    """
    if epsilon < 0:
        raise ConfigurationError("epsilon must be >= 0")
    i, j = pairs[:, 0], pairs[:, 1]
    sep = np.linalg.norm(points[i] - points[j], axis=-1)
    d_ij = point_line_distance(lines[i], points[j])
    d_ji = point_line_distance(lines[j], points[i])
    w = np.stack([(sep + epsilon) / (d_ij + epsilon),
                  (sep + epsilon) / (d_ji + epsilon)], axis=1)
    return np.clip(w, *ABS_WEIGHT_CLAMP)


def _angles_of(direction: np.ndarray) -> np.ndarray:
    return directions_to_angles(direction)


def _direction_components(angles, dim):
    """Unit direction components from angle parameters (Dual or ndarray)."""
    if dim == 2:
        (t,) = angles
        return [ad.cos(t), ad.sin(t)]
    a, e = angles
    ce = ad.cos(e)
    return [ce * ad.cos(a), ce * ad.sin(a), ad.sin(e)]


class ResidualSystem:
    """Weighted residuals + sparse Jacobian of the expected energy at fixed Q.

    Frozen per linearization: denoised points, pair separations, abs-mode and
    alignment IRLS weights. ``rebuild(lines)`` refreshes everything at new
    tangents (the accepted-step hook).
    """

    def __init__(self, spec: ProblemSpec, sites: SiteSet, graph, lines: TangentLine,
                 q: np.ndarray):
        self.spec = spec
        self.sites = sites
        self.graph = graph
        self.q = np.asarray(q, dtype=float)
        if self.q.shape != (sites.n,):
            raise ConfigurationError("q length mismatch")
        self.dim = sites.dim
        self.n_params_per_site = self.dim + (self.dim - 1)
        self.rebuild(lines)

    # -- assembly ---------------------------------------------------------

    def rebuild(self, lines: TangentLine):
        spec, sites, graph, q = self.spec, self.sites, self.graph, self.q
        self.lines = lines
        self.points = denoised_points(spec, sites, lines)

        self.active = np.flatnonzero(q >= Q_CUTOFF)
        self.param_slot = np.full(sites.n, -1, dtype=np.int64)
        self.param_slot[self.active] = np.arange(self.active.size)
        self.n_params = self.active.size * self.n_params_per_site

        prod = q[graph.pairs[:, 0]] * q[graph.pairs[:, 1]]
        self.kept_pairs = np.flatnonzero(prod >= Q_CUTOFF)
        pairs = graph.pairs[self.kept_pairs]

        if spec.curvature.kind == "absolute":
            self.abs_w = abs_curvature_weights(lines, self.points, pairs,
                                               spec.curvature.epsilon)
        else:
            self.abs_w = None

        if spec.beta > 0 and sites.priors is not None and spec.alignment_power == 1:
            m = misalignment(lines, sites.priors)
            self.align_irls = 1.0 / (m + spec.curvature.epsilon)
        else:
            self.align_irls = None

        self._assemble(pairs)
        if not np.all(np.isfinite(self.residuals)):
            bad = int(np.flatnonzero(~np.isfinite(self.residuals))[0])
            raise NumericalError(f"non-finite residual in block {self.row_site[bad]}"
                                 f" (row {bad})")

        # constant-in-L part of the expected energy: lambda and -gamma terms
        # plus dropped sites/pairs at their frozen values. In squared mode
        # objective() + q_const equals expected_energy (the identity the
        # tests check); in absolute mode objective() is the IRLS surrogate.
        gi, gj = graph.pairs[:, 0], graph.pairs[:, 1]
        const = float(np.sum(sites.lambdas * q))
        const -= spec.gamma * float(np.sum(graph.weights * q[gi] * q[gj]))
        dropped = np.ones(graph.pairs.shape[0], dtype=bool)
        dropped[self.kept_pairs] = False
        if dropped.any():
            from .geometry import curvature_pair

            di, dj = gi[dropped], gj[dropped]
            kap = curvature_pair(lines[di], lines[dj], self.points[di],
                                 self.points[dj], spec.curvature)
            const += float(np.sum(graph.weights[dropped] * kap * q[di] * q[dj]))
        off = np.flatnonzero(q < Q_CUTOFF)
        if off.size:
            from .energy import unary_potentials

            psi = unary_potentials(spec, sites, lines)
            const += float(np.sum((psi[off] - sites.lambdas[off]) * q[off]))
        self.q_const = const

    def _assemble(self, pairs):
        """Evaluate all residual rows and their per-site derivative blocks."""
        vals, ders, row_site = [], [], []
        for group_vals, group_ders, group_sites in self._row_groups(pairs, dual=True):
            vals.append(group_vals)
            ders.append(group_ders)
            row_site.append(group_sites)
        if vals:
            self.residuals = np.concatenate(vals)
            self.row_ders = np.concatenate(ders, axis=0)
            self.row_site = np.concatenate(row_site)
        else:
            self.residuals = np.zeros(0)
            self.row_ders = np.zeros((0, self.n_params_per_site))
            self.row_site = np.zeros(0, dtype=np.int64)
        self._jacobian = None

    def _site_params(self, site_ids, dual: bool):
        """Anchor/angle parameters for the given sites (seeded Duals or floats)."""
        K = self.n_params_per_site
        a = self.lines.anchor[site_ids]
        ang = _angles_of(self.lines.direction[site_ids])
        if not dual:
            return ([a[:, c] for c in range(self.dim)],
                    [ang[:, c] for c in range(ang.shape[1])])
        anchors = [Dual.variable(a[:, c], c, K) for c in range(self.dim)]
        angles = [Dual.variable(ang[:, c], self.dim + c, K)
                  for c in range(ang.shape[1])]
        return anchors, angles

    def _row_groups(self, pairs, dual: bool):
        """Yield (values, derivative rows, site ids) per residual family."""
        spec, sites, q = self.spec, self.sites, self.q
        w_pair = self.graph.weights[self.kept_pairs]
        K = self.n_params_per_site

        def finish(rows, site_ids):
            if isinstance(rows[0], Dual):
                val = np.concatenate([r.val for r in rows])
                der = np.concatenate([r.der for r in rows], axis=0)
            else:
                val = np.concatenate(rows)
                der = np.zeros((val.size, K))
            return val, der, np.concatenate([site_ids] * len(rows))

        # curvature rows: one direction per (ordered) endpoint of each pair
        if pairs.size:
            i, j = pairs[:, 0], pairs[:, 1]
            sep = np.linalg.norm(self.points[i] - self.points[j], axis=-1)
            sep = np.maximum(sep, DENOM_CLAMP)
            base = w_pair * q[i] * q[j]
            for side, (s_ids, t_ids) in enumerate(((i, j), (j, i))):
                coeff = base.copy()
                if self.abs_w is not None:
                    coeff = coeff * self.abs_w[:, side]
                coeff = np.sqrt(coeff) / sep
                anchors, angles = self._site_params(s_ids, dual)
                dhat = _direction_components(angles, self.dim)
                target = [self.points[t_ids][:, c] for c in range(self.dim)]
                rows = self._distance_rows(anchors, dhat, target, signed=True)
                yield finish([coeff * r for r in rows], s_ids)

        # site distance rows
        sid = np.flatnonzero(q >= Q_CUTOFF)
        if sid.size:
            if sites.scales is not None:
                s_eff = spec.k * sites.scales[sid]
            else:
                s_eff = np.full(sid.size, spec.sigma)
            coeff = np.sqrt(q[sid]) / s_eff
            anchors, angles = self._site_params(sid, dual)
            dhat = _direction_components(angles, self.dim)
            target = [sites.positions[sid][:, c] for c in range(self.dim)]
            if spec.distance == "truncated":
                rows = self._distance_rows(anchors, dhat, target, signed=True)
                d = ad.absolute(rows[0]) if self.dim == 2 else ad.norm(rows)
                yield finish([ad.hinge(d - spec.tau) * coeff], sid)
            else:
                rows = self._distance_rows(anchors, dhat, target, signed=True)
                yield finish([r * coeff for r in rows], sid)

            # alignment rows share the site set
            if spec.beta > 0 and sites.priors is not None:
                coeff = spec.beta * q[sid]
                if self.align_irls is not None:
                    coeff = coeff * self.align_irls[sid]
                coeff = np.sqrt(coeff)
                g = [sites.priors[sid][:, c] for c in range(self.dim)]
                along = ad.dot(g, dhat)
                rej = [gc - along * dc for gc, dc in zip(g, dhat)]
                yield finish([coeff * r for r in rej], sid)

    def _distance_rows(self, anchors, dhat, target, signed: bool):
        """Rows whose squared sum is the point-to-line distance squared.

        2D + signed: single signed-cross row. Otherwise: rejection components
        of (target - anchor) from the unit direction.
        """
        rel = [t - a for t, a in zip(target, anchors)]
        if self.dim == 2 and signed:
            return [rel[0] * dhat[1] - rel[1] * dhat[0]]
        along = ad.dot(rel, dhat)
        return [r - along * d for r, d in zip(rel, dhat)]

    # -- views ------------------------------------------------------------

    @property
    def n_rows(self) -> int:
        return self.residuals.size

    def objective(self) -> float:
        """Sum of squared residuals at the current linearization point."""
        return float(np.sum(self.residuals**2))

    def jacobian(self) -> sparse.csr_matrix:
        """Sparse Jacobian: row r has nonzeros only in its site's K columns."""
        if self._jacobian is None:
            K = self.n_params_per_site
            r = np.repeat(np.arange(self.n_rows), K)
            c = (self.param_slot[self.row_site][:, None] * K
                 + np.arange(K)[None, :]).ravel()
            self._jacobian = sparse.csr_matrix(
                (self.row_ders.ravel(), (r, c)),
                shape=(self.n_rows, self.n_params),
            )
        return self._jacobian

    def residuals_at(self, delta: np.ndarray) -> np.ndarray:
        """Residual values at params + delta with the linearization's frozen
        points and weights (the function the Jacobian differentiates)."""
        saved_lines = self.lines
        try:
            self.lines = self._apply(delta)
            vals = [v for v, _, _ in self._row_groups(
                self.graph.pairs[self.kept_pairs], dual=False)]
        finally:
            self.lines = saved_lines
        return np.concatenate(vals) if vals else np.zeros(0)

    def _apply(self, delta: np.ndarray) -> TangentLine:
        """New tangents from a parameter increment over the active sites."""
        K = self.n_params_per_site
        delta = delta.reshape(-1, K)
        a = self.lines.anchor.copy()
        v = self.lines.direction.copy()
        a[self.active] += delta[:, : self.dim]
        ang = _angles_of(self.lines.direction[self.active]) + delta[:, self.dim:]
        comps = _direction_components([ang[:, c] for c in range(ang.shape[1])],
                                      self.dim)
        v[self.active] = np.stack(comps, axis=-1)
        return TangentLine(a, v)


def jacobian(system: ResidualSystem, lines: Optional[TangentLine] = None):
    """Jacobian of the system (rebuilt at ``lines`` when given)."""
    if lines is not None:
        system.rebuild(lines)
    return system.jacobian()


def build_residuals(spec: ProblemSpec, sites: SiteSet, graph, lines: TangentLine,
                    q: np.ndarray) -> ResidualSystem:
    return ResidualSystem(spec, sites, graph, lines, q)


# -- preconditioned conjugate gradients ------------------------------------


def _site_blocks(system: ResidualSystem, damped_diag: np.ndarray) -> np.ndarray:
    """Per-site K x K blocks of J^T J + diag(damping), inverted for the
    block-Jacobi preconditioner (rows touch one site, so these blocks ARE
    the nonzero diagonal blocks of the damped normal matrix)."""
    K = system.n_params_per_site
    m = system.active.size
    blocks = np.zeros((m, K, K))
    slots = system.param_slot[system.row_site]
    step = max(1, 200_000)
    for lo in range(0, system.n_rows, step):
        hi = min(system.n_rows, lo + step)
        d = system.row_ders[lo:hi]
        np.add.at(blocks, slots[lo:hi], d[:, :, None] * d[:, None, :])
    dd = damped_diag.reshape(m, K)
    blocks[:, np.arange(K), np.arange(K)] += dd
    try:
        return np.linalg.inv(blocks)
    except np.linalg.LinAlgError:
        # A site whose rows vanish (e.g. all residuals in its dead zone)
        # yields a singular block; the preconditioner only steers PCG, so
        # a pseudo-inverse there is safe.
        return np.linalg.pinv(blocks)


def pcg(matvec, b, apply_minv, tol, max_iters):
    """Standard PCG; returns (x, iterations, converged)."""
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return x, 0, True
    z = apply_minv(r)
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, max_iters + 1):
        Ap = matvec(p)
        pAp = float(p @ Ap)
        if not np.isfinite(pAp) or pAp <= 0:
            raise NumericalError("CG breakdown: non-positive curvature")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= tol * bnorm:
            return x, it, True
        z = apply_minv(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, max_iters, False


def _solve_damped(system: ResidualSystem, g: np.ndarray, lm_damping: float,
                  tol: float, max_cg_iters: int):
    """delta solving (J^T J + lm*diag(J^T J)) delta = -J^T r by PCG."""
    J = system.jacobian()
    diag = np.asarray(J.multiply(J).sum(axis=0)).ravel()
    diag = np.maximum(diag, 1e-10 * max(diag.max() if diag.size else 1.0, 1.0))
    damped = lm_damping * diag
    inv_blocks = _site_blocks(system, damped)
    K = system.n_params_per_site

    def matvec(v):
        return J.T @ (J @ v) + damped * v

    def apply_minv(v):
        return np.einsum("sij,sj->si", inv_blocks, v.reshape(-1, K)).ravel()

    return pcg(matvec, -g, apply_minv, tol, max_cg_iters)


# -- trust region loop ------------------------------------------------------


def lm_solve(system: ResidualSystem, config: TrustRegionConfig = TrustRegionConfig()):
    """Minimize the expected energy over tangents at fixed Q.

    Returns (lines, stats): the optimized tangents and one record per
    iteration {iter, objective, grad_norm, lambda_lm, rho, accepted,
    cg_iters}. ``objective`` is the true expected energy.
    """
    spec, sites, graph, q = system.spec, system.sites, system.graph, system.q
    f = expected_energy(spec, sites, graph, system.lines, q)
    stats = []
    if system.n_rows == 0 or system.n_params == 0:
        return system.lines, stats

    lm = config.initial_damping
    inner_tol = config.inner_tol
    rejects_in_row = 0
    for it in range(1, config.max_iters + 1):
        g = system.jacobian().T @ system.residuals
        gnorm = float(np.abs(g).max())
        if gnorm < config.g_tol:
            break
        try:
            delta, cg_iters, _ = _solve_damped(system, g, lm, inner_tol,
                                               config.max_cg_iters)
        except NumericalError:
            lm *= config.damping_up
            rejects_in_row += 1
            if rejects_in_row > 5:
                raise
            continue

        r_lin = system.residuals + system.jacobian() @ delta
        predicted = system.objective() - float(r_lin @ r_lin)
        candidate = system._apply(delta)
        f_new = expected_energy(spec, sites, graph, candidate, q)
        actual = f - f_new
        rho = actual / predicted if predicted > 0 else -np.inf
        accepted = bool(predicted > 0 and rho > config.accept_threshold
                        and np.isfinite(f_new))
        stats.append({
            "iter": it, "objective": f_new if accepted else f,
            "grad_norm": gnorm, "lambda_lm": lm, "rho": float(rho),
            "accepted": accepted, "cg_iters": cg_iters,
        })
        if accepted:
            rejects_in_row = 0
            lm *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            rel = actual / max(abs(f), 1e-30)
            f = f_new
            system.rebuild(candidate)
            if rel < 1e-6:
                inner_tol = config.inner_tol_final
            if rel < config.rel_decrease_tol:
                break
        else:
            lm *= config.damping_up
            rejects_in_row += 1
            if rejects_in_row >= config.max_rejects or lm > 1e15:
                break
    return system.lines, stats


def minimize_expected_energy(spec: ProblemSpec, sites: SiteSet, graph,
                             lines: TangentLine, q,
                             config: TrustRegionConfig = TrustRegionConfig()):
    """Convenience wrapper: build the system and run the trust region."""
    system = build_residuals(spec, sites, graph, lines, np.asarray(q, dtype=float))
    return lm_solve(system, config)
