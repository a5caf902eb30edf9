"""Slow reference solver for :class:`~jmbfair.cone_solver.ConvexQcqp`.

Used only to cross-check the interior-point solver.  Eliminating the epigraph
variables turns the problem into ``min_{||x||^2 <= P} max_l phi_l(x)`` over a
handful of convex quadratics ``phi_l``.  By minimax duality this equals
``max_{w in simplex} D(w)`` where ``D(w)`` minimizes the weighted sum of the
pieces over the ball.  ``D`` is maximized by accelerated projected gradient
ascent; each inner ball-constrained quadratic is solved by bisection on its
multiplier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cone_solver import ConvexQcqp

__all__ = ["ReferenceResult", "reference_solve", "ball_quadratic_min", "project_simplex"]


@dataclass(frozen=True, eq=False)
class ReferenceResult:
    x: np.ndarray
    objective: float
    lower_bound: float
    iterations: int

    @property
    def gap(self) -> float:
        return self.objective - self.lower_bound


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, n + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def ball_quadratic_min(q: np.ndarray, b: np.ndarray, d: float, radius2: float) -> tuple[np.ndarray, float]:
    """Minimize ``x'Qx + b'x + d`` over ``||x||^2 <= radius2`` for PSD ``Q``.

    Stationarity gives ``x(mu) = -(Q + mu I)^-1 b / 2``; ``mu >= 0`` is found by
    bisection on ``||x(mu)||^2 = radius2`` when the unconstrained minimizer
    lies outside the ball.
    """
    ev, vec = np.linalg.eigh(0.5 * (q + q.T))
    ev = np.maximum(ev, 0.0)
    bt = vec.T @ b
    tiny = 1e-14 * max(ev.max(initial=0.0), 1.0)

    def x_of(mu):
        den = 2.0 * (ev + mu)
        coef = np.where(den > tiny, -bt / np.where(den > tiny, den, 1.0), 0.0)
        return vec @ coef

    x0 = x_of(0.0)
    # an unbounded direction (zero curvature, nonzero slope) forces the ball to bind
    unbounded = np.any((ev <= tiny) & (np.abs(bt) > 1e-14 * max(1.0, np.abs(bt).max())))
    if not unbounded and x0 @ x0 <= radius2:
        return x0, float(x0 @ q @ x0 + b @ x0 + d)
    lo, hi = 0.0, max(1.0, ev.max(initial=0.0))
    while np.sum((bt / (2.0 * (ev + hi))) ** 2) > radius2:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if np.sum((bt / (2.0 * (ev + mid))) ** 2) > radius2:
            lo = mid
        else:
            hi = mid
    coef = -bt / (2.0 * (ev + hi))
    x = vec @ coef
    return x, float(x @ q @ x + b @ x + d)


def _pieces(qp: ConvexQcqp):
    private, common = qp.private, qp.common
    out = []
    for p in private:
        c = p.coupling[1]
        if common and c > 0:
            for cm in common:
                out.append((p.q + c * cm.q, p.b + c * cm.b, p.d + c * cm.d))
        else:
            out.append((p.q, p.b, p.d))
    return out


def reference_solve(qp: ConvexQcqp, tol: float = 1e-10, max_iter: int = 4000) -> ReferenceResult:
    """Bracket the optimum between a primal value and a dual lower bound.

    ``objective`` is attained by ``x``; ``lower_bound`` is a certified lower
    bound.  The ascent stops once the two agree to ``tol`` (relative) or after
    ``max_iter`` steps; a nonsmooth dual (singular weighted forms) can leave a
    wider bracket, which callers should inspect via :attr:`ReferenceResult.gap`.
    """
    pieces = _pieces(qp)
    qs = np.array([p[0] for p in pieces])
    bs = np.array([p[1] for p in pieces])
    ds = np.array([p[2] for p in pieces])
    n = len(pieces)

    def values(x):
        return np.einsum("i,lij,j->l", x, qs, x) + bs @ x + ds

    def inner(w):
        x, val = ball_quadratic_min(np.tensordot(w, qs, 1), w @ bs, float(w @ ds), qp.power_cap)
        return x, val

    w = np.full(n, 1.0 / n)
    x, dual = inner(w)
    best_x, best_primal = x, float(values(x).max())
    best_dual = dual
    it = 0
    if n > 1:
        # accelerated projected gradient ascent with backtracking and restart
        step, mom = 1.0, 1.0
        w_prev = w
        for it in range(1, max_iter + 1):
            mom_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * mom * mom))
            y = project_simplex(w + ((mom - 1.0) / mom_next) * (w - w_prev))
            xy, dy = inner(y)
            grad = values(xy)
            while True:
                w_new = project_simplex(y + step * grad)
                x_new, dual_new = inner(w_new)
                diff = w_new - y
                if dual_new >= dy + grad @ diff - (diff @ diff) / (2.0 * step) - 1e-15 * abs(dy):
                    break
                step *= 0.5
                if step < 1e-20:
                    break
            if dual_new < dual:
                # the momentum overshot: restart from the last iterate
                mom_next = 1.0
                w_new, x_new, dual_new = w, x, dual
            w_prev, w, x, dual = w, w_new, x_new, dual_new
            mom = mom_next
            step *= 1.2
            best_dual = max(best_dual, dual)
            primal = float(values(x).max())
            if primal < best_primal:
                best_primal, best_x = primal, x
            if best_primal - best_dual <= tol * max(1.0, abs(best_primal)):
                break
    else:
        best_primal = float(values(x).max())
        best_dual = best_primal
    return ReferenceResult(x=best_x, objective=best_primal, lower_bound=best_dual, iterations=it)
