"""Self-check suites pitting each fast path against an independent oracle.

* water-filling against level bisection,
* the interior-point solver against the minimax reference solver,
* quadratic-form AWMSE evaluation against direct per-realization averaging,
* MMSE duality: augmented WMSE at the MMSE point equals ``1 - rate``.

Every suite is seeded and returns a :class:`SuiteResult`; :func:`run_all`
drives them for the ``verify`` command.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import awmse, cone_solver, mmse, partition
from .mmse import Precoder
from .model import RngStream, complex_normal, draw_sample_set, Channel
from .qcqp_reference import ball_quadratic_min, reference_solve

__all__ = [
    "SuiteResult",
    "random_precoder",
    "random_instance",
    "random_qcqp",
    "check_waterfill",
    "check_solver",
    "check_ball_examples",
    "check_two_path",
    "check_duality",
    "run_all",
]


@dataclass(frozen=True)
class SuiteResult:
    name: str
    cases: int
    worst: float
    tolerance: float
    failures: int = 0

    @property
    def passed(self) -> bool:
        return self.failures == 0 and self.worst <= self.tolerance

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"{flag} {self.name}: {self.cases} cases, worst {self.worst:.3e} "
                f"(tolerance {self.tolerance:.1e}), {self.failures} failure(s)")


def random_precoder(gen: np.random.Generator, n_tx: int, n_users: int, power: float) -> Precoder:
    mat = complex_normal(gen, (n_tx, n_users + 1))
    mat *= math.sqrt(power) / np.linalg.norm(mat)
    return Precoder.from_matrix(mat)


def random_instance(rng: RngStream, n_tx: int, n_users: int, m_count: int,
                    power: float = 10.0, sigma_e2: float = 0.1):
    """Sample set plus a random full-power precoder."""
    gen = rng.child(0).generator()
    est = Channel(complex_normal(gen, (n_tx, n_users)))
    ss = draw_sample_set(rng.child(1), est, sigma_e2, m_count)
    pre = random_precoder(rng.child(2).generator(), n_tx, n_users, power)
    return ss, pre


def random_qcqp(rng: RngStream, n_tx: int, n_users: int) -> cone_solver.ConvexQcqp:
    """A precoder-update problem built from random but realistic AWMSE data."""
    gen = rng.child(9).generator()
    power = float(10.0 ** gen.uniform(-0.5, 2.0))
    m_count = int(gen.integers(1, 12))
    noise = float(10.0 ** gen.uniform(-0.5, 0.5))
    ss, pre = random_instance(rng, n_tx, n_users, m_count, power, float(gen.uniform(0.0, 0.5)))
    gw = awmse.update_equalizers_weights(ss, pre, noise)
    comp = awmse.build_components(ss, gw, noise)
    coeffs = gen.dirichlet(np.ones(n_users))
    return cone_solver.assemble(comp, coeffs, noise, power)


def check_waterfill(n: int = 1000, seed: int = 1) -> SuiteResult:
    gen = RngStream(seed, 101).generator()
    worst, failures = 0.0, 0
    for _ in range(n):
        k = int(gen.integers(1, 7))
        rc = float(gen.exponential(2.0))
        r = gen.exponential(2.0, k)
        if gen.random() < 0.2:
            r[gen.integers(0, k, size=k)] = r[0]  # ties
        wf = partition.waterfill(rc, r)
        lp = partition.lp_oracle(rc, r)
        worst = max(worst, float(np.abs(wf.coeffs - lp.coeffs).max()) / 1e-7,
                    abs(wf.level - lp.level) / 1e-9)
        totals = r + wf.coeffs * rc
        active = wf.coeffs > 0
        if (np.any(wf.coeffs < 0) or abs(wf.coeffs.sum() - 1.0) > 1e-12
                or np.any(np.abs(totals[active] - wf.level) > 1e-12 * max(1.0, wf.level))
                or np.any(r[~active] < wf.level - 1e-12 * max(1.0, wf.level))):
            failures += 1
    # worst is reported relative to the tolerances (1e-7 on c, 1e-9 on level)
    return SuiteResult("waterfill vs level bisection", n, worst, 1.0, failures)


_SOLVER_SHAPES = ((1, 1), (2, 1), (1, 2))


def check_solver(n: int = 50, seed: int = 2, tol: float = 1e-9) -> SuiteResult:
    worst, failures = 0.0, 0
    for i in range(n):
        n_tx, n_users = _SOLVER_SHAPES[i % len(_SOLVER_SHAPES)]
        qp = random_qcqp(RngStream(seed, 202, (i,)), n_tx, n_users)
        rep = cone_solver.solve(qp, tol=tol)
        ref = reference_solve(qp)
        scale = max(1.0, abs(ref.objective))
        # an inconclusive reference bracket counts as a failure, not a pass
        if not rep.optimal or rep.kkt_residual > 1e-8 or ref.gap > 1e-7 * scale:
            failures += 1
        worst = max(worst, abs(rep.xi - ref.objective) / scale)
    return SuiteResult("interior point vs reference solver", n, worst, 1e-6, failures)


def ball_example(cap: float) -> cone_solver.ConvexQcqp:
    """min ||x||^2 - 2 x_1 over ||x||^2 <= cap in two real dimensions."""
    con = cone_solver.QuadConstraint(np.eye(2), np.array([-2.0, 0.0]), 0.0, (-1.0, 0.0))
    return cone_solver.ConvexQcqp(2, [con], cap, has_common=False)


def check_ball_examples() -> SuiteResult:
    """Optimal values to 1e-9; the minimizer only to 1e-6.

    Near an interior optimum the objective is flat to second order, so a
    complementarity gap of ``g`` pins ``x`` only to about ``sqrt(g)``.
    """
    worst = 0.0
    for cap in (4.0, 0.25):
        rep = cone_solver.solve(ball_example(cap), tol=1e-12)
        r = min(1.0, math.sqrt(cap))
        x_ref, obj_ref = ball_quadratic_min(np.eye(2), np.array([-2.0, 0.0]), 0.0, cap)
        exact = r * r - 2.0 * r
        worst = max(worst, abs(rep.xi - exact), abs(obj_ref - exact),
                    1e-3 * float(np.abs(rep.x - [r, 0.0]).max()),
                    1e-3 * float(np.abs(x_ref - [r, 0.0]).max()))
    return SuiteResult("closed-form ball examples", 2, worst, 1e-9)


def check_two_path(n: int = 100, seed: int = 3) -> SuiteResult:
    worst = 0.0
    for i in range(n):
        rng = RngStream(seed, 303, (i,))
        gen = rng.child(5).generator()
        n_tx = int(gen.integers(1, 4))
        n_users = int(gen.integers(1, n_tx + 1))
        ss, pre = random_instance(rng, n_tx, n_users, int(gen.integers(1, 40)))
        gw = awmse.update_equalizers_weights(ss, pre, 1.0)
        comp = awmse.build_components(ss, gw, 1.0)
        # evaluate at a different precoder than the one the weights came from
        other = random_precoder(rng.child(6).generator(), n_tx, n_users, 10.0)
        xc, xp = awmse.realization_awmse(ss, other, 1.0, gw)
        qc, qp = awmse.awmse_eval(comp, other, 1.0)
        scale = max(1.0, float(np.abs(xc).max()), float(np.abs(xp).max()))
        worst = max(worst, float(np.abs(xc.mean(axis=1) - qc).max()) / scale,
                    float(np.abs(xp.mean(axis=1) - qp).max()) / scale)
    return SuiteResult("AWMSE quadratic form vs direct average", n, worst, 1e-10)


def check_duality(n: int = 100, seed: int = 4) -> SuiteResult:
    worst = 0.0
    for i in range(n):
        rng = RngStream(seed, 404, (i,))
        gen = rng.child(5).generator()
        n_tx = int(gen.integers(1, 4))
        n_users = int(gen.integers(1, n_tx + 1))
        power = float(10.0 ** gen.uniform(-1.0, 3.5))
        ss, pre = random_instance(rng, n_tx, n_users, int(gen.integers(1, 40)), power)
        # single realization through the scalar module
        h = ss.realizations[0]
        for k in range(n_users):
            ls = mmse.link_stats(h[:, k], pre, 1.0, k)
            rp = mmse.rates(ls)
            g_c, g_p = mmse.mmse_equalizers(h[:, k], pre, 1.0, k)
            u_c, u_p = mmse.mmse_weights(*mmse.mmse_values(ls))
            xi_c, xi_p = mmse.augmented_wmse(h[:, k], pre, 1.0, k,
                                             mmse.UserPoint(g_c, g_p, u_c, u_p))
            worst = max(worst, abs(xi_c - (1.0 - rp.common)), abs(xi_p - (1.0 - rp.private)))
        # sample averages through the batched module
        gw = awmse.update_equalizers_weights(ss, pre, 1.0)
        avg = awmse.sample_average_rates(ss, pre, 1.0)
        qc, qp = awmse.awmse_eval(awmse.build_components(ss, gw, 1.0), pre, 1.0)
        worst = max(worst, float(np.abs(qc - (1.0 - avg.common)).max()),
                    float(np.abs(qp - (1.0 - avg.private)).max()))
    return SuiteResult("MMSE duality identities", n, worst, 1e-10)


SUITES: dict[str, Callable[[], SuiteResult]] = {
    "waterfill": check_waterfill,
    "solver": check_solver,
    "ball": check_ball_examples,
    "two-path": check_two_path,
    "duality": check_duality,
}


def run_all(names=None) -> list[SuiteResult]:
    names = list(SUITES) if names is None else list(names)
    return [SUITES[name]() for name in names]
