"""Alternating optimization of precoders and common-rate partition.

Each iteration

1. sets MMSE equalizers and weights for every realization at the current
   precoder,
2. re-splits the common average rate by water-filling,
3. rebuilds the AWMSE components and solves the convex precoder update.

The objective ``1 - xi`` reported after step 3 never decreases (up to solver
tolerance).  In broadcast-only mode the common stream is switched off and the
partition step is skipped.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import awmse, cone_solver, partition
from .mmse import Precoder
from .model import Channel, SampleSet, Scenario, equivalent_alpha

__all__ = [
    "Init",
    "Mode",
    "AoConfig",
    "IterationRecord",
    "AoResult",
    "AoError",
    "zf_directions",
    "dominant_left_singular_vector",
    "init_zf_e",
    "init_zf_svd",
    "init_bc",
    "ao_solve",
]

log = logging.getLogger(__name__)


class Init(enum.Enum):
    ZF_E = "zf-e"
    ZF_SVD = "zf-svd"


class Mode(enum.Enum):
    JMB = "jmb"
    BC = "bc"


class AoError(RuntimeError):
    """Solver breakdown inside the AO loop; carries the iteration number."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True)
class AoConfig:
    eps_r: float = 1e-4
    n_max: int = 200
    init: Union[Init, Precoder] = Init.ZF_SVD
    mode: Mode = Mode.JMB
    solver_tol: float = 1e-9
    solver_max_iter: int = 100

    def __post_init__(self):
        if not self.eps_r > 0:
            raise ValueError(f"eps_r must be > 0, got {self.eps_r}")
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")


@dataclass(frozen=True)
class IterationRecord:
    """Objective values around one AO iteration.

    ``previous`` is ``1 - xi`` from the last precoder update, ``after_mmse`` the
    SAF objective once equalizers/weights are refreshed (old coefficients),
    ``after_partition`` the same with the new coefficients and ``after_update``
    the solver's ``1 - xi``.  ``saf_objective`` re-evaluates the sampled
    objective at the new precoder for diagnostics.
    """

    previous: float
    after_mmse: float
    after_partition: float
    after_update: float
    saf_objective: float
    solver_iterations: int
    solver_status: str


@dataclass(frozen=True, eq=False)
class AoResult:
    precoder: Precoder
    coeffs: np.ndarray
    objective_trace: list[float]
    converged: bool
    final_rates: awmse.AverageRates
    mode: Mode = Mode.JMB
    records: list[IterationRecord] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.objective_trace)

    @property
    def objective(self) -> float:
        """Sampled min average rate at the final precoder and coefficients."""
        if self.mode is Mode.BC:
            return float(np.min(self.final_rates.private))
        return self.final_rates.min_total(self.coeffs)


def zf_directions(estimate: Channel) -> tuple[np.ndarray, bool]:
    """Unit-norm zero-forcing directions from the channel estimate.

    Returns ``(directions, regularized)``; column ``j`` is orthogonal to every
    estimated channel ``i != j``.  A rank-deficient estimate falls back to
    Tikhonov-regularized directions and sets ``regularized``.
    """
    h = estimate.matrix
    sv = np.linalg.svd(h, compute_uv=False)
    gram = h.conj().T @ h
    regularized = sv.min() <= 1e-12 * max(sv.max(), 1e-300)
    if regularized:
        delta = 1e-8 * max(sv.max(), 1e-300)
        gram = gram + delta * np.eye(gram.shape[0])
        log.warning("rank-deficient channel estimate; using regularized ZF directions")
    dirs = h @ np.linalg.inv(gram)
    norms = np.linalg.norm(dirs, axis=0)
    norms[norms == 0] = 1.0
    return dirs / norms, bool(regularized)


def _phase_fix(v: np.ndarray) -> np.ndarray:
    # first nonzero entry real and positive
    idx = np.flatnonzero(np.abs(v) > 1e-14 * np.abs(v).max())[0]
    return v * (abs(v[idx]) / v[idx])


def dominant_left_singular_vector(h: np.ndarray) -> np.ndarray:
    u, _, _ = np.linalg.svd(h)
    return _phase_fix(u[:, 0])


def _split_power(power: float, alpha: float, k: int) -> tuple[float, float]:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    # below 0 dB P_t**alpha exceeds P_t; keep the split inside the budget
    private = min(power ** alpha, power)
    return private / k, power - private


def init_zf_e(estimate: Channel, power: float, alpha: float) -> Precoder:
    dirs, _ = zf_directions(estimate)
    per_user, common = _split_power(power, alpha, estimate.n_users)
    e1 = np.zeros(estimate.n_tx, dtype=complex)
    e1[0] = 1.0
    return Precoder(math.sqrt(common) * e1, math.sqrt(per_user) * dirs)


def init_zf_svd(estimate: Channel, power: float, alpha: float) -> Precoder:
    dirs, _ = zf_directions(estimate)
    per_user, common = _split_power(power, alpha, estimate.n_users)
    v = dominant_left_singular_vector(estimate.matrix)
    return Precoder(math.sqrt(common) * v, math.sqrt(per_user) * dirs)


def init_bc(estimate: Channel, power: float) -> Precoder:
    """Zero-forcing with the full budget split evenly; no common stream."""
    dirs, _ = zf_directions(estimate)
    k = estimate.n_users
    return Precoder(np.zeros(estimate.n_tx, dtype=complex), math.sqrt(power / k) * dirs)


def _initial_precoder(sc: Scenario, ss: SampleSet, cfg: AoConfig) -> Precoder:
    if isinstance(cfg.init, Precoder):
        pre = cfg.init
        if pre.power > sc.power * (1 + 1e-9):
            raise ValueError("custom initial precoder exceeds the power budget")
        return pre.without_common() if cfg.mode is Mode.BC else pre
    if cfg.mode is Mode.BC:
        return init_bc(ss.estimate, sc.power)
    alpha = equivalent_alpha(sc)
    if cfg.init is Init.ZF_E:
        return init_zf_e(ss.estimate, sc.power, alpha)
    return init_zf_svd(ss.estimate, sc.power, alpha)


def ao_solve(sc: Scenario, ss: SampleSet, cfg: AoConfig = AoConfig()) -> AoResult:
    if ss.estimate.matrix.shape != (sc.n_tx, sc.n_users):
        raise ValueError("sample set dimensions do not match the scenario")
    jmb = cfg.mode is Mode.JMB
    noise = sc.noise_var
    k = sc.n_users
    pre = _initial_precoder(sc, ss, cfg)
    coeffs = np.full(k, 1.0 / k)
    prev = 0.0
    trace: list[float] = []
    records: list[IterationRecord] = []
    converged = False

    for n in range(1, cfg.n_max + 1):
        gw = awmse.update_equalizers_weights(ss, pre, noise)
        avg = awmse.sample_average_rates(ss, pre, noise)
        if jmb:
            after_mmse = avg.min_total(coeffs)
            coeffs = partition.waterfill(avg.common_min, avg.private).coeffs
            after_part = avg.min_total(coeffs)
        else:
            after_mmse = after_part = float(np.min(avg.private))
        comp = awmse.build_components(ss, gw, noise)
        qp = cone_solver.assemble(comp, coeffs, noise, sc.power, include_common=jmb)
        rep = cone_solver.solve(qp, tol=cfg.solver_tol, max_iter=cfg.solver_max_iter)
        if rep.status is cone_solver.SolverStatus.NUMERICAL_TROUBLE and rep.kkt_residual > 1e-6:
            raise AoError(f"precoder update failed ({rep.status.value}, "
                          f"kkt residual {rep.kkt_residual:.2e})", n)
        if not rep.optimal:
            log.debug("iteration %d: solver stopped with %s (kkt %.2e)", n, rep.status.value,
                      rep.kkt_residual)
        pre = rep.precoder
        r_hat = 1.0 - rep.xi
        new_avg = awmse.sample_average_rates(ss, pre, noise)
        saf = new_avg.min_total(coeffs) if jmb else float(np.min(new_avg.private))
        records.append(IterationRecord(prev, after_mmse, after_part, r_hat, saf,
                                       rep.iterations, rep.status.value))
        trace.append(r_hat)
        if abs(r_hat - prev) < cfg.eps_r:
            converged = True
            break
        prev = r_hat

    final = awmse.sample_average_rates(ss, pre, noise)
    if jmb:
        # one more partition step at the final precoder; it can only help
        coeffs = partition.waterfill(final.common_min, final.private).coeffs
    return AoResult(precoder=pre, coeffs=coeffs, objective_trace=trace, converged=converged,
                    final_rates=final, mode=cfg.mode, records=records)
