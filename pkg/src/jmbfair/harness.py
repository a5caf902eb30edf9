"""Experiment orchestration: convergence traces, ergodic-rate sweeps, CSV output.

Randomness per evaluation channel comes from ``RngStream(seed, index)``.  With
paired sampling the same stream (and therefore the same standard-normal draws)
is reused at every SNR point, so the curves differ only through the error
variance; without it each SNR point gets its own sub-stream.  Channels are
independent tasks, optionally spread over worker processes; results are always
reduced in channel-index order, so output does not depend on the worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

from . import mmse
from .ao import AoConfig, AoError, AoResult, Init, Mode, ao_solve
from .mmse import Precoder
from .model import (
    Channel,
    Decaying,
    ErrorModel,
    Fixed,
    RngStream,
    SampleSet,
    Scenario,
    draw_estimate,
    draw_sample_set,
    draw_true_channel,
    effective_error_variance,
)

__all__ = [
    "ExperimentSpec",
    "ErRecord",
    "ChannelOutcome",
    "TraceRow",
    "HarnessError",
    "achieved_min_rate",
    "draw_instance",
    "run_convergence",
    "evaluate_channels",
    "aggregate",
    "run_ergodic",
    "write_convergence_csv",
    "write_ergodic_csv",
    "DEFAULT_SNR_GRID",
    "MAX_FAILURE_FRACTION",
]

log = logging.getLogger(__name__)

DEFAULT_SNR_GRID = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0)
MAX_FAILURE_FRACTION = 0.05

# sub-stream keys under a channel's stream
_KEY_CHANNEL, _KEY_ESTIMATE, _KEY_SAMPLES = 0, 1, 2


class HarnessError(RuntimeError):
    pass


def _error_model_to_dict(em: ErrorModel) -> dict:
    if isinstance(em, Decaying):
        return {"kind": "decaying", "alpha": em.alpha}
    return {"kind": "fixed", "sigma_e2": em.sigma_e2}


def _error_model_from_dict(d: dict) -> ErrorModel:
    kind = d.get("kind")
    if kind == "decaying":
        return Decaying(float(d["alpha"]))
    if kind == "fixed":
        return Fixed(float(d["sigma_e2"]))
    raise ValueError(f"unknown error model kind {kind!r}")


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce a sweep bit for bit."""

    n_tx: int = 2
    n_users: int = 2
    noise_var: float = 1.0
    error_model: ErrorModel = Decaying(0.6)
    sample_size: int = 200
    snr_grid_db: tuple[float, ...] = DEFAULT_SNR_GRID
    n_channels: int = 50
    seed: int = 0
    paired_sampling: bool = True
    modes: tuple[Mode, ...] = (Mode.JMB, Mode.BC)
    inits: tuple[Init, ...] = (Init.ZF_SVD,)
    eps_r: float = 1e-4
    n_max: int = 200
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "snr_grid_db", tuple(float(s) for s in self.snr_grid_db))
        object.__setattr__(self, "modes", tuple(Mode(m) for m in self.modes))
        object.__setattr__(self, "inits", tuple(Init(i) for i in self.inits))
        if not self.snr_grid_db:
            raise ValueError("snr_grid_db must not be empty")
        if not self.modes or not self.inits:
            raise ValueError("modes and inits must not be empty")
        if self.n_channels < 1:
            raise ValueError(f"n_channels must be >= 1, got {self.n_channels}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")

    def scenario(self, snr_db: float) -> Scenario:
        return Scenario.from_snr_db(snr_db, n_tx=self.n_tx, n_users=self.n_users,
                                    noise_var=self.noise_var, error_model=self.error_model,
                                    sample_size=self.sample_size)

    def ao_config(self, mode: Mode, init: Init) -> AoConfig:
        return AoConfig(eps_r=self.eps_r, n_max=self.n_max, init=init, mode=mode)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["error_model"] = _error_model_to_dict(self.error_model)
        d["snr_grid_db"] = list(self.snr_grid_db)
        d["modes"] = [m.value for m in self.modes]
        d["inits"] = [i.value for i in self.inits]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown experiment fields: {sorted(unknown)}")
        d = dict(d)
        if "error_model" in d and isinstance(d["error_model"], dict):
            d["error_model"] = _error_model_from_dict(d["error_model"])
        for key in ("snr_grid_db", "modes", "inits"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class ErRecord:
    snr_db: float
    mode: Mode
    init: str
    ergodic_rate: float
    std_error: float
    mean_iterations: float
    n_channels: int
    sample_size: int
    n_failed: int = 0


@dataclass(frozen=True)
class ChannelOutcome:
    """Result of one AO run on one evaluation channel."""

    channel: int
    snr_db: float
    mode: Mode
    init: str
    achieved_rate: float = math.nan
    sampled_objective: float = math.nan
    iterations: int = 0
    converged: bool = False
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    snr_db: float
    init: str
    objective_bits: float


def achieved_min_rate(h_true: Channel, pre: Precoder, coeffs, noise_var: float) -> float:
    """``min_k (R_k + c_k R_c)`` on the true channel.

    ``R_c`` is the smallest common rate over *all* users, since every user has
    to decode the common stream before removing it.  With no common precoder
    every common rate is zero and the result reduces to ``min_k R_k``.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    k_count = h_true.n_users
    if coeffs.shape != (k_count,):
        raise ValueError(f"expected {k_count} coefficients, got shape {coeffs.shape}")
    if np.any(coeffs < 0) or abs(coeffs.sum() - 1.0) > 1e-9:
        raise ValueError("coefficients must be non-negative and sum to one")
    rp = [mmse.rates(mmse.link_stats(h_true.column(k), pre, noise_var, k)) for k in range(k_count)]
    r_c = min(r.common for r in rp)
    return float(min(r.private + c * r_c for r, c in zip(rp, coeffs)))


def draw_instance(spec: ExperimentSpec, channel: int, snr_db: float,
                  snr_index: int = 0) -> tuple[Scenario, Channel, SampleSet]:
    """True channel and the sample set built from its estimate."""
    sc = spec.scenario(snr_db)
    rng = RngStream(spec.seed, channel)
    if not spec.paired_sampling:
        rng = rng.child(1000 + snr_index)
    h_true = draw_true_channel(rng.child(_KEY_CHANNEL), sc)
    sigma_e2 = effective_error_variance(sc)
    estimate, _ = draw_estimate(rng.child(_KEY_ESTIMATE), h_true, sigma_e2)
    ss = draw_sample_set(rng.child(_KEY_SAMPLES), estimate, sigma_e2, sc.sample_size)
    return sc, h_true, ss


def _runs(spec: ExperimentSpec):
    # Bc ignores the initialization choice, so it runs once per channel
    for mode in spec.modes:
        inits = spec.inits if mode is Mode.JMB else (None,)
        for init in inits:
            yield mode, init


def _init_label(mode: Mode, init: Optional[Init]) -> str:
    return init.value if init is not None else "zf"


def _evaluate_one(spec: ExperimentSpec, channel: int) -> list[ChannelOutcome]:
    out = []
    for j, snr in enumerate(spec.snr_grid_db):
        sc, h_true, ss = draw_instance(spec, channel, snr, j)
        for mode, init in _runs(spec):
            label = _init_label(mode, init)
            cfg = spec.ao_config(mode, init or Init.ZF_SVD)
            try:
                res = ao_solve(sc, ss, cfg)
                rate = achieved_min_rate(h_true, res.precoder, res.coeffs, sc.noise_var)
                out.append(ChannelOutcome(channel, snr, mode, label, rate, res.objective,
                                          res.iterations, res.converged))
            except (AoError, ValueError, np.linalg.LinAlgError) as exc:
                log.warning("channel %d, %g dB, %s/%s failed: %s", channel, snr, mode.value,
                            label, exc)
                out.append(ChannelOutcome(channel, snr, mode, label, error=str(exc)))
    return out


def _evaluate_task(args):
    spec, channel = args
    return _evaluate_one(spec, channel)


def evaluate_channels(spec: ExperimentSpec) -> list[ChannelOutcome]:
    """Per-channel outcomes for every SNR point, mode and initialization."""
    tasks = [(spec, i) for i in range(spec.n_channels)]
    if spec.workers == 1:
        chunks = map(_evaluate_task, tasks)
        return [o for chunk in chunks for o in chunk]
    with ProcessPoolExecutor(max_workers=spec.workers) as pool:
        # map preserves task order, so the reduction is index-ordered
        return [o for chunk in pool.map(_evaluate_task, tasks) for o in chunk]


def aggregate(outcomes: Iterable[ChannelOutcome], spec: ExperimentSpec) -> list[ErRecord]:
    """Average per-channel achieved rates into ergodic-rate records."""
    groups: dict[tuple, list[ChannelOutcome]] = {}
    for o in outcomes:
        groups.setdefault((o.snr_db, o.mode, o.init), []).append(o)
    records = []
    for snr in spec.snr_grid_db:
        for mode, init in _runs(spec):
            label = _init_label(mode, init)
            group = groups.get((snr, mode, label), [])
            ok = [o for o in group if not o.failed]
            failed = len(group) - len(ok)
            if group and failed / len(group) > MAX_FAILURE_FRACTION:
                raise HarnessError(f"{failed}/{len(group)} channels failed at {snr} dB "
                                   f"({mode.value}, {label})")
            if failed:
                warnings.warn(f"{failed} channel(s) excluded at {snr} dB ({mode.value}, {label})",
                              RuntimeWarning, stacklevel=2)
            if not ok:
                raise HarnessError(f"no successful channels at {snr} dB ({mode.value}, {label})")
            rates = np.array([o.achieved_rate for o in ok])
            se = float(rates.std(ddof=1) / math.sqrt(rates.size)) if rates.size > 1 else 0.0
            records.append(ErRecord(
                snr_db=snr, mode=mode, init=label, ergodic_rate=float(rates.mean()),
                std_error=se, mean_iterations=float(np.mean([o.iterations for o in ok])),
                n_channels=len(ok), sample_size=spec.sample_size, n_failed=failed))
    return records


def run_ergodic(spec: ExperimentSpec) -> list[ErRecord]:
    return aggregate(evaluate_channels(spec), spec)


def run_convergence(spec: ExperimentSpec, snr_points: Sequence[float] = (5.0, 20.0, 35.0),
                    alpha: float = 0.6, channel: int = 0) -> list[TraceRow]:
    """Objective trace per iteration for each initialization and SNR point.

    One channel (index ``channel`` of the experiment seed) is drawn per SNR point
    with error power ``P_t ** -alpha``.
    """
    conv_spec = dataclasses.replace(spec, error_model=Decaying(alpha),
                                    snr_grid_db=tuple(snr_points))
    rows = []
    for j, snr in enumerate(conv_spec.snr_grid_db):
        sc, _, ss = draw_instance(conv_spec, channel, snr, j)
        for init in conv_spec.inits:
            res: AoResult = ao_solve(sc, ss, conv_spec.ao_config(Mode.JMB, init))
            rows.extend(TraceRow(n, snr, init.value, r)
                        for n, r in enumerate(res.objective_trace, start=1))
    return rows


def _fmt(x: float) -> str:
    # repr is locale-independent and round-trips exactly
    return repr(float(x))


def write_convergence_csv(rows: Iterable[TraceRow], fp: TextIO) -> None:
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(["iteration", "snr_db", "init", "objective_bits"])
    for r in rows:
        w.writerow([r.iteration, _fmt(r.snr_db), r.init, _fmt(r.objective_bits)])


def write_ergodic_csv(records: Iterable[ErRecord], fp: TextIO) -> None:
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(["snr_db", "mode", "init", "ergodic_rate_bits", "std_error", "n_channels", "m"])
    for r in records:
        w.writerow([_fmt(r.snr_db), r.mode.value, r.init, _fmt(r.ergodic_rate),
                    _fmt(r.std_error), r.n_channels, r.sample_size])
