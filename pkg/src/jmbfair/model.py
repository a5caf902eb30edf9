"""Scenario configuration, channel containers and random channel sampling.

All randomness flows through :class:`RngStream`.  A stream is a pure label
``(seed, stream_id, path)``; every draw builds a fresh Philox generator from
that label, so identical streams give identical draws no matter what else has
been sampled in between or in which process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "Decaying",
    "Fixed",
    "ErrorModel",
    "Scenario",
    "Channel",
    "SampleSet",
    "RngStream",
    "draw_true_channel",
    "draw_estimate",
    "draw_sample_set",
    "effective_error_variance",
    "equivalent_alpha",
    "complex_normal",
]


@dataclass(frozen=True)
class Decaying:
    """CSIT error power that decays as ``P_t ** -alpha``."""

    alpha: float

    def __post_init__(self):
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")


@dataclass(frozen=True)
class Fixed:
    """CSIT error power held at ``sigma_e2`` regardless of SNR."""

    sigma_e2: float

    def __post_init__(self):
        if not (self.sigma_e2 >= 0 and math.isfinite(self.sigma_e2)):
            raise ValueError(f"sigma_e2 must be finite and >= 0, got {self.sigma_e2}")


ErrorModel = Union[Decaying, Fixed]


@dataclass(frozen=True)
class Scenario:
    n_tx: int
    n_users: int
    power: float
    noise_var: float = 1.0
    error_model: ErrorModel = field(default_factory=lambda: Decaying(0.6))
    sample_size: int = 1000

    def __post_init__(self):
        if self.n_tx < 1 or self.n_users < 1:
            raise ValueError("n_tx and n_users must be positive")
        if self.n_users > self.n_tx:
            raise ValueError(f"need K <= N_t, got K={self.n_users}, N_t={self.n_tx}")
        if not self.power > 0:
            raise ValueError(f"power must be > 0, got {self.power}")
        # finite SNR is what keeps every MMSE strictly positive
        if not (self.noise_var > 0 and math.isfinite(self.noise_var)):
            raise ValueError(f"noise_var must be finite and > 0, got {self.noise_var}")
        if self.sample_size < 1:
            raise ValueError(f"sample_size must be >= 1, got {self.sample_size}")

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.power / self.noise_var)

    @classmethod
    def from_snr_db(cls, snr_db: float, n_tx: int = 2, n_users: int = 2, noise_var: float = 1.0,
                    error_model: ErrorModel | None = None, sample_size: int = 1000) -> "Scenario":
        return cls(n_tx=n_tx, n_users=n_users, power=noise_var * 10.0 ** (snr_db / 10.0),
                   noise_var=noise_var, error_model=error_model or Decaying(0.6),
                   sample_size=sample_size)


@dataclass(frozen=True, eq=False)
class Channel:
    """Complex ``N_t x K`` channel matrix; column ``k`` is user ``k``'s vector."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        if m.ndim != 2:
            raise ValueError(f"channel matrix must be 2-D, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("channel matrix has non-finite entries")
        # column-major so each user's vector is contiguous
        m = np.asfortranarray(m)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def n_tx(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_users(self) -> int:
        return self.matrix.shape[1]

    def column(self, k: int) -> np.ndarray:
        return self.matrix[:, k]

    def __add__(self, other: "Channel") -> "Channel":
        return Channel(self.matrix + other.matrix)

    def __sub__(self, other: "Channel") -> "Channel":
        return Channel(self.matrix - other.matrix)


@dataclass(frozen=True, eq=False)
class SampleSet:
    """``M`` Monte-Carlo channel realizations drawn around an estimate.

    ``realizations`` has shape ``(M, N_t, K)``.
    """

    estimate: Channel
    realizations: np.ndarray
    error_var: float

    def __post_init__(self):
        r = np.asarray(self.realizations, dtype=np.complex128)
        if r.ndim != 3 or r.shape[1:] != self.estimate.matrix.shape:
            raise ValueError(
                f"realizations shape {r.shape} does not match estimate {self.estimate.matrix.shape}")
        r.flags.writeable = False
        object.__setattr__(self, "realizations", r)

    @property
    def size(self) -> int:
        return self.realizations.shape[0]

    def __len__(self) -> int:
        return self.size

    def __getitem__(self, m: int) -> Channel:
        return Channel(self.realizations[m])


@dataclass(frozen=True)
class RngStream:
    """Deterministic label for an independent random substream."""

    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = ()

    def child(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.path + tuple(int(k) for k in keys))

    def generator(self) -> np.random.Generator:
        entropy = [self.seed & 0xFFFFFFFFFFFFFFFF, self.stream_id, *self.path]
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def complex_normal(gen: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """Circularly-symmetric CN(0, var) samples."""
    z = gen.standard_normal((2,) + tuple(np.atleast_1d(shape)))
    return math.sqrt(var / 2.0) * (z[0] + 1j * z[1])


def draw_true_channel(rng: RngStream, sc: Scenario) -> Channel:
    return Channel(complex_normal(rng.generator(), (sc.n_tx, sc.n_users)))


def draw_estimate(rng: RngStream, h_true: Channel, sigma_e2: float) -> tuple[Channel, Channel]:
    """Split ``h_true`` into ``(estimate, error)`` with ``error ~ CN(0, sigma_e2)``."""
    if sigma_e2 < 0:
        raise ValueError(f"sigma_e2 must be >= 0, got {sigma_e2}")
    error = Channel(complex_normal(rng.generator(), h_true.matrix.shape, sigma_e2))
    return Channel(h_true.matrix - error.matrix), error


def draw_sample_set(rng: RngStream, estimate: Channel, sigma_e2: float, m_count: int) -> SampleSet:
    if m_count < 1:
        raise ValueError(f"m_count must be >= 1, got {m_count}")
    if sigma_e2 < 0:
        raise ValueError(f"sigma_e2 must be >= 0, got {sigma_e2}")
    noise = complex_normal(rng.generator(), (m_count,) + estimate.matrix.shape, sigma_e2)
    return SampleSet(estimate, estimate.matrix[None, :, :] + noise, float(sigma_e2))


def effective_error_variance(sc: Scenario) -> float:
    em = sc.error_model
    if isinstance(em, Decaying):
        return sc.power ** (-em.alpha)
    return em.sigma_e2


def equivalent_alpha(sc: Scenario) -> float:
    """Exponent used to split power at initialization, clamped to [0, 1].

    For a fixed error power this is the exponent that would produce the same
    error power at the scenario's transmit power.
    """
    em = sc.error_model
    if isinstance(em, Decaying):
        return min(max(em.alpha, 0.0), 1.0)
    if em.sigma_e2 <= 0:
        return 1.0
    if sc.power == 1.0:
        return 0.0
    return min(max(-math.log(em.sigma_e2) / math.log(sc.power), 0.0), 1.0)
