"""Single-realization MSE, MMSE and rate quantities for one user.

Every function here takes the user's channel vector ``h`` (the k-th column of
H), the full precoder and the user index ``k``.  The common stream is decoded
first treating all private streams as noise; its contribution is then
cancelled exactly before the private stream is equalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Precoder",
    "LinkStats",
    "UserPoint",
    "RatePair",
    "link_stats",
    "mmse_equalizers",
    "mse",
    "mmse_values",
    "rates",
    "mmse_weights",
    "augmented_wmse",
]

INV_LN2 = 1.0 / math.log(2.0)
# log overflow guard; unreachable while noise_var > 0
EPS_FLOOR = 1e-300


@dataclass(frozen=True, eq=False)
class Precoder:
    """Linear precoder ``P = [p_c, p_1, ..., p_K]``.

    ``common`` has shape ``(N_t,)`` and ``private`` has shape ``(N_t, K)``.
    """

    common: np.ndarray
    private: np.ndarray

    def __post_init__(self):
        c = np.array(self.common, dtype=np.complex128).reshape(-1)
        p = np.array(self.private, dtype=np.complex128)
        if p.ndim == 1:
            p = p.reshape(-1, 1)
        if p.shape[0] != c.shape[0]:
            raise ValueError(f"common length {c.shape[0]} != private rows {p.shape[0]}")
        c.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "common", c)
        object.__setattr__(self, "private", p)

    @classmethod
    def from_matrix(cls, mat: np.ndarray) -> "Precoder":
        mat = np.asarray(mat)
        return cls(mat[:, 0], mat[:, 1:])

    @classmethod
    def zeros(cls, n_tx: int, n_users: int) -> "Precoder":
        return cls(np.zeros(n_tx), np.zeros((n_tx, n_users)))

    @property
    def matrix(self) -> np.ndarray:
        return np.column_stack([self.common, self.private])

    @property
    def n_tx(self) -> int:
        return self.common.shape[0]

    @property
    def n_users(self) -> int:
        return self.private.shape[1]

    @property
    def power(self) -> float:
        """``tr(P P^H)``."""
        return float(np.vdot(self.common, self.common).real + np.sum(np.abs(self.private) ** 2))

    def scaled(self, factor: float) -> "Precoder":
        return Precoder(self.common * factor, self.private * factor)

    def without_common(self) -> "Precoder":
        return Precoder(np.zeros_like(self.common), self.private)


@dataclass(frozen=True)
class LinkStats:
    t_common: float
    t_private: float
    e_common: float
    e_private: float


@dataclass(frozen=True)
class UserPoint:
    eq_common: complex
    eq_private: complex
    w_common: float
    w_private: float

    def __post_init__(self):
        if not (self.w_common > 0 and self.w_private > 0):
            raise ValueError("weights must be strictly positive")


@dataclass(frozen=True)
class RatePair:
    common: float
    private: float
    sinr_common: float
    sinr_private: float


def _gains(h: np.ndarray, pre: Precoder) -> tuple[complex, np.ndarray]:
    # p^H h for the common and every private precoder
    h = np.asarray(h, dtype=np.complex128)
    return complex(np.vdot(pre.common, h)), pre.private.conj().T @ h


def link_stats(h: np.ndarray, pre: Precoder, noise_var: float, k: int) -> LinkStats:
    """Receive powers ``T_c,k``, ``T_k`` and residual powers ``E_c,k``, ``E_k``."""
    if not noise_var > 0:
        raise ValueError(f"noise_var must be > 0, got {noise_var}")
    gc, gp = _gains(h, pre)
    t_private = float(np.sum(np.abs(gp) ** 2)) + noise_var
    t_common = abs(gc) ** 2 + t_private
    e_private = t_private - abs(gp[k]) ** 2
    return LinkStats(t_common=t_common, t_private=t_private, e_common=t_private, e_private=e_private)


def mmse_equalizers(h: np.ndarray, pre: Precoder, noise_var: float, k: int) -> tuple[complex, complex]:
    ls = link_stats(h, pre, noise_var, k)
    gc, gp = _gains(h, pre)
    return gc / ls.t_common, complex(gp[k]) / ls.t_private


def mse(h: np.ndarray, pre: Precoder, noise_var: float, k: int,
        g_c: complex, g_p: complex) -> tuple[float, float]:
    """MSEs of the common and private estimates for arbitrary equalizers."""
    ls = link_stats(h, pre, noise_var, k)
    h = np.asarray(h, dtype=np.complex128)
    hp_c = complex(np.vdot(h, pre.common))
    hp_k = complex(np.vdot(h, pre.private[:, k]))
    eps_c = abs(g_c) ** 2 * ls.t_common - 2.0 * (g_c * hp_c).real + 1.0
    eps_p = abs(g_p) ** 2 * ls.t_private - 2.0 * (g_p * hp_k).real + 1.0
    return eps_c, eps_p


def mmse_values(ls: LinkStats) -> tuple[float, float]:
    return ls.e_common / ls.t_common, ls.e_private / ls.t_private


def _rate(eps: float) -> tuple[float, float]:
    eps = max(eps, EPS_FLOOR)
    return -math.log(eps) * INV_LN2, (1.0 - eps) / eps


def rates(ls: LinkStats) -> RatePair:
    eps_c, eps_p = mmse_values(ls)
    r_c, s_c = _rate(eps_c)
    r_p, s_p = _rate(eps_p)
    return RatePair(common=r_c, private=r_p, sinr_common=s_c, sinr_private=s_p)


def mmse_weights(eps_c_min: float, eps_p_min: float) -> tuple[float, float]:
    if not (eps_c_min > 0 and eps_p_min > 0):
        raise ValueError("MMSE values must be > 0")
    return 1.0 / eps_c_min, 1.0 / eps_p_min


def augmented_wmse(h: np.ndarray, pre: Precoder, noise_var: float, k: int,
                   up: UserPoint) -> tuple[float, float]:
    """``u * eps - log2(u)`` for both streams at the given equalizers and weights."""
    eps_c, eps_p = mse(h, pre, noise_var, k, up.eq_common, up.eq_private)
    xi_c = up.w_common * eps_c - math.log(up.w_common) * INV_LN2
    xi_p = up.w_private * eps_p - math.log(up.w_private) * INV_LN2
    return xi_c, xi_p
