"""Sample-averaged rates, MMSE equalizer/weight updates and AWMSE components.

Everything here is vectorized over the ``M`` realizations of a
:class:`~jmbfair.model.SampleSet`; per-user arrays are laid out ``(K, M)``.
The formulas are the batched counterparts of :mod:`jmbfair.mmse`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mmse import EPS_FLOOR, INV_LN2, Precoder
from .model import SampleSet

__all__ = [
    "EqualizerWeightSet",
    "AverageRates",
    "AwmseComponents",
    "realization_stats",
    "sample_average_rates",
    "update_equalizers_weights",
    "realization_awmse",
    "build_components",
    "awmse_eval",
]


@dataclass(frozen=True, eq=False)
class EqualizerWeightSet:
    """Equalizers ``g`` and weights ``u`` for every user and realization, shape ``(K, M)``."""

    g_common: np.ndarray
    g_private: np.ndarray
    u_common: np.ndarray
    u_private: np.ndarray

    def __post_init__(self):
        shape = np.shape(self.g_common)
        for name in ("g_private", "u_common", "u_private"):
            if np.shape(getattr(self, name)) != shape:
                raise ValueError(f"{name} shape mismatch, expected {shape}")
        if np.any(np.asarray(self.u_common) <= 0) or np.any(np.asarray(self.u_private) <= 0):
            raise ValueError("weights must be strictly positive")

    @property
    def n_users(self) -> int:
        return self.g_common.shape[0]

    @property
    def size(self) -> int:
        return self.g_common.shape[1]


@dataclass(frozen=True, eq=False)
class AverageRates:
    common: np.ndarray
    private: np.ndarray

    @property
    def common_min(self) -> float:
        return float(np.min(self.common))

    def min_total(self, coeffs) -> float:
        """``min_k (R_k + c_k * min_j R_c,j)``."""
        return float(np.min(self.private + np.asarray(coeffs) * self.common_min))


@dataclass(frozen=True, eq=False)
class AwmseComponents:
    """Quadratic-form data of the sample-averaged augmented WMSEs.

    Matrices are ``(K, N_t, N_t)``, vectors ``(K, N_t)``, scalars ``(K,)``.
    """

    psi_common: np.ndarray
    psi_private: np.ndarray
    f_common: np.ndarray
    f_private: np.ndarray
    t_common: np.ndarray
    t_private: np.ndarray
    u_common: np.ndarray
    u_private: np.ndarray
    v_common: np.ndarray
    v_private: np.ndarray

    @property
    def n_users(self) -> int:
        return self.psi_private.shape[0]

    @property
    def n_tx(self) -> int:
        return self.psi_private.shape[1]

    def check(self, tol: float = 1e-12) -> None:
        for psi in (self.psi_common, self.psi_private):
            for q in psi:
                scale = max(1.0, float(np.abs(q).max()))
                if np.abs(q - q.conj().T).max() > tol * scale:
                    raise ValueError("psi block is not Hermitian")
                if np.linalg.eigvalsh(q).min() < -1e-10 * max(np.trace(q).real, 1e-300):
                    raise ValueError("psi block is not positive semidefinite")


def realization_stats(ss: SampleSet, pre: Precoder, noise_var: float):
    """Per-realization gains and receive powers.

    Returns ``(a_c, a_p, t_c, t_p, e_p)``, each ``(K, M)``; ``a_c`` is
    ``p_c^H h_k`` and ``a_p`` is ``p_k^H h_k``.
    """
    if not noise_var > 0:
        raise ValueError(f"noise_var must be > 0, got {noise_var}")
    h = ss.realizations
    a_c = np.einsum("n,mnk->km", pre.common.conj(), h)
    cross = np.einsum("ni,mnk->kim", pre.private.conj(), h)
    k_idx = np.arange(pre.n_users)
    a_p = cross[k_idx, k_idx, :]
    t_p = np.sum(cross.real ** 2 + cross.imag ** 2, axis=1) + noise_var
    t_c = np.abs(a_c) ** 2 + t_p
    e_p = t_p - np.abs(a_p) ** 2
    return a_c, a_p, t_c, t_p, e_p


def _mmse_eps(ss, pre, noise_var):
    a_c, a_p, t_c, t_p, e_p = realization_stats(ss, pre, noise_var)
    return t_p / t_c, e_p / t_p


def sample_average_rates(ss: SampleSet, pre: Precoder, noise_var: float) -> AverageRates:
    eps_c, eps_p = _mmse_eps(ss, pre, noise_var)
    r_c = -np.log(np.maximum(eps_c, EPS_FLOOR)) * INV_LN2
    r_p = -np.log(np.maximum(eps_p, EPS_FLOOR)) * INV_LN2
    return AverageRates(common=r_c.mean(axis=1), private=r_p.mean(axis=1))


def update_equalizers_weights(ss: SampleSet, pre: Precoder, noise_var: float) -> EqualizerWeightSet:
    a_c, a_p, t_c, t_p, e_p = realization_stats(ss, pre, noise_var)
    return EqualizerWeightSet(
        g_common=a_c / t_c,
        g_private=a_p / t_p,
        u_common=t_c / t_p,
        u_private=t_p / e_p,
    )


def realization_awmse(ss: SampleSet, pre: Precoder, noise_var: float,
                      gw: EqualizerWeightSet) -> tuple[np.ndarray, np.ndarray]:
    """Augmented WMSEs ``u * eps(g) - log2(u)`` per user and realization, ``(K, M)``."""
    a_c, a_p, t_c, t_p, _ = realization_stats(ss, pre, noise_var)
    # a = p^H h, so h^H p = conj(a)
    eps_c = np.abs(gw.g_common) ** 2 * t_c - 2.0 * (gw.g_common * a_c.conj()).real + 1.0
    eps_p = np.abs(gw.g_private) ** 2 * t_p - 2.0 * (gw.g_private * a_p.conj()).real + 1.0
    xi_c = gw.u_common * eps_c - np.log(gw.u_common) * INV_LN2
    xi_p = gw.u_private * eps_p - np.log(gw.u_private) * INV_LN2
    return xi_c, xi_p


def build_components(ss: SampleSet, gw: EqualizerWeightSet, noise_var: float) -> AwmseComponents:
    h = np.transpose(ss.realizations, (2, 0, 1))  # (K, M, N_t)
    m = ss.size
    if gw.g_common.shape != (h.shape[0], m):
        raise ValueError(f"equalizer set shape {gw.g_common.shape} != {(h.shape[0], m)}")
    t_c = gw.u_common * np.abs(gw.g_common) ** 2
    t_p = gw.u_private * np.abs(gw.g_private) ** 2
    outer = np.einsum("kmi,kmj->kmij", h, h.conj())
    psi_c = np.einsum("km,kmij->kij", t_c, outer) / m
    psi_p = np.einsum("km,kmij->kij", t_p, outer) / m
    psi_c = 0.5 * (psi_c + np.conj(np.swapaxes(psi_c, 1, 2)))
    psi_p = 0.5 * (psi_p + np.conj(np.swapaxes(psi_p, 1, 2)))
    f_c = np.einsum("km,kmi->ki", gw.u_common * gw.g_common.conj(), h) / m
    f_p = np.einsum("km,kmi->ki", gw.u_private * gw.g_private.conj(), h) / m
    return AwmseComponents(
        psi_common=psi_c,
        psi_private=psi_p,
        f_common=f_c,
        f_private=f_p,
        t_common=t_c.mean(axis=1),
        t_private=t_p.mean(axis=1),
        u_common=gw.u_common.mean(axis=1),
        u_private=gw.u_private.mean(axis=1),
        v_common=(np.log(gw.u_common) * INV_LN2).mean(axis=1),
        v_private=(np.log(gw.u_private) * INV_LN2).mean(axis=1),
    )


def _qform(psi: np.ndarray, p: np.ndarray) -> np.ndarray:
    # p^H psi_k p for every k
    return np.einsum("i,kij,j->k", p.conj(), psi, p).real


def awmse_eval(comp: AwmseComponents, pre: Precoder, noise_var: float) -> tuple[np.ndarray, np.ndarray]:
    """Sample-averaged augmented WMSEs as quadratic forms in the precoder."""
    k_count = comp.n_users
    priv_c = sum(_qform(comp.psi_common, pre.private[:, i]) for i in range(k_count))
    priv_p = sum(_qform(comp.psi_private, pre.private[:, i]) for i in range(k_count))
    xi_c = (_qform(comp.psi_common, pre.common) + priv_c + noise_var * comp.t_common
            - 2.0 * (comp.f_common.conj() @ pre.common).real
            + comp.u_common - comp.v_common)
    lin_p = np.einsum("ki,ik->k", comp.f_private.conj(), pre.private).real
    xi_p = (priv_p + noise_var * comp.t_private - 2.0 * lin_p
            + comp.u_private - comp.v_private)
    return xi_c, xi_p
