import math

import numpy as np
import pytest

from jmbfair import awmse, mmse
from jmbfair.awmse import EqualizerWeightSet
from jmbfair.mmse import Precoder, UserPoint
from jmbfair.model import Channel, RngStream, SampleSet, complex_normal, draw_sample_set
from jmbfair.verify import random_instance, random_precoder


def unit_sample_set():
    est = Channel(np.array([[1.0], [0.0]]))
    return SampleSet(est, est.matrix[None].astype(complex), 0.0)


def ones_set():
    one = np.ones((1, 1), dtype=complex)
    return EqualizerWeightSet(one, one, one.real, one.real)


def test_trivial_components():
    comp = awmse.build_components(unit_sample_set(), ones_set(), 1.0)
    np.testing.assert_allclose(comp.psi_private[0], [[1, 0], [0, 0]])
    np.testing.assert_allclose(comp.psi_common[0], [[1, 0], [0, 0]])
    np.testing.assert_allclose(comp.f_private[0], [1, 0])
    assert comp.t_private[0] == 1.0 and comp.u_private[0] == 1.0 and comp.v_private[0] == 0.0
    pre = Precoder(np.zeros(2), np.array([[1.0], [0.0]]))
    _, xi_p = awmse.awmse_eval(comp, pre, 1.0)
    assert xi_p[0] == pytest.approx(1.0, abs=1e-15)  # 1 + 1 - 2 + 1 - 0


def test_zero_precoder_leaves_constants():
    ss, _ = random_instance(RngStream(5), 3, 2, 20)
    pre = random_precoder(RngStream(6).generator(), 3, 2, 4.0)
    gw = awmse.update_equalizers_weights(ss, pre, 0.7)
    comp = awmse.build_components(ss, gw, 0.7)
    xi_c, xi_p = awmse.awmse_eval(comp, Precoder.zeros(3, 2), 0.7)
    np.testing.assert_allclose(xi_p, 0.7 * comp.t_private + comp.u_private - comp.v_private, rtol=1e-14)
    np.testing.assert_allclose(xi_c, 0.7 * comp.t_common + comp.u_common - comp.v_common, rtol=1e-14)


def test_weight_set_validation():
    with pytest.raises(ValueError):
        EqualizerWeightSet(np.ones((2, 3)), np.ones((2, 3)), np.ones((2, 3)), np.ones((2, 2)))
    with pytest.raises(ValueError):
        EqualizerWeightSet(np.ones((1, 1)), np.ones((1, 1)), np.zeros((1, 1)), np.ones((1, 1)))


def test_spot_check_against_scalar_module():
    ss, pre = random_instance(RngStream(8), 3, 3, 15)
    gw = awmse.update_equalizers_weights(ss, pre, 0.5)
    xi_c, xi_p = awmse.realization_awmse(ss, pre, 0.5, gw)
    for k, m in [(0, 0), (2, 7), (1, 14)]:
        h = ss.realizations[m][:, k]
        g_c, g_p = mmse.mmse_equalizers(h, pre, 0.5, k)
        ls = mmse.link_stats(h, pre, 0.5, k)
        u_c, u_p = mmse.mmse_weights(*mmse.mmse_values(ls))
        assert gw.g_common[k, m] == pytest.approx(g_c, rel=1e-13)
        assert gw.g_private[k, m] == pytest.approx(g_p, rel=1e-13)
        assert gw.u_common[k, m] == pytest.approx(u_c, rel=1e-13)
        assert gw.u_private[k, m] == pytest.approx(u_p, rel=1e-13)
        ref = mmse.augmented_wmse(h, pre, 0.5, k, UserPoint(g_c, g_p, u_c, u_p))
        assert (xi_c[k, m], xi_p[k, m]) == pytest.approx(ref, abs=1e-12)


def test_perfect_csit_slices_identical():
    est = Channel(complex_normal(RngStream(2).generator(), (2, 2)))
    ss = draw_sample_set(RngStream(3), est, 0.0, 5)
    pre = random_precoder(RngStream(4).generator(), 2, 2, 10.0)
    gw = awmse.update_equalizers_weights(ss, pre, 1.0)
    for arr in (gw.g_common, gw.g_private, gw.u_common, gw.u_private):
        assert np.all(arr == arr[:, :1])
    avg = awmse.sample_average_rates(ss, pre, 1.0)
    for k in range(2):
        rp = mmse.rates(mmse.link_stats(est.column(k), pre, 1.0, k))
        assert avg.private[k] == pytest.approx(rp.private, abs=1e-13)
        assert avg.common[k] == pytest.approx(rp.common, abs=1e-13)


def test_single_realization_average_is_exact():
    ss, pre = random_instance(RngStream(12), 2, 2, 1)
    avg = awmse.sample_average_rates(ss, pre, 1.0)
    for k in range(2):
        rp = mmse.rates(mmse.link_stats(ss.realizations[0][:, k], pre, 1.0, k))
        assert avg.private[k] == rp.private and avg.common[k] == rp.common


@pytest.mark.parametrize("m_count", [1, 10, 1000])
def test_duality_and_two_paths(m_count):
    ss, pre = random_instance(RngStream(20 + m_count), 3, 2, m_count, power=50.0)
    gw = awmse.update_equalizers_weights(ss, pre, 1.0)
    comp = awmse.build_components(ss, gw, 1.0)
    comp.check()
    avg = awmse.sample_average_rates(ss, pre, 1.0)
    qc, qp = awmse.awmse_eval(comp, pre, 1.0)
    np.testing.assert_allclose(qc, 1 - avg.common, atol=1e-10, rtol=0)
    np.testing.assert_allclose(qp, 1 - avg.private, atol=1e-10, rtol=0)
    other = random_precoder(RngStream(99).generator(), 3, 2, 20.0)
    xc, xp = awmse.realization_awmse(ss, other, 1.0, gw)
    qc, qp = awmse.awmse_eval(comp, other, 1.0)
    np.testing.assert_allclose(qc, xc.mean(axis=1), atol=1e-10, rtol=0)
    np.testing.assert_allclose(qp, xp.mean(axis=1), atol=1e-10, rtol=0)


def test_psi_hermitian_psd():
    ss, pre = random_instance(RngStream(30), 4, 3, 2)
    comp = awmse.build_components(ss, awmse.update_equalizers_weights(ss, pre, 1.0), 1.0)
    for psi in np.concatenate([comp.psi_common, comp.psi_private]):
        assert np.array_equal(psi, psi.conj().T)
        assert np.linalg.eigvalsh(psi).min() >= -1e-12 * np.trace(psi).real


def test_equalizer_perturbation_never_helps():
    ss, pre = random_instance(RngStream(40), 2, 2, 30)
    gw = awmse.update_equalizers_weights(ss, pre, 1.0)
    base_c, base_p = awmse.realization_awmse(ss, pre, 1.0, gw)
    gen = np.random.default_rng(0)
    for _ in range(20):
        k, m = gen.integers(0, 2), gen.integers(0, 30)
        g_c, g_p = gw.g_common.copy(), gw.g_private.copy()
        g_c[k, m] += 0.05 * complex(*gen.standard_normal(2))
        g_p[k, m] += 0.05 * complex(*gen.standard_normal(2))
        pert = EqualizerWeightSet(g_c, g_p, gw.u_common, gw.u_private)
        xc, xp = awmse.realization_awmse(ss, pre, 1.0, pert)
        assert xc[k, m] >= base_c[k, m] and xp[k, m] >= base_p[k, m]
        assert xc.mean() >= base_c.mean() and xp.mean() >= base_p.mean()


def test_sample_average_converges_in_m():
    est = Channel(complex_normal(RngStream(50).generator(), (2, 2)))
    pre = random_precoder(RngStream(51).generator(), 2, 2, 10.0)
    small = draw_sample_set(RngStream(52), est, 0.1, 1000)
    large = draw_sample_set(RngStream(53), est, 0.1, 10_000)
    a_small = awmse.sample_average_rates(small, pre, 1.0)
    a_large = awmse.sample_average_rates(large, pre, 1.0)
    # per-realization rates of the small set give its standard error; the
    # larger set adds a tenth of that variance to the difference
    eps_p = np.stack([[mmse.mmse_values(mmse.link_stats(small.realizations[m][:, k], pre, 1.0, k))[1]
                       for m in range(1000)] for k in range(2)])
    se = np.std(-np.log2(eps_p), axis=1, ddof=1) / math.sqrt(1000)
    assert np.all(np.abs(a_small.private - a_large.private) <= 3 * se * math.sqrt(1.1))
