import math

import numpy as np
import pytest

from jmbfair.ao import (
    AoConfig,
    Init,
    Mode,
    ao_solve,
    dominant_left_singular_vector,
    init_bc,
    init_zf_e,
    init_zf_svd,
    zf_directions,
)
from jmbfair.harness import ExperimentSpec, draw_instance
from jmbfair.mmse import Precoder
from jmbfair.model import Channel, Fixed, RngStream, Scenario, complex_normal, draw_sample_set

EYE = Channel(np.eye(2))


def test_zf_e_power_split_identity_channel():
    pre = init_zf_e(EYE, 100.0, 0.6)
    per_user = 100.0 ** 0.6 / 2
    assert per_user == pytest.approx(7.924, abs=5e-4)
    np.testing.assert_allclose(np.sum(np.abs(pre.private) ** 2, axis=0), [per_user] * 2, rtol=1e-12)
    assert np.sum(np.abs(pre.common) ** 2) == pytest.approx(100 - 100 ** 0.6, rel=1e-12)
    assert 100 - 100 ** 0.6 == pytest.approx(84.15, abs=5e-3)
    np.testing.assert_allclose(pre.common, [math.sqrt(100 - 100 ** 0.6), 0.0])
    assert pre.power == pytest.approx(100.0, rel=1e-12)


def test_full_quality_csit_leaves_no_common_power():
    pre = init_zf_e(EYE, 100.0, 1.0)
    assert not pre.common.any()
    assert pre.power == pytest.approx(100.0)


def test_zf_directions_orthogonal_to_other_users():
    for seed in range(10):
        h = complex_normal(RngStream(seed).generator(), (3, 3))
        dirs, _ = zf_directions(Channel(h))
        cross = h.conj().T @ dirs
        off = cross - np.diag(np.diag(cross))
        assert np.abs(off).max() <= 1e-10
        np.testing.assert_allclose(np.linalg.norm(dirs, axis=0), 1.0, rtol=1e-12)


def test_dominant_singular_vector():
    np.testing.assert_allclose(dominant_left_singular_vector(np.diag([2.0, 1.0])), [1.0, 0.0])
    gen = RngStream(4).generator()
    for _ in range(5):
        h = complex_normal(gen, (3, 2))
        v = dominant_left_singular_vector(h)
        # power-method oracle on H H^H
        w = np.ones(3, dtype=complex)
        for _ in range(2000):
            w = h @ (h.conj().T @ w)
            w /= np.linalg.norm(w)
        w *= abs(w[0]) / w[0]
        assert np.abs(v - w).max() <= 1e-8


def test_zf_svd_uses_full_power():
    h = Channel(complex_normal(RngStream(5).generator(), (2, 2)))
    pre = init_zf_svd(h, 50.0, 0.6)
    assert pre.power == pytest.approx(50.0, rel=1e-12)
    assert init_bc(h, 50.0).power == pytest.approx(50.0, rel=1e-12)
    assert not init_bc(h, 50.0).common.any()


def test_config_validation():
    with pytest.raises(ValueError):
        AoConfig(eps_r=0.0)
    with pytest.raises(ValueError):
        AoConfig(n_max=0)
    with pytest.raises(ValueError):
        init_zf_e(EYE, 10.0, 1.5)


def _instance(channel, snr, seed=0):
    spec = ExperimentSpec(seed=seed, sample_size=50)
    sc, _, ss = draw_instance(spec, channel, snr)
    return sc, ss


@pytest.mark.parametrize("snr", [5.0, 20.0])
def test_trace_monotone_and_converged(snr):
    sc, ss = _instance(1, snr)
    res = ao_solve(sc, ss, AoConfig())
    assert res.converged and res.iterations <= 200
    assert np.all(np.diff(res.objective_trace) >= -1e-8)
    assert res.precoder.power <= sc.power * (1 + 1e-8)
    assert res.coeffs.sum() == pytest.approx(1.0) and np.all(res.coeffs >= 0)
    # the reported objective is the sampled min rate at the final point
    assert res.objective == pytest.approx(res.final_rates.min_total(res.coeffs), abs=0)


def test_broadcast_never_beats_common_stream():
    for channel in range(3):
        sc, ss = _instance(channel, 15.0)
        jmb = ao_solve(sc, ss, AoConfig(mode=Mode.JMB))
        bc = ao_solve(sc, ss, AoConfig(mode=Mode.BC))
        assert not bc.precoder.common.any()
        assert bc.objective <= jmb.objective + 1e-6


def test_perfect_csit_identity_reaches_log2_6():
    sc = Scenario(2, 2, 10.0, error_model=Fixed(0.0), sample_size=1)
    ss = draw_sample_set(RngStream(0), EYE, 0.0, 1)
    res = ao_solve(sc, ss, AoConfig())
    assert res.objective >= math.log2(6) - 0.01


def test_custom_initial_precoder():
    sc, ss = _instance(0, 10.0)
    pre = init_zf_e(ss.estimate, sc.power, 0.5)
    res = ao_solve(sc, ss, AoConfig(init=pre, n_max=3))
    assert res.iterations <= 3
    too_big = Precoder.from_matrix(pre.matrix * 2)
    with pytest.raises(ValueError):
        ao_solve(sc, ss, AoConfig(init=too_big))


def test_init_labels():
    assert Init("zf-e") is Init.ZF_E and Mode("bc") is Mode.BC


def test_partition_and_update_steps_never_lose():
    # the water-filling step and the precoder update each improve the
    # objective they act on (up to solver tolerance)
    for snr in (5.0, 20.0):
        sc, ss = _instance(2, snr)
        res = ao_solve(sc, ss, AoConfig(n_max=40))
        for rec in res.records:
            assert rec.after_partition >= rec.after_mmse - 1e-8
            assert rec.after_update >= rec.after_partition - 1e-8
