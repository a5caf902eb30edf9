import dataclasses
import io
import math

import numpy as np
import pytest

from jmbfair import harness
from jmbfair.ao import Init, Mode
from jmbfair.harness import (
    ChannelOutcome,
    ExperimentSpec,
    HarnessError,
    TraceRow,
    achieved_min_rate,
    aggregate,
    draw_instance,
)
from jmbfair.mmse import Precoder
from jmbfair.model import Channel, Decaying, Fixed, RngStream, complex_normal

TINY = ExperimentSpec(sample_size=10, snr_grid_db=(10.0,), n_channels=3, eps_r=1e-3, n_max=30)


def test_achieved_rate_examples():
    h = Channel(np.eye(2))
    pre = Precoder(np.array([1.0, 1.0]), np.diag([2.0, 1.0]))
    # user 1: private 4 / (1 + 0) -> log2 5 ; user 2: log2 2 ; common 2 / (1 + 4) or 2 / (1 + 1)
    r_c = min(math.log2(1 + 1 / 5), math.log2(1 + 1 / 2))
    assert achieved_min_rate(h, pre, [1.0, 0.0], 1.0) == pytest.approx(min(math.log2(5) + r_c, 1.0))
    assert achieved_min_rate(h, pre, [0.0, 1.0], 1.0) == pytest.approx(min(math.log2(5), 1.0 + r_c))
    no_common = pre.without_common()
    assert achieved_min_rate(h, no_common, [0.5, 0.5], 1.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        achieved_min_rate(h, pre, [0.5, 0.6], 1.0)


def test_achieved_rate_brute_force():
    gen = RngStream(3).generator()
    h = Channel(complex_normal(gen, (3, 3)))
    pre = Precoder.from_matrix(complex_normal(gen, (3, 4)))
    c = np.array([0.2, 0.3, 0.5])
    sinr_c, rates = [], []
    for k in range(3):
        hk = h.column(k)
        sig = [abs(np.vdot(pre.private[:, i], hk)) ** 2 for i in range(3)]
        sinr_c.append(abs(np.vdot(pre.common, hk)) ** 2 / (1 + sum(sig)))
        rates.append(math.log2(1 + sig[k] / (1 + sum(sig) - sig[k])))
    r_c = math.log2(1 + min(sinr_c))
    expected = min(r + ck * r_c for r, ck in zip(rates, c))
    assert achieved_min_rate(h, pre, c, 1.0) == pytest.approx(expected, rel=1e-12)


def test_paired_and_unpaired_sampling():
    a = draw_instance(TINY, 2, 10.0)[1].matrix
    assert np.array_equal(a, draw_instance(TINY, 2, 30.0, snr_index=4)[1].matrix)
    unpaired = dataclasses.replace(TINY, paired_sampling=False)
    b = draw_instance(unpaired, 2, 10.0, 0)[1].matrix
    c = draw_instance(unpaired, 2, 10.0, 1)[1].matrix
    assert not np.allclose(b, c)
    sc, _, ss = draw_instance(TINY, 0, 20.0)
    assert ss.error_var == pytest.approx(100.0 ** -0.6) and ss.size == 10
    assert sc.power == pytest.approx(100.0)


def test_spec_round_trip_and_validation():
    spec = dataclasses.replace(TINY, error_model=Fixed(0.063), inits=(Init.ZF_E, Init.ZF_SVD))
    assert ExperimentSpec.from_dict(spec.to_dict()) == spec
    assert ExperimentSpec.from_dict({}) == ExperimentSpec()
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict({"bogus": 1})
    assert ExperimentSpec().error_model == Decaying(0.6)


def test_ergodic_deterministic_and_worker_independent():
    spec = dataclasses.replace(TINY, inits=(Init.ZF_E,))
    one = harness.run_ergodic(spec)
    again = harness.run_ergodic(spec)
    two = harness.run_ergodic(dataclasses.replace(spec, workers=2))
    assert one == again == two
    assert {(r.mode, r.init) for r in one} == {(Mode.JMB, "zf-e"), (Mode.BC, "zf")}
    for r in one:
        assert r.n_channels == 3 and r.n_failed == 0 and r.sample_size == 10
    jmb = next(r for r in one if r.mode is Mode.JMB)
    bc = next(r for r in one if r.mode is Mode.BC)
    assert jmb.ergodic_rate >= bc.ergodic_rate - 1e-6


def _outcome(i, failed=False):
    return ChannelOutcome(channel=i, snr_db=10.0, mode=Mode.BC, init="zf",
                          achieved_rate=math.nan if failed else float(i), sampled_objective=0.0,
                          iterations=3, converged=True, error="boom" if failed else None)


def test_aggregate_failure_fraction():
    spec = dataclasses.replace(TINY, modes=(Mode.BC,), n_channels=40)
    ok = [_outcome(i) for i in range(39)] + [_outcome(39, failed=True)]
    with pytest.warns(RuntimeWarning):
        recs = aggregate(ok, spec)
    assert recs[0].n_channels == 39 and recs[0].n_failed == 1
    assert recs[0].ergodic_rate == pytest.approx(19.0)
    bad = [_outcome(i) for i in range(37)] + [_outcome(i, failed=True) for i in range(37, 40)]
    with pytest.raises(HarnessError):
        aggregate(bad, spec)


def test_csv_writers():
    buf = io.StringIO()
    harness.write_convergence_csv([TraceRow(1, 5.0, "zf-e", 0.1)], buf)
    lines = buf.getvalue().splitlines()
    assert lines == ["iteration,snr_db,init,objective_bits", "1,5.0,zf-e,0.1"]
    buf = io.StringIO()
    harness.write_ergodic_csv(aggregate([_outcome(1), _outcome(3)],
                                        dataclasses.replace(TINY, modes=(Mode.BC,))), buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "snr_db,mode,init,ergodic_rate_bits,std_error,n_channels,m"
    assert lines[1].startswith("10.0,bc,zf,2.0,1.0,2,10")


def test_convergence_traces():
    spec = dataclasses.replace(TINY, inits=(Init.ZF_E, Init.ZF_SVD))
    rows = harness.run_convergence(spec, snr_points=(5.0,))
    assert {r.init for r in rows} == {"zf-e", "zf-svd"}
    for init in ("zf-e", "zf-svd"):
        its = [r.iteration for r in rows if r.init == init]
        assert its == list(range(1, len(its) + 1))
