import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from dtcsim.circuit import Circuit, cnot, phase_distance, rz, sx, unitary_of, x
from dtcsim.mitigation import (DecayFit, ExponentialDecayRegressor, FitError, LinearZNERegressor,
                               RESOLUTION_REASON, fit_exponential_wls, fit_linear_zne, fold_circuit,
                               mitigate_curve, resolution_bound, zne_report)
from dtcsim.transpiler import FloquetSpec, build_floquet_step

from test_circuit import random_circuit


def test_fold_scale_one_is_identity():
    c = random_circuit(np.random.default_rng(0), 3, 15)
    out, plan = fold_circuit(c, 1.0, seed=0)
    assert out.gates == c.gates and plan.folded_gate_indices == () and plan.achieved_scale == 1


def test_fold_scale_three_folds_everything():
    c = Circuit(2, [cnot(0, 1), x(0), rz(1, 0.3)])
    out, plan = fold_circuit(c, 3.0, seed=1)
    assert sorted(plan.folded_gate_indices) == [0, 1, 2]
    assert len(out) == 9 and plan.achieved_scale == 3


def test_fold_count_rounding():
    c = random_circuit(np.random.default_rng(1), 3, 10)
    _, plan = fold_circuit(c, 1.5, seed=2)
    assert len(plan.folded_gate_indices) == 3  # round(0.25 * 10) half up
    assert plan.achieved_scale == pytest.approx(1.6)


def test_fold_rejects_scale_below_one():
    with pytest.raises(ValueError):
        fold_circuit(Circuit(1, [x(0)]), 0.5, seed=0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([1.0, 1.4, 1.8, 2.6, 3.0, 4.2]))
def test_fold_preserves_unitary(seed, s):
    c = random_circuit(np.random.default_rng(seed), 3, 12)
    out, plan = fold_circuit(c, s, seed=seed)
    assert phase_distance(unitary_of(out), unitary_of(c)) < 1e-10
    assert plan.achieved_scale == pytest.approx((len(c) + 2 * len(plan.folded_gate_indices)) / len(c))
    assert abs(plan.achieved_scale - s) <= 1 / len(c) + 1e-12


def test_fold_step_preserves_unitary():
    step, _ = build_floquet_step(FloquetSpec(6, 2))
    out, _ = fold_circuit(step, 2.6, seed=4)
    assert phase_distance(unitary_of(out), unitary_of(step)) < 1e-10


def test_fold_seeded():
    c = random_circuit(np.random.default_rng(2), 3, 20)
    a = fold_circuit(c, 1.8, seed=5)[1].folded_gate_indices
    assert a == fold_circuit(c, 1.8, seed=5)[1].folded_gate_indices
    assert a != fold_circuit(c, 1.8, seed=6)[1].folded_gate_indices


def test_exponential_fit_recovers_noiseless_data():
    n = np.arange(1, 17)
    y = 0.9 * np.exp(-0.05 * n) * (-1) ** n
    fit = fit_exponential_wls(zip(n, y, np.full(n.size, 1e-3)))
    assert fit.rate == pytest.approx(0.05, abs=1e-9)
    assert fit.amplitude == pytest.approx(0.9, rel=1e-9)
    assert fit.excluded == ()


def test_exponential_fit_scale_equivariance():
    n = np.arange(1, 12)
    y = np.exp(-0.1 * n) * (1 + 0.01 * np.sin(n))
    sig = np.full(n.size, 0.01)
    f1 = fit_exponential_wls(zip(n, y, sig))
    f2 = fit_exponential_wls(zip(n, 3 * y, 3 * sig))
    assert f2.rate == pytest.approx(f1.rate, rel=1e-10)
    assert f2.amplitude == pytest.approx(3 * f1.amplitude, rel=1e-10)


def test_exponential_fit_excludes_unresolved_points():
    n = np.arange(1, 9)
    y = np.exp(-0.5 * n)
    fit = fit_exponential_wls(zip(n, y, np.full(n.size, 0.01)))
    assert all(reason == RESOLUTION_REASON for _, reason in fit.excluded)
    assert {k for k, _ in fit.excluded} == {int(k) for k in n if math.exp(-0.5 * k) < 0.02}
    with pytest.raises(FitError) as err:
        fit_exponential_wls(zip(n, y, np.full(n.size, 0.2)))
    assert err.value.excluded


def test_exponential_fit_statistics():
    # rate error matches the scatter of fits to resampled data
    rng = np.random.default_rng(3)
    n = np.arange(1, 17)
    sig = np.full(n.size, 0.01)
    truth = 0.95 * np.exp(-0.04 * n)
    fits = [fit_exponential_wls(zip(n, truth + rng.normal(0, 0.01, n.size), sig)) for _ in range(300)]
    rates = np.array([f.rate for f in fits])
    assert abs(rates.mean() - 0.04) < 4 * rates.std() / math.sqrt(rates.size)
    assert np.mean([f.d_rate for f in fits]) == pytest.approx(rates.std(), rel=0.15)


def test_regressors_are_sklearn_estimators():
    reg = ExponentialDecayRegressor(min_snr=3.0)
    assert reg.get_params() == {"min_snr": 3.0, "absolute_sigma": True}
    assert clone(reg).min_snr == 3.0
    X = np.arange(1, 6)[:, None]
    reg.fit(X, np.exp(-0.2 * X[:, 0]), sigma=0.001)
    assert np.allclose(reg.predict(X), np.exp(-0.2 * X[:, 0]))
    lin = LinearZNERegressor().fit(np.array([[1.0], [2.0]]), np.array([1.0, 2.0]))
    assert np.allclose(lin.predict([[3.0]]), [3.0])


def test_zne_exact_line():
    zne = fit_linear_zne([(1.0, 0.05, 0.001), (1.4, 0.066, 0.001), (1.8, 0.082, 0.001), (2.6, 0.114, 0.001)])
    assert zne.slope == pytest.approx(0.04, abs=1e-12)
    assert zne.intercept == pytest.approx(0.01, abs=1e-12)
    assert zne.r2 == pytest.approx(1.0)
    assert zne.at(2.0) == pytest.approx(0.09)
    # constant per-scale sigma extrapolates to the same sigma at s = 0
    assert zne.dintercept == pytest.approx(max(zne.intercept_se, 0.001))


def test_zne_two_points_and_duplicates():
    zne = fit_linear_zne([(1.0, 0.05, 0.002), (2.0, 0.09, 0.002)])
    assert zne.intercept == pytest.approx(0.01)
    with pytest.raises(ValueError):
        fit_linear_zne([(1.0, 0.05, 0.002), (1.0, 0.06, 0.002)])
    with pytest.raises(ValueError):
        fit_linear_zne([(1.0, 0.05, 0.002)])


def test_zne_accepts_decay_fits():
    f1 = DecayFit(1.0, 0.0, 0.05, 0.001, (1, 2, 3))
    f2 = DecayFit(1.0, 0.0, 0.09, 0.001, (1, 2, 3))
    zne = fit_linear_zne([(1.0, f1), (2.0, f2)])
    assert zne.intercept == pytest.approx(0.01)


def test_mitigation_identity_when_no_noise():
    fit = DecayFit(1.0, 0.0, 0.02, 0.001, (1,))
    zne = fit_linear_zne([(1.0, 0.02, 0.001), (2.0, 0.02, 0.001)])
    raw = [(n, (-1) ** n * math.exp(-0.02 * n)) for n in range(5)]
    pts = mitigate_curve(raw, fit, zne)
    for (n, m), p in zip(raw, pts):
        assert p.value == pytest.approx(m)
        assert p.lo <= p.hi


def test_mitigation_removes_noise_rate():
    fit = DecayFit(0.98, 0.0, 0.07, 0.001, (1,))
    zne = fit_linear_zne([(1.0, 0.07, 0.001), (2.0, 0.12, 0.001)])
    raw = [(n, 0.98 * (-1) ** n * math.exp(-0.07 * n)) for n in range(1, 10)]
    for p in mitigate_curve(raw, fit, zne):
        assert p.value == pytest.approx((-1) ** p.n * math.exp(-0.02 * p.n))
        assert p.lo <= p.value <= p.hi


def test_resolution_bound():
    assert resolution_bound(0.05, 8192) == pytest.approx(math.log(8192) / 0.1)
    with pytest.raises(ValueError):
        resolution_bound(0, 100)
    with pytest.raises(ValueError):
        resolution_bound(0.1, 0)


def test_zne_report_layout():
    f = DecayFit(1.0, 0.0, 0.05, 0.001, (1, 2), ((7, RESOLUTION_REASON),))
    zne = fit_linear_zne([(1.0, f), (2.0, DecayFit(1.0, 0, 0.09, 0.001, (1, 2)))])
    rep = zne_report([(1.0, f)], zne, mitigate_curve([(1, -0.9)], f, zne))
    assert rep["scales"][0]["excluded"] == [7]
    assert {"slope", "intercept", "dintercept", "mitigated"} <= set(rep)
    assert set(rep["mitigated"][0]) == {"n", "value", "lo", "hi"}
