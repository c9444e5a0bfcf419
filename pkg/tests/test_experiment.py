import json
import math

import numpy as np
import pytest

from dtcsim import experiment as ex
from dtcsim.noise import NoiseModel
from dtcsim.simulator import exact_z_series
from dtcsim.transpiler import FloquetSpec, build_floquet_step

SMALL = dict(steps=tuple(range(7)), scales=(1.0, 2.0), shots=256, resamples=50, fit_window=(1, 6))


def small_plan(**kw):
    cfg = dict(SMALL)
    cfg.update(kw)
    spec = cfg.pop("spec", FloquetSpec(4, 1, 0.2))
    return ex.ExperimentPlan(spec, **cfg)


@pytest.fixture(scope="module")
def noisy_record():
    return ex.run_experiment(small_plan(model=NoiseModel(p1=1e-3, p2=2e-2)))


def test_noiseless_period_doubling():
    rec = ex.run_experiment(small_plan(spec=FloquetSpec(4, 2, 0.0), model=NoiseModel.noiseless()))
    for n, m, sigma in ex.magnetization_series(rec, 1.0):
        assert m == (-1) ** n and sigma == 0
    assert rec.fits[1.0].rate == pytest.approx(0, abs=1e-12)
    assert rec.zne.intercept == pytest.approx(0, abs=1e-12)
    assert not rec.failures


def test_noiseless_matches_exact_series():
    spec = FloquetSpec(5, 1, 0.2)
    shots = 4000
    rec = ex.run_experiment(small_plan(spec=spec, model=NoiseModel.noiseless(), shots=shots,
                                       scales=(1.0,)))
    step, rep = build_floquet_step(spec, elide=False)
    exact = exact_z_series(step, 6).mean(axis=1)
    for n, m, _ in ex.magnetization_series(rec, 1.0):
        # per-shot magnetization has variance at most 1
        assert abs(m - exact[n]) < 4 / math.sqrt(shots)


def test_readout_only_at_zero_steps():
    shots = 4096
    rec = ex.run_experiment(small_plan(model=NoiseModel.noiseless().replace(p_m=0.05), shots=shots,
                                       steps=(0,), scales=(1.0,)))
    e = rec.estimates[(0, 1.0)]
    assert abs(e.mean - 0.9) < 4 * math.sqrt(0.19 / 4 / shots)


def test_record_contents(noisy_record):
    rec = noisy_record
    assert set(rec.fits) == {1.0, 2.0}
    assert rec.fits[2.0].rate > rec.fits[1.0].rate
    assert rec.zne is not None and len(rec.mitigated) == 7
    assert rec.achieved_scales[1.0] == 1.0
    assert rec.achieved_scales[2.0] == pytest.approx(2.0, abs=0.05)
    d = json.loads(json.dumps(rec.to_dict()))
    assert {"plan", "estimates", "fits", "zne", "theory", "failures"} <= set(d)
    assert set(d["estimates"][0]) == {"n", "s", "R", "mean", "sigma", "M", "skew", "kurtosis"}


def test_series_helpers(noisy_record):
    with pytest.raises(KeyError):
        ex.magnetization_series(noisy_record, 1.7)
    signed = ex.magnetization_series(noisy_record, 1.0)
    assert [abs(m) for _, m, _ in signed] == [m for _, m, _ in ex.abs_series(noisy_record, 1.0)]
    pred = ex.predicted_decay(noisy_record, 2.0)
    assert pred.Gamma_s == pytest.approx(2 * pred.gamma_noise)


def test_reproducible_and_seed_sensitive(noisy_record):
    again = ex.run_experiment(noisy_record.plan)
    for key, t in noisy_record.tables.items():
        assert np.array_equal(t.bits, again.tables[key].bits)
    other = ex.run_experiment(ex.ExperimentPlan(**{**noisy_record.plan.__dict__, "seed": 1}))
    assert not np.array_equal(other.tables[(3, 1.0)].bits, noisy_record.tables[(3, 1.0)].bits)


def test_workers_do_not_change_results():
    plan = small_plan(steps=(0, 1, 2, 3), scales=(1.0,), shots=600)
    a = ex.run_experiment(plan, workers=1)
    b = ex.run_experiment(plan, workers=3)
    for key in a.tables:
        assert np.array_equal(a.tables[key].bits, b.tables[key].bits)


def test_independent_steps_mode():
    rec = ex.run_experiment(small_plan(spec=FloquetSpec(4, 1, 0.0), model=NoiseModel.noiseless(),
                                       independent_steps=True, scales=(1.0,)))
    for n, m, _ in ex.magnetization_series(rec, 1.0):
        assert m == (-1) ** n


def test_partial_failure_is_reported():
    plan = small_plan(model=NoiseModel.noiseless())
    rec = ex.run_experiment(plan)
    tables = {k: v for k, v in rec.tables.items() if k[1] == 1.0 or k[0] < 2}
    again = ex.analyze(plan, tables)
    assert 1.0 in again.fits and 2.0 not in again.fits
    assert any("missing shots" in f for f in again.failures)
    assert any("decay fit failed" in f for f in again.failures)
    assert again.zne is None


def test_plan_validation_and_round_trip():
    with pytest.raises(ValueError):
        small_plan(steps=(3, 1))
    with pytest.raises(ValueError):
        small_plan(scales=(0.5,))
    with pytest.raises(ValueError):
        small_plan(spec=FloquetSpec(15, 1))
    p = small_plan(seed=7)
    assert ex.ExperimentPlan.from_dict(json.loads(json.dumps(p.to_dict()))) == p
    assert p.config_hash() == ex.ExperimentPlan.from_dict(p.to_dict()).config_hash()
    assert p.config_hash() != small_plan(seed=8).config_hash()


def test_derive_seed():
    assert ex.derive_seed(1, 2, 3) == ex.derive_seed(1, 2, 3)
    assert ex.derive_seed(1, 2, 3) != ex.derive_seed(1, 2, 4)
    assert 0 <= ex.derive_seed(0) < 2**64


def test_save_and_reanalyze(tmp_path, noisy_record):
    out = ex.save_record(noisy_record, tmp_path)
    assert out.name.endswith(noisy_record.plan.config_hash())
    assert (out / "zne.json").exists()
    assert len(list((out / "shots").glob("*.csv"))) == 14
    assert len(list((out / "estimates").glob("*.json"))) == 14
    plan, tables = ex.load_tables(out)
    assert plan == noisy_record.plan
    again = ex.analyze(plan, tables)
    assert again.zne.intercept == noisy_record.zne.intercept
    assert again.fits[1.0] == noisy_record.fits[1.0]
