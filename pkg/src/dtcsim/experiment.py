"""End-to-end sweep: steps x noise scales -> shots -> bootstrap -> fits -> ZNE.

Each noisy trajectory is advanced one Floquet step at a time. After step
n-1 a copy is branched off, the last (relabeled) step is applied to the copy
and it is measured, so one trajectory yields a sample for every n. Samples at
different n within a shot are therefore correlated; ``independent_steps``
restarts from |0...0> for every n instead.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .circuit import Circuit, GateCounts
from .mitigation import (DecayFit, FitError, MitigatedPoint, ZneResult, fit_exponential_wls,
                         fit_linear_zne, fold_circuit, mitigate_curve, zne_report)
from .noise import NoiseModel, gamma_epsilon_theory, predict
from .simulator import (PLAN_APPLY, PLAN_BRANCH, PLAN_MEASURE, PLAN_RESET, SIM_CAP, ShotTable,
                        bundle, compile_program, execute_plan, readout_vector)
from .stats import BootstrapEstimate, EmpiricalDistribution, bootstrap, write_histogram
from .transpiler import FloquetSpec, build_floquet_step

DESK_NOISE = NoiseModel(p1=2e-4, p2=5e-3)


def derive_seed(*key: int) -> int:
    """64-bit seed from an integer key path."""
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ExperimentPlan:
    spec: FloquetSpec
    model: NoiseModel = DESK_NOISE
    steps: tuple[int, ...] = tuple(range(17))
    scales: tuple[float, ...] = (1.0, 1.4, 1.8, 2.6)
    shots: int = 8192
    resamples: int = 1000
    seed: int = 0
    fit_window: tuple[int, int] = (2, 15)
    independent_steps: bool = False

    def __post_init__(self):
        steps = tuple(int(n) for n in self.steps)
        if list(steps) != sorted(set(steps)) or (steps and steps[0] < 0):
            raise ValueError("steps must be distinct, non-negative and ascending")
        if any(s < 1 for s in self.scales):
            raise ValueError("noise scales must be >= 1")
        if self.shots < 1 or self.resamples < 2:
            raise ValueError("need shots >= 1 and resamples >= 2")
        if self.spec.num_qubits > SIM_CAP:
            raise ValueError(f"N={self.spec.num_qubits} exceeds the simulator cap {SIM_CAP}")
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        object.__setattr__(self, "fit_window", tuple(int(v) for v in self.fit_window))

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "noise": self.model.to_dict(), "steps": list(self.steps),
                "scales": list(self.scales), "shots": self.shots,
                "bootstrap_resamples": self.resamples, "seed": self.seed,
                "fit_window": list(self.fit_window), "independent_steps": self.independent_steps}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        base = cls(FloquetSpec.from_dict(d["spec"]))
        return cls(spec=base.spec,
                   model=NoiseModel.from_dict(d["noise"]) if "noise" in d else base.model,
                   steps=tuple(d.get("steps", base.steps)), scales=tuple(d.get("scales", base.scales)),
                   shots=int(d.get("shots", base.shots)),
                   resamples=int(d.get("bootstrap_resamples", base.resamples)),
                   seed=int(d.get("seed", base.seed)),
                   fit_window=tuple(d.get("fit_window", base.fit_window)),
                   independent_steps=bool(d.get("independent_steps", False)))

    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:10]


@dataclass
class ExperimentRecord:
    plan: ExperimentPlan
    estimates: dict = field(default_factory=dict)  # (n, s) -> BootstrapEstimate
    fits: dict = field(default_factory=dict)  # s -> DecayFit
    zne: ZneResult | None = None
    mitigated: list[MitigatedPoint] = field(default_factory=list)
    theory: list[tuple[int, float]] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    tables: dict = field(default_factory=dict)  # (n, s) -> ShotTable
    counts: GateCounts | None = None
    achieved_scales: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        est = [e.to_dict(n=n, s=s, R=self.plan.spec.range)
               for (n, s), e in sorted(self.estimates.items())]
        fits = sorted(self.fits.items())
        return {
            "plan": self.plan.to_dict(),
            "counts": None if self.counts is None else self.counts.to_dict(),
            "achieved_scales": {str(k): v for k, v in self.achieved_scales.items()},
            "estimates": est,
            "fits": [{"s": s, "amplitude": f.amplitude, "d_amplitude": f.d_amplitude,
                      "rate": f.rate, "d_rate": f.d_rate, "window": list(f.window),
                      "excluded": [list(e) for e in f.excluded]} for s, f in fits],
            "zne": None if self.zne is None else zne_report(fits, self.zne, self.mitigated),
            "theory": [{"n": n, "value": v} for n, v in self.theory],
            "failures": list(self.failures),
        }


# ---------------------------------------------------------------- simulation


def _step_circuits(plan: ExperimentPlan, s_index: int, s: float):
    body, _ = build_floquet_step(plan.spec, optimize=True, elide=False)
    last, rep = build_floquet_step(plan.spec, optimize=True, elide=True)
    nmax = max(plan.steps, default=0)
    bodies, lasts, achieved = {}, {}, []
    for k in range(1, nmax + 1):
        fb, pb = fold_circuit(body, s, derive_seed(plan.seed, 1, s_index, k, 0))
        fl, pl = fold_circuit(last, s, derive_seed(plan.seed, 1, s_index, k, 1))
        bodies[k], lasts[k] = (fb, pb), (fl, pl)
        achieved += [pb.achieved_scale, pl.achieved_scale]
    return bodies, lasts, rep, (float(np.mean(achieved)) if achieved else 1.0)


def _shot_plan(steps: Sequence[int], independent: bool, seg_body: dict, seg_last: dict):
    plan = []
    if independent:
        for row, n in enumerate(steps):
            plan.append((PLAN_RESET, -1, 0))
            for k in range(1, n):
                plan.append((PLAN_APPLY, seg_body[k], 0))
            plan.append((PLAN_BRANCH, seg_last[n], row) if n else (PLAN_MEASURE, -1, row))
        return plan
    rows = {n: r for r, n in enumerate(steps)}
    nmax = max(steps, default=0)
    if 0 in rows:
        plan.append((PLAN_MEASURE, -1, rows[0]))
    for n in range(1, nmax + 1):
        if n in rows:
            plan.append((PLAN_BRANCH, seg_last[n], rows[n]))
        if n < nmax:
            plan.append((PLAN_APPLY, seg_body[n], 0))
    return plan


def simulate_scale(plan: ExperimentPlan, s_index: int, workers: int = 1):
    """Shot tables {n: ShotTable} for one noise scale, plus the mean achieved scale."""
    s = plan.scales[s_index]
    bodies, lasts, rep, achieved = _step_circuits(plan, s_index, s)
    window_ns = 1e3 * plan.model.tau_m
    programs, seg_body, seg_last = [], {}, {}
    for k in sorted(bodies):
        # readout-length idle slot per step, stretched with the fold factor
        seg_body[k] = len(programs)
        programs.append(compile_program(bodies[k][0], plan.model, window_ns * bodies[k][1].achieved_scale))
        seg_last[k] = len(programs)
        programs.append(compile_program(lasts[k][0], plan.model, window_ns * lasts[k][1].achieved_scale))
    N = plan.spec.num_qubits
    if not programs:
        programs.append(compile_program(Circuit(N, (), topology=plan.spec.topology), plan.model))
    bun = bundle(programs, plan.model)
    shot_plan = _shot_plan(plan.steps, plan.independent_steps, seg_body, seg_last)
    seed = derive_seed(plan.seed, 2, s_index)
    bits = execute_plan(bun, shot_plan, readout_vector(plan.model, N), seed,
                        plan.shots, len(plan.steps), workers)
    tables = {}
    for row, n in enumerate(plan.steps):
        b = bits[row] if n == 0 else rep.relabel.apply_bits(bits[row])
        meta = {"spec": plan.spec.to_dict(), "noise": plan.model.to_dict(), "s": s, "n": n,
                "seed": seed, "master_seed": plan.seed, "achieved_scale": achieved,
                "relabel": None if n == 0 else rep.relabel.to_list()}
        tables[n] = ShotTable(np.ascontiguousarray(b), meta)
    return tables, achieved


# ---------------------------------------------------------------- analysis


def analyze(plan: ExperimentPlan, tables: dict, record: ExperimentRecord | None = None,
            noiseless_counts: GateCounts | None = None) -> ExperimentRecord:
    """Bootstrap every (n, s) table, fit each scale, extrapolate and mitigate."""
    rec = record or ExperimentRecord(plan)
    rec.tables = tables
    floor = 1.0 / plan.shots
    for si, s in enumerate(plan.scales):
        for n in plan.steps:
            t = tables.get((n, s))
            if t is None:
                rec.failures.append(f"missing shots for n={n}, s={s}")
                continue
            rec.estimates[(n, s)] = bootstrap(t.magnetizations(), plan.resamples,
                                              derive_seed(plan.seed, 3, si, n))
        lo, hi = plan.fit_window
        pts = [(n, (-1) ** n * rec.estimates[(n, s)].mean, max(rec.estimates[(n, s)].sigma, floor))
               for n in plan.steps if lo <= n <= hi and (n, s) in rec.estimates]
        try:
            rec.fits[s] = fit_exponential_wls(pts)
        except (FitError, np.linalg.LinAlgError) as err:
            rec.failures.append(f"decay fit failed at s={s}: {err}")
    good = sorted(rec.fits.items())
    if len(good) >= 2:
        try:
            rec.zne = fit_linear_zne(good)
        except (ValueError, np.linalg.LinAlgError) as err:
            rec.failures.append(f"ZNE failed: {err}")
    if rec.zne is not None and 1.0 in rec.fits:
        raw = [(n, rec.estimates[(n, 1.0)].mean) for n in plan.steps if (n, 1.0) in rec.estimates]
        rec.mitigated = mitigate_curve(raw, rec.fits[1.0], rec.zne)
    elif rec.zne is not None:
        rec.failures.append("no s=1 fit, mitigated curve skipped")
    g = gamma_epsilon_theory(plan.spec.epsilon, plan.spec.range) if abs(plan.spec.epsilon) < 1 else math.nan
    rec.theory = [(n, (-1) ** n * math.exp(-n * g)) for n in plan.steps]
    return rec


def run_experiment(plan: ExperimentPlan, workers: int = 1) -> ExperimentRecord:
    rec = ExperimentRecord(plan)
    _, rep = build_floquet_step(plan.spec, optimize=True, elide=True)
    rec.counts = rep.counts
    tables = {}
    for si, s in enumerate(plan.scales):
        try:
            per_n, achieved = simulate_scale(plan, si, workers)
        except Exception as err:  # keep the rest of the grid
            rec.failures.append(f"simulation failed at s={s}: {err!r}")
            continue
        rec.achieved_scales[s] = achieved
        tables.update({(n, s): t for n, t in per_n.items()})
    return analyze(plan, tables, rec)


def magnetization_series(record: ExperimentRecord, s: float) -> list[tuple[int, float, float]]:
    """Signed (n, E[m_z], sigma) at scale ``s``; see :func:`abs_series` for |m_z|."""
    if float(s) not in record.plan.scales:
        raise KeyError(f"scale {s} not in plan {record.plan.scales}")
    s = float(s)
    return [(n, record.estimates[(n, s)].mean, record.estimates[(n, s)].sigma)
            for n in record.plan.steps if (n, s) in record.estimates]


def abs_series(record: ExperimentRecord, s: float) -> list[tuple[int, float, float]]:
    return [(n, abs(m), e) for n, m, e in magnetization_series(record, s)]


def predicted_decay(record: ExperimentRecord, s: float = 1.0):
    return predict(record.counts, record.plan.model, s)


# ---------------------------------------------------------------- persistence


def run_dir_name(plan: ExperimentPlan, now: float | None = None) -> str:
    stamp = time.strftime("%Y%m%d-%H%M%S", time.localtime(now))
    return f"{stamp}-{plan.config_hash()}"


def save_record(record: ExperimentRecord, root: str | Path, name: str | None = None) -> Path:
    root = Path(root)
    out = root / (name or run_dir_name(record.plan))
    (out / "shots").mkdir(parents=True, exist_ok=True)
    (out / "estimates").mkdir(exist_ok=True)
    (out / "histograms").mkdir(exist_ok=True)
    (out / "plan.json").write_text(json.dumps(record.plan.to_dict(), indent=1))
    R = record.plan.spec.range
    for (n, s), t in sorted(record.tables.items()):
        tag = f"n{n:03d}_s{s:g}"
        t.to_csv(out / "shots" / f"{tag}.csv")
        est = record.estimates.get((n, s))
        if est is not None:
            (out / "estimates" / f"{tag}.json").write_text(json.dumps(est.to_dict(n=n, s=s, R=R), indent=1))
            write_histogram(out / "histograms" / f"{tag}.csv",
                            EmpiricalDistribution.from_values(t.magnetizations()))
    write_json(out / "record.json", record.to_dict())
    if record.zne is not None:
        write_json(out / "zne.json", record.to_dict()["zne"])
    return out


def load_tables(run_dir: str | Path) -> tuple[ExperimentPlan, dict]:
    run_dir = Path(run_dir)
    plan = ExperimentPlan.from_dict(json.loads((run_dir / "plan.json").read_text()))
    tables = {}
    for path in sorted((run_dir / "shots").glob("*.csv")):
        t = ShotTable.from_csv(path)
        tables[(int(t.meta["n"]), float(t.meta["s"]))] = t
    return plan, tables


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, allow_nan=True))
