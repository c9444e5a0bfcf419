"""Command line entry point: transpile, run, zne, report."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import experiment as ex
from .stats import HIST_BINS
from .transpiler import FloquetSpec, build_floquet_step, verify_counts


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def cmd_transpile(args) -> int:
    spec = FloquetSpec(args.qubits, args.range, args.epsilon,
                       _floats(args.couplings) if args.couplings else None, args.boundary)
    circuit, report = build_floquet_step(spec, optimize=args.optimize == "on")
    verdict = verify_counts(report)
    out = Path(args.out)
    circuit.to_json(out)
    info = report.to_dict()
    info["verdict"] = {"passed": verdict.passed, "advisory": verdict.advisory,
                       "expected": list(verdict.expected), "measured": list(verdict.measured),
                       "diff": verdict.diff}
    rep_path = out.with_name(out.stem + ".report.json")
    rep_path.write_text(json.dumps(info, indent=1))
    c = report.counts
    print(f"{len(circuit)} gates; longest path {c.two_qubit_longest_path} CNOT / "
          f"{c.one_qubit_longest_path} 1q; relabel {report.relabel.to_list()}")
    print(f"wrote {out} and {rep_path}")
    return 0


def cmd_run(args) -> int:
    cfg = json.loads(Path(args.config).read_text())
    if args.shots is not None:
        cfg["shots"] = args.shots
    if args.seed is not None:
        cfg["seed"] = args.seed
    plan = ex.ExperimentPlan.from_dict(cfg)
    record = ex.run_experiment(plan, workers=args.workers)
    out = ex.save_record(record, args.root)
    _summary(record)
    print(f"run directory: {out}")
    return 0 if not record.failures else 2


def cmd_zne(args) -> int:
    run_dir = Path(args.run_dir)
    plan, tables = ex.load_tables(run_dir)
    record = ex.analyze(plan, tables)
    _, rep = build_floquet_step(plan.spec, optimize=True)
    record.counts = rep.counts
    ex.write_json(run_dir / "record.json", record.to_dict())
    if record.zne is not None:
        ex.write_json(run_dir / "zne.json", record.to_dict()["zne"])
    _summary(record)
    return 0 if record.zne is not None else 2


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    plan, tables = ex.load_tables(run_dir)
    record = ex.analyze(plan, tables)
    out = run_dir / "report"
    (out / "bootstrap").mkdir(parents=True, exist_ok=True)
    _write(out / "raw_series.csv", ["n", "s", "mean", "sigma"],
           [(n, s, e.mean, e.sigma) for (n, s), e in sorted(record.estimates.items())])
    theory = dict(record.theory)
    _write(out / "mitigated_series.csv", ["n", "value", "lo", "hi", "theory"],
           [(p.n, p.value, p.lo, p.hi, theory.get(p.n)) for p in record.mitigated])
    rows = []
    for s, f in sorted(record.fits.items()):
        line = record.zne.at(s) if record.zne is not None else None
        rows.append((s, f.rate, f.d_rate, line))
    if record.zne is not None:
        rows.append((0.0, record.zne.intercept, record.zne.dintercept, record.zne.intercept))
    _write(out / "gamma_vs_s.csv", ["s", "gamma", "dgamma", "linear_fit"], rows)
    for (n, s), e in sorted(record.estimates.items()):
        lo, hi = float(e.means.min()), float(e.means.max())
        counts, edges = np.histogram(e.means, bins=HIST_BINS, range=(lo, hi if hi > lo else lo + 1e-9))
        _write(out / "bootstrap" / f"n{n:03d}_s{s:g}.csv", ["bin_left", "bin_right", "count"],
               zip(edges[:-1], edges[1:], counts))
    print(f"report written to {out}")
    return 0


def _write(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _summary(record: ex.ExperimentRecord) -> None:
    for s, f in sorted(record.fits.items()):
        print(f"s={s:g}: Gamma = {f.rate:.5f} +- {f.d_rate:.5f}  excluded {[n for n, _ in f.excluded]}")
    z = record.zne
    if z is not None:
        print(f"ZNE: slope {z.slope:.5f} +- {z.slope_err:.5f}, "
              f"Gamma_0 = {z.intercept:.5f} +- {z.dintercept:.5f}, R^2 {z.r2:.4f}")
    for msg in record.failures:
        print("warning:", msg, file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dtcsim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("transpile", help="emit one Floquet step as native-gate JSON")
    t.add_argument("--qubits", type=int, required=True)
    t.add_argument("--range", type=int, default=1)
    t.add_argument("--epsilon", type=float, default=0.2)
    t.add_argument("--couplings", help="comma-separated theta_r in radians")
    t.add_argument("--boundary", choices=["open", "periodic"], default="open")
    t.add_argument("--optimize", choices=["on", "off"], default="on")
    t.add_argument("--out", required=True, help="circuit JSON path; report goes next to it")
    t.set_defaults(func=cmd_transpile)

    r = sub.add_parser("run", help="simulate an experiment plan")
    r.add_argument("--config", required=True, help="plan JSON")
    r.add_argument("--root", default="runs", help="parent directory for run directories")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--shots", type=int)
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_run)

    z = sub.add_parser("zne", help="refit decay rates and extrapolate from stored shots")
    z.add_argument("--run-dir", required=True)
    z.set_defaults(func=cmd_zne)

    rep = sub.add_parser("report", help="write plot-ready CSVs for a run")
    rep.add_argument("--run-dir", required=True)
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
