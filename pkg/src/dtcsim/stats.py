"""Bootstrap estimation of the magnetization from shot tables."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats as sps

HIST_BINS = 100
SKEW_LIMIT = 0.5
KURT_LIMIT = 1.0


def magnetization_of_shot(bits) -> float:
    """Mean of Z over qubits, with bit 0 -> +1 and bit 1 -> -1."""
    b = np.asarray(bits)
    if b.ndim != 1 or b.size == 0:
        raise ValueError("expected a non-empty 1-D bitstring")
    return float(1.0 - 2.0 * b.mean())


def magnetizations(bits: np.ndarray) -> np.ndarray:
    """Row-wise version of :func:`magnetization_of_shot`."""
    return 1.0 - 2.0 * np.asarray(bits, dtype=float).mean(axis=1)


@dataclass(frozen=True)
class EmpiricalDistribution:
    values: np.ndarray
    edges: np.ndarray
    counts: np.ndarray

    @classmethod
    def from_values(cls, values, bins: int = HIST_BINS) -> "EmpiricalDistribution":
        v = np.asarray(values, float)
        if v.size and (v.min() < -1 - 1e-12 or v.max() > 1 + 1e-12):
            raise ValueError("magnetizations must lie in [-1, 1]")
        counts, edges = np.histogram(v, bins=bins, range=(-1.0, 1.0))
        return cls(v, edges, counts)


@dataclass(frozen=True)
class BootstrapEstimate:
    mean: float
    sigma: float
    resamples: int
    means: np.ndarray

    def to_dict(self, **extra) -> dict:
        skew, kurt, _ = normality_diagnostics(self) if self.resamples >= 3 else (np.nan, np.nan, False)
        d = dict(extra)
        d.update(mean=self.mean, sigma=self.sigma, M=self.resamples,
                 skew=float(skew), kurtosis=float(kurt))
        return d


def bootstrap(values, M: int = 1000, seed: int = 0) -> BootstrapEstimate:
    """Resample ``values`` with replacement M times and average each resample.

    A resample of size N drawn with replacement is a multinomial count vector
    over the distinct values, which is what gets drawn here; per-shot
    magnetizations take at most N+1 distinct values, so this is much cheaper
    than drawing indices and has the same distribution.
    """
    v = np.asarray(values, float).ravel()
    if v.size == 0:
        raise ValueError("bootstrap needs at least one value")
    if M < 2:
        raise ValueError("bootstrap needs M >= 2")
    uniq, freq = np.unique(v, return_counts=True)
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(v.size, freq / v.size, size=M)
    means = counts @ uniq / v.size
    return BootstrapEstimate(float(means.mean()), float(means.std()), M, means)


def normality_diagnostics(estimate: BootstrapEstimate) -> tuple[float, float, bool]:
    """Skewness, excess kurtosis and a pass flag for the resample means."""
    m = estimate.means
    if np.ptp(m) == 0:
        return 0.0, -3.0, False
    skew = float(sps.skew(m))
    kurt = float(sps.kurtosis(m, fisher=True))
    return skew, kurt, abs(skew) < SKEW_LIMIT and abs(kurt) < KURT_LIMIT


def write_estimate(path: str | Path, est: BootstrapEstimate, n: int, s: float, R: int) -> None:
    Path(path).write_text(json.dumps(est.to_dict(n=n, s=s, R=R), indent=1))


def write_histogram(path: str | Path, dist: EmpiricalDistribution) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_left", "bin_right", "count"])
        for lo, hi, c in zip(dist.edges[:-1], dist.edges[1:], dist.counts):
            w.writerow([f"{lo:.6g}", f"{hi:.6g}", int(c)])
