"""Local unitary folding, decay fits and linear zero-noise extrapolation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .circuit import Circuit, gate_inverse

SNR_MIN = 2.0
RESOLUTION_REASON = "below statistical resolution"


class FitError(ValueError):
    """Too few usable points; ``excluded`` lists what was dropped and why."""

    def __init__(self, msg, excluded=()):
        super().__init__(msg)
        self.excluded = list(excluded)


# ---------------------------------------------------------------- folding


@dataclass(frozen=True)
class FoldPlan:
    target_scale: float
    folded_gate_indices: tuple[int, ...]
    achieved_scale: float


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def fold_circuit(circuit: Circuit, s: float, seed: int) -> tuple[Circuit, FoldPlan]:
    """Replace k = round((s-1) G / 2) randomly chosen gates g by g g^-1 g.

    Gates are drawn without replacement; beyond s = 3 every gate is folded
    once per full round and the remainder is drawn at random.
    """
    if s < 1:
        raise ValueError(f"noise scale must be >= 1, got {s}")
    G = len(circuit.gates)
    k = _round_half_up((s - 1) * G / 2) if G else 0
    rounds, rest = divmod(k, G) if G else (0, 0)
    rng = np.random.default_rng(seed)
    times = np.full(G, rounds, dtype=int)
    chosen = np.sort(rng.choice(G, size=rest, replace=False)) if rest else np.zeros(0, int)
    times[chosen] += 1
    gates = []
    for g, t in zip(circuit.gates, times):
        gates.append(g)
        inv = gate_inverse(g)
        for _ in range(t):
            gates += [*inv, g]
    folded = tuple(int(i) for i in np.repeat(np.arange(G), times))
    achieved = (G + 2 * k) / G if G else 1.0
    return circuit.with_gates(gates), FoldPlan(float(s), folded, achieved)


# ---------------------------------------------------------------- decay fit


@dataclass(frozen=True)
class DecayFit:
    amplitude: float
    d_amplitude: float
    rate: float
    d_rate: float
    window: tuple[int, ...]
    excluded: tuple[tuple[int, str], ...] = ()

    def curve(self, n) -> np.ndarray:
        return self.amplitude * np.exp(-self.rate * np.asarray(n, float))


def _wls(A: np.ndarray, y: np.ndarray, w: np.ndarray, absolute: bool):
    Aw = A * w[:, None]
    cov = np.linalg.inv(A.T @ Aw)
    beta = cov @ (Aw.T @ y)
    resid = y - A @ beta
    dof = len(y) - A.shape[1]
    if not absolute and dof > 0:
        cov = cov * float(resid @ (w * resid)) / dof
    return beta, cov, resid


class ExponentialDecayRegressor(RegressorMixin, BaseEstimator):
    """Fit |y| = C exp(-rate * n) by weighted least squares in log space.

    Each point is weighted by (|y| / sigma)^2, the inverse variance of
    ln|y|. Points with |y| < min_snr * sigma are excluded. With
    ``absolute_sigma`` off the covariance is rescaled by the reduced
    chi-square, which suits noiseless data given with a nominal sigma.
    """

    def __init__(self, min_snr: float = SNR_MIN, absolute_sigma: bool = True):
        self.min_snr = min_snr
        self.absolute_sigma = absolute_sigma

    def fit(self, X, y, sigma=None):
        if np.asarray(y).size == 0:
            raise FitError("no points to fit")
        X, y = check_X_y(X, y, ensure_min_samples=1, y_numeric=True)
        n = X[:, 0]
        sigma = np.ones_like(y) if sigma is None else np.broadcast_to(np.asarray(sigma, float), y.shape)
        if np.any(sigma <= 0):
            raise ValueError("sigma must be positive")
        keep = np.abs(y) >= self.min_snr * sigma
        excluded = [(int(k), RESOLUTION_REASON) for k in n[~keep]]
        if keep.sum() < 3:
            raise FitError(f"need >= 3 usable points, have {int(keep.sum())}", excluded)
        yk = np.abs(y[keep])
        A = np.column_stack([np.ones(keep.sum()), -n[keep]])
        beta, cov, _ = _wls(A, np.log(yk), (yk / sigma[keep]) ** 2, self.absolute_sigma)
        self.amplitude_ = float(np.exp(beta[0]))
        self.amplitude_err_ = float(self.amplitude_ * math.sqrt(cov[0, 0]))
        self.rate_ = float(beta[1])
        self.rate_err_ = float(math.sqrt(cov[1, 1]))
        self.window_ = tuple(int(k) for k in n[keep])
        self.excluded_ = tuple(excluded)
        return self

    def predict(self, X):
        check_is_fitted(self, "rate_")
        X = check_array(X)
        return self.amplitude_ * np.exp(-self.rate_ * X[:, 0])

    def result(self) -> DecayFit:
        check_is_fitted(self, "rate_")
        return DecayFit(self.amplitude_, self.amplitude_err_, self.rate_, self.rate_err_,
                        self.window_, self.excluded_)


def fit_exponential_wls(points: Iterable[tuple[float, float, float]],
                        absolute_sigma: bool = True) -> DecayFit:
    pts = np.asarray(list(points), float).reshape(-1, 3)
    reg = ExponentialDecayRegressor(absolute_sigma=absolute_sigma)
    return reg.fit(pts[:, :1], pts[:, 1], sigma=pts[:, 2]).result()


# ---------------------------------------------------------------- ZNE


@dataclass(frozen=True)
class ZneResult:
    slope: float
    slope_err: float
    intercept: float
    dintercept: float
    intercept_se: float
    extrapolated_sigma: float
    r2: float
    per_scale: tuple = field(default=())

    def at(self, s: float) -> float:
        return self.intercept + self.slope * s


class LinearZNERegressor(RegressorMixin, BaseEstimator):
    """Weighted straight-line fit Gamma(s) = slope * s + intercept.

    Weights are 1/dGamma^2. ``dintercept_`` is the larger of the intercept
    standard error and the per-scale uncertainty extrapolated linearly to
    s = 0.
    """

    def __init__(self, absolute_sigma: bool = True):
        self.absolute_sigma = absolute_sigma

    def fit(self, X, y, sigma=None):
        X, y = check_X_y(X, y, ensure_min_samples=2, y_numeric=True)
        s = X[:, 0]
        if np.unique(s).size < 2:
            raise ValueError("need at least two distinct noise scales")
        sigma = np.ones_like(y) if sigma is None else np.broadcast_to(np.asarray(sigma, float), y.shape)
        if np.any(sigma <= 0):
            raise ValueError("sigma must be positive")
        w = 1.0 / sigma**2
        A = np.column_stack([s, np.ones_like(s)])
        beta, cov, resid = _wls(A, y, w, self.absolute_sigma)
        self.slope_, self.intercept_ = float(beta[0]), float(beta[1])
        self.slope_err_ = float(math.sqrt(cov[0, 0]))
        self.intercept_se_ = float(math.sqrt(cov[1, 1]))
        ds = np.polyfit(s, sigma, 1) if np.unique(s).size > 1 else (0.0, sigma[0])
        self.extrapolated_sigma_ = float(max(np.polyval(ds, 0.0), 0.0))
        self.dintercept_ = max(self.intercept_se_, self.extrapolated_sigma_)
        ybar = np.average(y, weights=w)
        ss_tot = float(w @ (y - ybar) ** 2)
        self.r2_ = 1.0 - float(w @ resid**2) / ss_tot if ss_tot > 0 else 1.0
        return self

    def predict(self, X):
        check_is_fitted(self, "slope_")
        X = check_array(X)
        return self.slope_ * X[:, 0] + self.intercept_


def fit_linear_zne(per_scale: Sequence) -> ZneResult:
    """``per_scale`` holds (s, DecayFit) or (s, Gamma, dGamma) entries."""
    rows = []
    for entry in per_scale:
        if len(entry) == 2:
            s, fit = entry
            rows.append((s, fit.rate, fit.d_rate))
        else:
            rows.append(tuple(entry))
    if len(rows) < 2:
        raise ValueError("ZNE needs at least two noise scales")
    a = np.asarray(rows, float)
    reg = LinearZNERegressor().fit(a[:, :1], a[:, 1], sigma=a[:, 2])
    return ZneResult(reg.slope_, reg.slope_err_, reg.intercept_, reg.dintercept_,
                     reg.intercept_se_, reg.extrapolated_sigma_, reg.r2_, tuple(per_scale))


# ---------------------------------------------------------------- mitigated curve


@dataclass(frozen=True)
class MitigatedPoint:
    n: int
    value: float
    lo: float
    hi: float


def mitigate_curve(raw: Iterable[tuple[int, float]], fit1: DecayFit,
                   zne: ZneResult) -> list[MitigatedPoint]:
    """Rescale raw m_z(n) by exp((Gamma_1 - Gamma_0) n) / C_m.

    The band is (-1)^n exp(-(Gamma_0 +- dGamma_0) n), ordered so lo <= hi.
    """
    g1, g0, d0 = fit1.rate, zne.intercept, zne.dintercept
    out = []
    for n, m in raw:
        value = m * math.exp((g1 - g0) * n) / fit1.amplitude
        sign = -1.0 if int(n) % 2 else 1.0
        a, b = sign * math.exp(-(g0 + d0) * n), sign * math.exp(-(g0 - d0) * n)
        out.append(MitigatedPoint(int(n), value, min(a, b), max(a, b)))
    return out


def resolution_bound(gamma: float, shots: int) -> float:
    """Step count n* = ln(shots) / (2 gamma) beyond which |m_z| drowns in shot noise."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if shots < 1:
        raise ValueError("shots must be >= 1")
    return math.log(shots) / (2.0 * gamma)


def zne_report(fits: Sequence[tuple[float, DecayFit]], zne: ZneResult,
               mitigated: Sequence[MitigatedPoint]) -> dict:
    return {
        "scales": [{"s": s, "gamma": f.rate, "dgamma": f.d_rate,
                    "excluded": [n for n, _ in f.excluded]} for s, f in fits],
        "slope": zne.slope, "dslope": zne.slope_err, "intercept": zne.intercept,
        "dintercept": zne.dintercept, "r2": zne.r2,
        "mitigated": [{"n": p.n, "value": p.value, "lo": p.lo, "hi": p.hi} for p in mitigated],
    }
