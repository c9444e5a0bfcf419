"""Noise parameters, error channels and analytic decay-rate predictors.

Durations are kept in the units of the calibration data (T1 and readout in
microseconds, gate lengths in nanoseconds) and converted to nanoseconds
internally.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .circuit import Circuit, GateCounts, single_qubit_matrix


@dataclass(frozen=True)
class QubitOverride:
    T1: float | None = None
    p1: float | None = None
    p_m: float | None = None


@dataclass(frozen=True)
class NoiseModel:
    """Depolarizing gates, T1 relaxation and symmetric readout flips.

    Defaults are the calibration of a single qubit of a 27-qubit superconducting
    device; ``p2`` and ``tau_2q`` are typical CNOT values.
    """

    p1: float = 2.23e-4
    p2: float = 1e-2
    p_m: float = 0.0069
    T1: float = 139.25  # us
    tau_1q: float = 35.56  # ns
    tau_2q: float = 300.0  # ns
    tau_m: float = 3.55  # us
    per_qubit_overrides: dict[int, QubitOverride] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        checks = [(self.p1, 0.75, "p1"), (self.p2, 15 / 16, "p2"), (self.p_m, 1.0, "p_m")]
        for o in self.per_qubit_overrides.values():
            checks += [(v, cap, n) for v, cap, n in ((o.p1, 0.75, "p1"), (o.p_m, 1.0, "p_m"))
                       if v is not None]
            if o.T1 is not None and not o.T1 > 0:
                raise ValueError("override T1 must be positive")
        for value, cap, name in checks:
            if not 0.0 <= value <= cap:
                raise ValueError(f"{name}={value} outside [0, {cap}]")
        if not self.T1 > 0:
            raise ValueError("T1 must be positive (use inf to disable relaxation)")
        if min(self.tau_1q, self.tau_2q, self.tau_m) < 0:
            raise ValueError("durations must be non-negative")

    @classmethod
    def noiseless(cls) -> "NoiseModel":
        return cls(p1=0.0, p2=0.0, p_m=0.0, T1=math.inf)

    def replace(self, **kw) -> "NoiseModel":
        return replace(self, **kw)

    @property
    def is_noiseless(self) -> bool:
        over = any(o.p1 or o.p_m or (o.T1 is not None and math.isfinite(o.T1))
                   for o in self.per_qubit_overrides.values())
        return not (self.p1 or self.p2 or self.p_m or math.isfinite(self.T1) or over)

    def qubit_T1(self, q: int) -> float:
        o = self.per_qubit_overrides.get(q)
        return self.T1 if o is None or o.T1 is None else o.T1

    def qubit_p1(self, q: int) -> float:
        o = self.per_qubit_overrides.get(q)
        return self.p1 if o is None or o.p1 is None else o.p1

    def qubit_pm(self, q: int) -> float:
        o = self.per_qubit_overrides.get(q)
        return self.p_m if o is None or o.p_m is None else o.p_m

    def damping(self, q: int, dt_ns: float) -> float:
        """Relaxation probability 1 - exp(-dt/T1) over ``dt_ns`` nanoseconds."""
        return -math.expm1(-dt_ns / (1e3 * self.qubit_T1(q)))

    def to_dict(self) -> dict:
        d = {"p1": self.p1, "p2": self.p2, "p_m": self.p_m, "T1_us": self.T1,
             "tau_1q_ns": self.tau_1q, "tau_2q_ns": self.tau_2q, "tau_m_us": self.tau_m}
        if self.per_qubit_overrides:
            d["overrides"] = {str(q): {k: v for k, v in (("T1_us", o.T1), ("p1", o.p1), ("p_m", o.p_m))
                                       if v is not None}
                              for q, o in sorted(self.per_qubit_overrides.items())}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModel":
        over = {int(q): QubitOverride(o.get("T1_us"), o.get("p1"), o.get("p_m"))
                for q, o in (d.get("overrides") or {}).items()}
        base = cls()
        return cls(p1=d.get("p1", base.p1), p2=d.get("p2", base.p2), p_m=d.get("p_m", base.p_m),
                   T1=d.get("T1_us", base.T1), tau_1q=d.get("tau_1q_ns", base.tau_1q),
                   tau_2q=d.get("tau_2q_ns", base.tau_2q), tau_m=d.get("tau_m_us", base.tau_m),
                   per_qubit_overrides=over)

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def load(cls, path: str | Path) -> "NoiseModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class DecayPrediction:
    gamma_dep: float
    tau_R: float  # ns
    gamma_noise: float
    Gamma_s: float
    C_m: float


def _log_eigs(model: NoiseModel) -> tuple[float, float]:
    a2, a1 = 1 - 16 * model.p2 / 15, 1 - 4 * model.p1 / 3
    if a2 <= 0 or a1 <= 0:
        raise ValueError("complete depolarization: channel eigenvalue is not positive")
    return math.log(a2), math.log(a1)


def predict_gamma_dep(counts: GateCounts, model: NoiseModel) -> float:
    l2, l1 = _log_eigs(model)
    return -(counts.two_qubit_longest_path * l2 + counts.one_qubit_longest_path * l1)


def predict_tau(counts: GateCounts, model: NoiseModel) -> float:
    """Wall time of one step in ns, including one readout window."""
    return (counts.one_qubit_longest_path * model.tau_1q
            + counts.two_qubit_longest_path * model.tau_2q + 1e3 * model.tau_m)


def predict_gamma_noise(counts: GateCounts, model: NoiseModel) -> float:
    return predict_gamma_dep(counts, model) + predict_tau(counts, model) / (1e3 * model.T1)


def predict_Gamma(s: float, gamma_eps: float, counts: GateCounts, model: NoiseModel) -> float:
    if s < 0:
        raise ValueError("noise scale must be non-negative")
    return s * predict_gamma_noise(counts, model) + gamma_eps


def gamma_epsilon_theory(epsilon: float, R: int) -> float:
    if abs(epsilon) >= 1:
        raise ValueError("small-epsilon estimate needs |epsilon| < 1")
    return abs(epsilon) ** (2 * R + 1)


def readout_prefactor(model: NoiseModel) -> float:
    return 1.0 - 2.0 * model.p_m


def predict(counts: GateCounts, model: NoiseModel, s: float = 1.0,
            gamma_eps: float = 0.0) -> DecayPrediction:
    gd = predict_gamma_dep(counts, model)
    tau = predict_tau(counts, model)
    gn = gd + tau / (1e3 * model.T1)
    return DecayPrediction(gd, tau, gn, s * gn + gamma_eps, readout_prefactor(model))


# ---------------------------------------------------------------- channels

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.diag([1.0 + 0j, -1.0]),
}


def pauli_string(labels: str) -> np.ndarray:
    """Dense Pauli product; ``labels[q]`` acts on qubit q (little-endian)."""
    m = np.array([[1.0 + 0j]])
    for c in labels:
        m = np.kron(PAULI[c], m)
    return m


def depolarizing_kraus(p: float, nqubits: int) -> list[np.ndarray]:
    """Kraus operators: identity w.p. 1-p, each non-identity Pauli w.p. p/(4^n-1)."""
    others = ["".join(t) for t in itertools.product("IXYZ", repeat=nqubits)][1:]
    ops = [math.sqrt(1 - p) * pauli_string("I" * nqubits)]
    ops += [math.sqrt(p / len(others)) * pauli_string(t) for t in others]
    return ops


def amplitude_damping_kraus(gamma: float) -> list[np.ndarray]:
    return [np.diag([1.0, math.sqrt(1 - gamma)]).astype(complex),
            np.array([[0, math.sqrt(gamma)], [0, 0]], dtype=complex)]


def superoperator(kraus: list[np.ndarray]) -> np.ndarray:
    """Row-stacking superoperator S with vec(E(rho)) = S vec(rho)."""
    return sum(np.kron(k, k.conj()) for k in kraus)


def apply_channel(rho: np.ndarray, kraus: list[np.ndarray]) -> np.ndarray:
    return sum(k @ rho @ k.conj().T for k in kraus)


def heisenberg_image(op: np.ndarray, kraus: list[np.ndarray]) -> np.ndarray:
    return sum(k.conj().T @ op @ k for k in kraus)


# ---------------------------------------------------------------- light cone

def _pauli_label(m: np.ndarray) -> tuple[str, complex] | None:
    """Identify a (signed) 2x2 Pauli; None if ``m`` is not one."""
    for k, p in PAULI.items():
        c = np.trace(p.conj().T @ m) / 2
        if abs(abs(c) - 1) < 1e-9 and np.allclose(m, c * p, atol=1e-9):
            return k, c
    return None


def light_cone_tallies(circuit: Circuit, qubit: int) -> tuple[int, int]:
    """Gates whose depolarizing error can reach a final Z measurement of ``qubit``.

    Z_qubit is propagated backwards through the circuit as a Pauli string; a
    gate counts when the string has support on its operands right after it.
    For a computational-basis input the ensemble value of <Z_qubit> is then
    scaled by (1 - 16 p2/15)^q2 (1 - 4 p1/3)^q1. Gates must map the current
    string to another Pauli string (Clifford action), except diagonal RZ
    acting where the string is I or Z.
    """
    n = circuit.num_qubits
    lab = ["I"] * n
    lab[qubit] = "Z"
    q2 = q1 = 0
    for g in reversed(circuit.gates):
        if any(lab[q] != "I" for q in g.qubits):
            if g.is_two_qubit:
                q2 += 1
            elif g.kind != "ID":
                q1 += 1
        if g.kind == "CNOT":
            c, t = g.qubits
            xc, zc = lab[c] in "XY", lab[c] in "ZY"
            xt, zt = lab[t] in "XY", lab[t] in "ZY"
            # conjugation by CNOT: X_c -> X_c X_t, Z_t -> Z_c Z_t
            xt ^= xc
            zc ^= zt
            lab[c] = "IXZY"[xc + 2 * zc]
            lab[t] = "IXZY"[xt + 2 * zt]
        elif g.kind == "RZ" and lab[g.qubits[0]] in "IZ":
            continue
        else:
            q = g.qubits[0]
            u = single_qubit_matrix(g)
            found = _pauli_label(u.conj().T @ PAULI[lab[q]] @ u)
            if found is None:
                raise ValueError(f"gate {g} is not Clifford on the propagated string")
            lab[q] = found[0]
    return q2, q1
