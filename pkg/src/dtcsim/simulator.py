"""Statevector simulation with Monte Carlo noise trajectories.

Noise per trajectory:

* after a one-qubit gate, a random X/Y/Z with total probability p1;
* after a CNOT, one of the 15 non-identity two-qubit Paulis with probability p2;
* after each ASAP layer, amplitude damping on every qubit with probability
  1 - exp(-dt/T1), sampled from the two-outcome Kraus decomposition;
* at readout, each bit flips independently with probability p_m.

A circuit is lowered to flat op arrays (a "program") and run by compiled
kernels. A shot plan strings programs together so that one trajectory can
be branched off and measured after every Floquet step.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numba as nb
import numpy as np

from .circuit import Circuit, Gate, apply_dense, schedule_layers
from .noise import NoiseModel
from .rng import stream_base_nb, uniform_nb

SIM_CAP = 14
EXACT_CAP = 14

OP_ID, OP_X, OP_SX, OP_RZ, OP_CNOT, OP_DAMP = 0, 1, 2, 3, 4, 5
_OPCODE = {"ID": OP_ID, "X": OP_X, "SX": OP_SX, "RZ": OP_RZ, "CNOT": OP_CNOT}

# counter slots reserved per op, and the key used for the measurement draws
STRIDE = 40
MEASURE_KEY = 1 << 36

PLAN_APPLY, PLAN_BRANCH, PLAN_MEASURE, PLAN_RESET = 0, 1, 2, 3


# ---------------------------------------------------------------- exact path


@dataclass
class StateVector:
    amplitudes: np.ndarray

    @property
    def num_qubits(self) -> int:
        return int(self.amplitudes.size).bit_length() - 1

    @classmethod
    def zero(cls, num_qubits: int) -> "StateVector":
        a = np.zeros(1 << num_qubits, complex)
        a[0] = 1.0
        return cls(a)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def expectation_z(self) -> np.ndarray:
        return z_expectations(self.amplitudes)


def z_expectations(amplitudes: np.ndarray) -> np.ndarray:
    p = np.abs(amplitudes) ** 2
    n = int(p.size).bit_length() - 1
    idx = np.arange(p.size)
    return np.array([p @ (1 - 2 * ((idx >> q) & 1)) for q in range(n)])


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    return StateVector(apply_dense(state.amplitudes, gate, state.num_qubits))


def apply_circuit(state: StateVector, circuit: Circuit) -> StateVector:
    a = state.amplitudes
    for g in circuit.gates:
        a = apply_dense(a, g, circuit.num_qubits)
    return StateVector(a)


def exact_expectation_z(circuit: Circuit, repeats: int, cap: int = EXACT_CAP) -> np.ndarray:
    """Noiseless <Z_i> after applying ``circuit`` ``repeats`` times to |0...0>."""
    return exact_z_series(circuit, repeats, cap)[repeats]


def exact_z_series(circuit: Circuit, nmax: int, cap: int = EXACT_CAP) -> np.ndarray:
    """Rows n = 0..nmax of noiseless <Z_i>."""
    if circuit.num_qubits > cap:
        raise ValueError(f"exact simulation limited to {cap} qubits")
    state = StateVector.zero(circuit.num_qubits)
    rows = [state.expectation_z()]
    for _ in range(nmax):
        state = apply_circuit(state, circuit)
        rows.append(state.expectation_z())
    return np.array(rows)


# ---------------------------------------------------------------- programs


@dataclass
class Program:
    """Flat op arrays for one circuit plus damping tables."""

    num_qubits: int
    op: np.ndarray
    q0: np.ndarray
    q1: np.ndarray
    angle: np.ndarray
    perr: np.ndarray
    key: np.ndarray
    damp_dt: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.op)


def compile_program(circuit: Circuit, model: NoiseModel, idle_ns: float = 0.0) -> Program:
    """Lower ``circuit`` in ASAP layer order with a damping op after each layer.

    ``idle_ns`` appends one more damping window (e.g. a readout slot). Ops keep
    their original gate index as RNG key; damping ops use keys after the gates.
    """
    N = circuit.num_qubits
    damp = math.isfinite(model.T1) or any(math.isfinite(model.qubit_T1(q)) for q in range(N))
    rows: list[tuple] = []
    dts: list[float] = []
    G = len(circuit.gates)
    for li, layer in enumerate(schedule_layers(circuit).layers):
        dt = 0.0
        for i in layer:
            g = circuit.gates[i]
            if g.kind == "CNOT":
                rows.append((OP_CNOT, g.qubits[0], g.qubits[1], 0.0, model.p2, i))
                dt = max(dt, model.tau_2q)
            else:
                q = g.qubits[0]
                p = 0.0 if g.kind == "ID" else model.qubit_p1(q)
                rows.append((_OPCODE[g.kind], q, -1, g.angle or 0.0, p, i))
                dt = max(dt, model.tau_1q)
        if damp and dt > 0:
            rows.append((OP_DAMP, -1, -1, dt, 0.0, G + li))
            dts.append(dt)
    if damp and idle_ns > 0:
        rows.append((OP_DAMP, -1, -1, idle_ns, 0.0, G + len(rows)))
        dts.append(idle_ns)
    if rows:
        op, q0, q1, ang, perr, key = map(np.array, zip(*rows))
    else:
        op = q0 = q1 = key = np.zeros(0, np.int64)
        ang = perr = np.zeros(0)
    return Program(N, op.astype(np.int8), q0.astype(np.int32), q1.astype(np.int32),
                   ang.astype(np.float64), perr.astype(np.float64), key.astype(np.int64), dts)


@dataclass
class Bundle:
    """Several programs concatenated, with shared damping tables."""

    num_qubits: int
    op: np.ndarray
    q0: np.ndarray
    q1: np.ndarray
    angle: np.ndarray
    perr: np.ndarray
    key: np.ndarray
    seg_start: np.ndarray
    seg_stop: np.ndarray
    sqrt_w: np.ndarray
    weights: np.ndarray
    gam: np.ndarray


def bundle(programs: Sequence[Program], model: NoiseModel) -> Bundle:
    N = programs[0].num_qubits
    dts = sorted({dt for p in programs for dt in p.damp_dt})
    table = {dt: k for k, dt in enumerate(dts)}
    gam = np.array([[model.damping(q, dt) for q in range(N)] for dt in dts]).reshape(len(dts), N)
    idx = np.arange(1 << N)
    bits = ((idx[None, :] >> np.arange(N)[:, None]) & 1).astype(float)
    with np.errstate(divide="ignore"):
        logw = np.log1p(-gam) @ bits if len(dts) else np.zeros((0, 1 << N))
    weights = np.exp(logw)
    angle = []
    for p in programs:
        a = p.angle.copy()
        d = p.op == OP_DAMP
        a[d] = [table[v] for v in a[d]]
        angle.append(a)
    cat = lambda name: np.concatenate([getattr(p, name) for p in programs])
    lens = np.array([len(p) for p in programs])
    stop = np.cumsum(lens)
    return Bundle(N, cat("op"), cat("q0"), cat("q1"), np.concatenate(angle), cat("perr"), cat("key"),
                  stop - lens, stop, np.sqrt(weights), weights, gam)


# ---------------------------------------------------------------- kernels


@nb.njit(cache=True, nogil=True)
def _apply_1q(psi, q, u00, u01, u10, u11):
    step = 1 << q
    dim = psi.size
    for blk in range(0, dim, 2 * step):
        for k in range(blk, blk + step):
            a = psi[k]
            b = psi[k + step]
            psi[k] = u00 * a + u01 * b
            psi[k + step] = u10 * a + u11 * b


@nb.njit(cache=True, nogil=True)
def _apply_cnot(psi, c, t):
    mc = 1 << c
    mt = 1 << t
    for i in range(psi.size):
        if (i & mc) and not (i & mt):
            j = i | mt
            tmp = psi[i]
            psi[i] = psi[j]
            psi[j] = tmp


@nb.njit(cache=True, nogil=True)
def _apply_pauli(psi, q, kind):
    # kind: 1 = X, 2 = Y, 3 = Z
    if kind == 1:
        _apply_1q(psi, q, 0j, 1 + 0j, 1 + 0j, 0j)
    elif kind == 2:
        _apply_1q(psi, q, 0j, -1j, 1j, 0j)
    elif kind == 3:
        _apply_1q(psi, q, 1 + 0j, 0j, 0j, -1 + 0j)


@nb.njit(cache=True, nogil=True)
def _apply_gate_nb(psi, op, q0, q1, ang):
    if op == OP_X:
        _apply_1q(psi, q0, 0j, 1 + 0j, 1 + 0j, 0j)
    elif op == OP_SX:
        _apply_1q(psi, q0, 0.5 + 0.5j, 0.5 - 0.5j, 0.5 - 0.5j, 0.5 + 0.5j)
    elif op == OP_RZ:
        h = 0.5 * ang
        _apply_1q(psi, q0, complex(math.cos(h), -math.sin(h)), 0j, 0j,
                  complex(math.cos(h), math.sin(h)))
    elif op == OP_CNOT:
        _apply_cnot(psi, q0, q1)


@nb.njit(cache=True, nogil=True)
def _renormalize(psi):
    s = 0.0
    for i in range(psi.size):
        s += psi[i].real ** 2 + psi[i].imag ** 2
    f = 1.0 / math.sqrt(s)
    for i in range(psi.size):
        psi[i] *= f


@nb.njit(cache=True, nogil=True)
def _damp(psi, t, sqrt_w, weights, gam, base, key):
    n = gam.shape[1]
    p0 = 0.0
    for i in range(psi.size):
        p0 += (psi[i].real ** 2 + psi[i].imag ** 2) * weights[t, i]
    u = uniform_nb(base, key * STRIDE)
    if u < p0:
        f = 1.0 / math.sqrt(p0)
        for i in range(psi.size):
            psi[i] *= sqrt_w[t, i] * f
        return
    # at least one qubit relaxes: sample qubit by qubit, conditioning on that
    need = True
    for q in range(n):
        g = gam[t, q]
        if g == 0.0:
            continue
        m = 1 << q
        p1 = 0.0
        for i in range(psi.size):
            if i & m:
                p1 += psi[i].real ** 2 + psi[i].imag ** 2
        pj = g * p1
        if need:
            zq = 0.0
            for i in range(psi.size):
                w = 1.0
                for k in range(q, n):
                    if (i >> k) & 1:
                        w *= 1.0 - gam[t, k]
                zq += (psi[i].real ** 2 + psi[i].imag ** 2) * w
            prob = pj / (1.0 - zq) if zq < 1.0 else 1.0
        else:
            prob = pj
        if uniform_nb(base, key * STRIDE + 1 + q) < prob:
            for i in range(psi.size):
                if i & m:
                    psi[i ^ m] = psi[i]
                    psi[i] = 0j
            need = False
        else:
            s = math.sqrt(1.0 - g)
            for i in range(psi.size):
                if i & m:
                    psi[i] *= s
        _renormalize(psi)


@nb.njit(cache=True, nogil=True)
def _run_segment(psi, lo, hi, op, q0, q1, ang, perr, key, sqrt_w, weights, gam, base):
    for i in range(lo, hi):
        o = op[i]
        if o == OP_DAMP:
            _damp(psi, int(ang[i]), sqrt_w, weights, gam, base, key[i])
            continue
        _apply_gate_nb(psi, o, q0[i], q1[i], ang[i])
        p = perr[i]
        if p > 0.0 and uniform_nb(base, key[i] * STRIDE) < p:
            u = uniform_nb(base, key[i] * STRIDE + 1)
            if o == OP_CNOT:
                k = 1 + int(u * 15.0)
                if k > 15:
                    k = 15
                _apply_pauli(psi, q0[i], k % 4)
                _apply_pauli(psi, q1[i], k // 4)
            else:
                k = 1 + int(u * 3.0)
                if k > 3:
                    k = 3
                _apply_pauli(psi, q0[i], k)


@nb.njit(cache=True, nogil=True)
def _measure(psi, pm, base, out):
    u = uniform_nb(base, MEASURE_KEY * STRIDE)
    acc = 0.0
    pick = -1
    last = 0
    for i in range(psi.size):
        pr = psi[i].real ** 2 + psi[i].imag ** 2
        if pr > 0.0:
            last = i
        acc += pr
        if u < acc:
            pick = i
            break
    if pick < 0:
        pick = last
    for q in range(out.size):
        b = (pick >> q) & 1
        if uniform_nb(base, MEASURE_KEY * STRIDE + 1 + q) < pm[q]:
            b ^= 1
        out[q] = b


@nb.njit(cache=True, nogil=True)
def run_plan(n, op, q0, q1, ang, perr, key, seg_start, seg_stop, sqrt_w, weights, gam,
             plan_kind, plan_seg, plan_row, pm, seed, shot_lo, shot_hi, out):
    """Execute the shot plan for shots [shot_lo, shot_hi) into ``out[row, shot]``."""
    dim = 1 << n
    main = np.zeros(dim, np.complex128)
    work = np.zeros(dim, np.complex128)
    for shot in range(shot_lo, shot_hi):
        main[:] = 0j
        main[0] = 1.0
        for e in range(plan_kind.size):
            base = stream_base_nb(seed, np.uint64(e), np.uint64(shot))
            kind = plan_kind[e]
            s = plan_seg[e]
            if kind == PLAN_RESET:
                main[:] = 0j
                main[0] = 1.0
            elif kind == PLAN_APPLY:
                _run_segment(main, seg_start[s], seg_stop[s], op, q0, q1, ang, perr, key,
                             sqrt_w, weights, gam, base)
            elif kind == PLAN_BRANCH:
                work[:] = main
                if s >= 0:
                    _run_segment(work, seg_start[s], seg_stop[s], op, q0, q1, ang, perr, key,
                                 sqrt_w, weights, gam, base)
                _measure(work, pm, base, out[plan_row[e], shot])
            else:
                _measure(main, pm, base, out[plan_row[e], shot])


def execute_plan(bun: Bundle, plan: Sequence[tuple[int, int, int]], pm: np.ndarray, seed: int,
                 shots: int, rows: int, workers: int = 1, chunk: int = 256) -> np.ndarray:
    """Run a shot plan; returns bits shaped (rows, shots, N).

    Shots are split into chunks that may run on a thread pool (the kernels
    release the GIL). Each chunk writes its own slice, so the result does not
    depend on ``workers``.
    """
    kinds, segs, prow = (np.array(c, dtype=np.int64) for c in zip(*plan))
    out = np.zeros((rows, shots, bun.num_qubits), np.uint8)
    seed64 = np.uint64(seed % (1 << 64))
    args = (bun.num_qubits, bun.op, bun.q0, bun.q1, bun.angle, bun.perr, bun.key,
            bun.seg_start, bun.seg_stop, bun.sqrt_w, bun.weights, bun.gam,
            kinds, segs, prow, np.asarray(pm, float), seed64)
    bounds = [(lo, min(lo + chunk, shots)) for lo in range(0, shots, chunk)]
    if workers <= 1:
        for lo, hi in bounds:
            run_plan(*args, lo, hi, out)
    else:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(lambda b: run_plan(*args, b[0], b[1], out), bounds))
    return out


# ---------------------------------------------------------------- public API


def readout_vector(model: NoiseModel, n: int) -> np.ndarray:
    return np.array([model.qubit_pm(q) for q in range(n)])


def run_trajectory(circuit: Circuit, model: NoiseModel, seed: int, shot: int = 0) -> StateVector:
    """Final state of one noisy trajectory (no readout)."""
    if circuit.num_qubits > SIM_CAP:
        raise ValueError(f"trajectory simulation limited to {SIM_CAP} qubits")
    prog = compile_program(circuit, model)
    b = bundle([prog], model)
    psi = np.zeros(1 << circuit.num_qubits, complex)
    psi[0] = 1.0
    base = np.uint64(stream_base_nb(np.uint64(seed % (1 << 64)), np.uint64(0), np.uint64(shot)))
    _run_segment(psi, 0, len(prog), b.op, b.q0, b.q1, b.angle, b.perr, b.key,
                 b.sqrt_w, b.weights, b.gam, base)
    return StateVector(psi)


def trajectory_states(circuit: Circuit, model: NoiseModel, seed: int, shots: int) -> np.ndarray:
    """Final states of ``shots`` independent trajectories, shape (shots, 2**N)."""
    prog = compile_program(circuit, model)
    b = bundle([prog], model)
    out = np.zeros((shots, 1 << circuit.num_qubits), complex)
    seed64 = np.uint64(seed % (1 << 64))
    for shot in range(shots):
        psi = out[shot]
        psi[0] = 1.0
        base = np.uint64(stream_base_nb(seed64, np.uint64(0), np.uint64(shot)))
        _run_segment(psi, 0, len(prog), b.op, b.q0, b.q1, b.angle, b.perr, b.key,
                     b.sqrt_w, b.weights, b.gam, base)
    return out


@dataclass
class ShotTable:
    """Measured bitstrings (one row per shot, column q = qubit q) plus provenance."""

    bits: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def shots(self) -> int:
        return int(self.bits.shape[0])

    @property
    def num_qubits(self) -> int:
        return int(self.bits.shape[1])

    def magnetizations(self) -> np.ndarray:
        return 1.0 - 2.0 * self.bits.mean(axis=1)

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        header = ",".join(f"q{q}" for q in range(self.num_qubits))
        np.savetxt(path, self.bits, fmt="%d", delimiter=",", header=header, comments="")
        path.with_suffix(".json").write_text(json.dumps(self.meta, indent=1, default=_jsonable))
        return path

    @classmethod
    def from_csv(cls, path: str | Path) -> "ShotTable":
        path = Path(path)
        bits = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.uint8, ndmin=2)
        side = path.with_suffix(".json")
        meta = json.loads(side.read_text()) if side.exists() else {}
        return cls(bits, meta)


def _jsonable(o):
    if hasattr(o, "to_dict"):
        return o.to_dict()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


def sample_shots(circuit: Circuit, model: NoiseModel, shots: int, seed: int,
                 relabel=None, workers: int = 1, meta: dict | None = None) -> ShotTable:
    """Fresh noisy trajectory per shot, measured in Z with readout flips."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if circuit.num_qubits > SIM_CAP:
        raise ValueError(f"trajectory simulation limited to {SIM_CAP} qubits")
    b = bundle([compile_program(circuit, model)], model)
    bits = execute_plan(b, [(PLAN_APPLY, 0, 0), (PLAN_MEASURE, -1, 0)],
                        readout_vector(model, circuit.num_qubits), seed, shots, 1, workers)[0]
    if relabel is not None:
        bits = relabel.apply_bits(bits)
    info = {"seed": int(seed), "shots": int(shots), "noise": model.to_dict(),
            "relabel": None if relabel is None else relabel.to_list()}
    info.update(meta or {})
    return ShotTable(np.ascontiguousarray(bits), info)
