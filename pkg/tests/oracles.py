"""Independent reference implementations used only by the tests."""

import itertools
import math

import numpy as np
from scipy.linalg import expm

from dtcsim.circuit import schedule_layers

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0 + 0j, -1.0])
PAULIS = [I2, X, Y, Z]


def embed(op, qubits, n):
    """Dense operator acting on ``qubits`` (little-endian) of an n-qubit register."""
    k = len(qubits)
    dim = 1 << n
    out = np.zeros((dim, dim), dtype=complex)
    others = [q for q in range(n) if q not in qubits]
    for col in range(dim):
        sub = sum(((col >> q) & 1) << i for i, q in enumerate(qubits))
        rest = col & ~sum(1 << q for q in qubits)
        for row_sub in range(1 << k):
            amp = op[row_sub, sub]
            if amp == 0:
                continue
            row = rest | sum(((row_sub >> i) & 1) << q for i, q in enumerate(qubits))
            out[row, col] += amp
    return out


def zz_exp(theta, j, k, n):
    """exp(i theta Z_j Z_k) on n qubits."""
    idx = np.arange(1 << n)
    zj = 1 - 2 * ((idx >> j) & 1)
    zk = 1 - 2 * ((idx >> k) & 1)
    return np.diag(np.exp(1j * theta * zj * zk))


def rx_exp(angle):
    return expm(-0.5j * angle * X)


def gate_matrix(g, n):
    if g.kind == "CNOT":
        c, t = g.qubits
        m = np.zeros((4, 4))
        # local basis index = bit(c) + 2 bit(t)
        for b in range(4):
            bc, bt = b & 1, b >> 1
            m[bc | ((bt ^ bc) << 1), b] = 1
        return embed(m, [c, t], n)
    if g.kind == "RZ":
        return embed(np.diag([np.exp(-0.5j * g.angle), np.exp(0.5j * g.angle)]), [g.qubits[0]], n)
    if g.kind == "SX":
        return embed(0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]]), [g.qubits[0]], n)
    if g.kind == "X":
        return embed(X, [g.qubits[0]], n)
    return np.eye(1 << n)


def density_run(circuit, model, rho=None, idle_ns=0.0):
    """Exact channel evolution matching the trajectory noise model."""
    n = circuit.num_qubits
    if rho is None:
        rho = np.zeros((1 << n, 1 << n), complex)
        rho[0, 0] = 1
    paulis2 = [(a, b) for a in range(4) for b in range(4) if (a, b) != (0, 0)]
    for layer in schedule_layers(circuit).layers:
        dt = 0.0
        for i in layer:
            g = circuit.gates[i]
            U = gate_matrix(g, n)
            rho = U @ rho @ U.conj().T
            if g.kind == "CNOT":
                p = model.p2
                dt = max(dt, model.tau_2q)
                if p:
                    acc = (1 - p) * rho
                    for a, b in paulis2:
                        P = embed(np.kron(PAULIS[b], PAULIS[a]), list(g.qubits), n)
                        acc = acc + p / 15 * P @ rho @ P.conj().T
                    rho = acc
            else:
                dt = max(dt, model.tau_1q)
                p = 0.0 if g.kind == "ID" else model.p1
                if p:
                    acc = (1 - p) * rho
                    for P in PAULIS[1:]:
                        E = embed(P, [g.qubits[0]], n)
                        acc = acc + p / 3 * E @ rho @ E
                    rho = acc
        rho = damp_all(rho, model, dt, n)
    if idle_ns:
        rho = damp_all(rho, model, idle_ns, n)
    return rho


def damp_all(rho, model, dt, n):
    if not math.isfinite(model.T1) or dt == 0:
        return rho
    g = -math.expm1(-dt / (1e3 * model.T1))
    K0 = np.diag([1, math.sqrt(1 - g)]).astype(complex)
    K1 = np.array([[0, math.sqrt(g)], [0, 0]], dtype=complex)
    for q in range(n):
        A, B = embed(K0, [q], n), embed(K1, [q], n)
        rho = A @ rho @ A.conj().T + B @ rho @ B.conj().T
    return rho


def z_of_rho(rho):
    n = int(rho.shape[0]).bit_length() - 1
    p = np.real(np.diag(rho))
    idx = np.arange(p.size)
    return np.array([p @ (1 - 2 * ((idx >> q) & 1)) for q in range(n)])


def floquet_exact(N, couplings, eps, R, boundary="open"):
    """Dense U_F = K V built straight from the model definition."""
    dim = 1 << N
    V = np.eye(dim, dtype=complex)
    for r in range(1, R + 1):
        for j in range(N):
            k = j + r
            if k >= N:
                if boundary != "periodic":
                    continue
                k -= N
            V = zz_exp(couplings[r - 1], j, k, N) @ V
    K = np.eye(1, dtype=complex)
    for _ in range(N):
        K = np.kron(rx_exp(2 * (math.pi / 2 + eps)), K)
    return K @ V


def all_bitstrings(n):
    return list(itertools.product((0, 1), repeat=n))
