"""Native-gate circuit representation.

Gates are drawn from the hardware set {CNOT, RZ, SX, X, ID}. Qubit ``q``
corresponds to bit ``q`` of a basis-state index (little-endian), so the state
``|q1 q0>`` = ``|01>`` has index 1 and qubit 0 set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

KINDS = ("CNOT", "RZ", "SX", "X", "ID")
TOPOLOGIES = ("line", "ring")
UNITARY_CAP = 10


class CircuitError(ValueError):
    """Raised for malformed gates or circuits."""


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        arity = 2 if self.kind == "CNOT" else 1
        if len(self.qubits) != arity:
            raise CircuitError(f"{self.kind} takes {arity} qubit(s), got {self.qubits}")
        if self.kind == "CNOT" and self.qubits[0] == self.qubits[1]:
            raise CircuitError(f"CNOT operands must differ, got {self.qubits}")
        if self.kind == "RZ":
            if self.angle is None or not math.isfinite(self.angle):
                raise CircuitError(f"RZ needs a finite angle, got {self.angle}")
            object.__setattr__(self, "angle", float(self.angle))
        elif self.angle is not None:
            raise CircuitError(f"{self.kind} takes no angle")

    @property
    def is_two_qubit(self) -> bool:
        return self.kind == "CNOT"

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "qubits": list(self.qubits)}
        if self.angle is not None:
            d["angle"] = self.angle
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Gate":
        return cls(d["kind"], tuple(d["qubits"]), d.get("angle"))


def cnot(control: int, target: int) -> Gate:
    return Gate("CNOT", (control, target))


def rz(qubit: int, angle: float) -> Gate:
    return Gate("RZ", (qubit,), angle)


def sx(qubit: int) -> Gate:
    return Gate("SX", (qubit,))


def x(qubit: int) -> Gate:
    return Gate("X", (qubit,))


def idle(qubit: int) -> Gate:
    return Gate("ID", (qubit,))


@dataclass(frozen=True)
class Block:
    """Named contiguous gate range ``[start, stop)`` carried as metadata.

    ``data`` holds emitter-specific detail, e.g. ``(j, k, r, theta)`` for an
    Ising term between chain sites j and k.
    """

    name: str
    start: int
    stop: int
    data: tuple = ()


def adjacent(a: int, b: int, num_qubits: int, topology: str) -> bool:
    if abs(a - b) == 1:
        return True
    return topology == "ring" and num_qubits > 2 and {a, b} == {0, num_qubits - 1}


@dataclass(frozen=True)
class Circuit:
    """Immutable gate list in execution order."""

    num_qubits: int
    gates: tuple[Gate, ...] = ()
    label: str = ""
    topology: str = "line"
    blocks: tuple[Block, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.num_qubits < 1:
            raise CircuitError("num_qubits must be >= 1")
        if self.topology not in TOPOLOGIES:
            raise CircuitError(f"unknown topology {self.topology!r}")
        object.__setattr__(self, "gates", tuple(self.gates))
        object.__setattr__(self, "blocks", tuple(self.blocks))
        for i, g in enumerate(self.gates):
            self._check(g, i)

    def _check(self, g: Gate, index: int | None = None):
        for q in g.qubits:
            if not 0 <= q < self.num_qubits:
                where = "" if index is None else f" (gate {index})"
                raise CircuitError(f"qubit {q} out of range for {self.num_qubits} qubits{where}")
        if g.is_two_qubit and not adjacent(*g.qubits, self.num_qubits, self.topology):
            raise CircuitError(f"CNOT{g.qubits} is not a {self.topology} neighbor pair")

    def __len__(self):
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def with_gates(self, gates: Iterable[Gate], blocks: Sequence[Block] = ()) -> "Circuit":
        return replace(self, gates=tuple(gates), blocks=tuple(blocks))

    def to_dict(self) -> dict:
        return {"num_qubits": self.num_qubits, "gates": [g.to_dict() for g in self.gates]}

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, d: dict, topology: str = "line", label: str = "") -> "Circuit":
        return cls(int(d["num_qubits"]), tuple(Gate.from_dict(g) for g in d["gates"]),
                   label=label, topology=topology)

    @classmethod
    def from_json(cls, text: str, topology: str = "line") -> "Circuit":
        return cls.from_dict(json.loads(text), topology=topology)

    @classmethod
    def load(cls, path: str | Path, topology: str = "line") -> "Circuit":
        return cls.from_json(Path(path).read_text(), topology=topology)


@dataclass(frozen=True)
class LayerSchedule:
    layers: tuple[tuple[int, ...], ...]

    def __len__(self):
        return len(self.layers)


@dataclass(frozen=True)
class GateCounts:
    two_qubit_longest_path: int
    one_qubit_longest_path: int
    total_two_qubit: int
    total_one_qubit: int

    @property
    def path(self) -> tuple[int, int]:
        return self.two_qubit_longest_path, self.one_qubit_longest_path

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def append(circuit: Circuit, gate: Gate) -> Circuit:
    circuit._check(gate)
    return replace(circuit, gates=circuit.gates + (gate,))


def compose(first: Circuit, second: Circuit) -> Circuit:
    """Circuit applying ``first`` then ``second``."""
    if first.num_qubits != second.num_qubits:
        raise CircuitError("cannot compose circuits of different width")
    shift = len(first.gates)
    blocks = first.blocks + tuple(replace(b, start=b.start + shift, stop=b.stop + shift)
                                  for b in second.blocks)
    return replace(first, gates=first.gates + second.gates, blocks=blocks)


def gate_inverse(g: Gate) -> tuple[Gate, ...]:
    """Native gates realizing g^-1 up to global phase."""
    if g.kind == "RZ":
        return (rz(g.qubits[0], -g.angle),)
    if g.kind == "SX":
        q = g.qubits[0]
        return (rz(q, math.pi), sx(q), rz(q, math.pi))
    return (g,)


def dagger(circuit: Circuit) -> Circuit:
    gates = [h for g in reversed(circuit.gates) for h in gate_inverse(g)]
    return replace(circuit, gates=tuple(gates), blocks=())


# ---------------------------------------------------------------- dense algebra

_SX = 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]])
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_I = np.eye(2, dtype=complex)


def single_qubit_matrix(g: Gate) -> np.ndarray:
    if g.kind == "RZ":
        h = 0.5 * g.angle
        return np.diag([np.exp(-1j * h), np.exp(1j * h)])
    return {"SX": _SX, "X": _X, "ID": _I}[g.kind]


def apply_dense(states: np.ndarray, g: Gate, num_qubits: int) -> np.ndarray:
    """Apply ``g`` to the trailing axis (length 2**num_qubits) of ``states``."""
    lead = states.shape[:-1]
    if g.kind == "CNOT":
        c, t = g.qubits
        idx = np.arange(1 << num_qubits)
        return states[..., idx ^ (((idx >> c) & 1) << t)]
    if g.kind == "ID":
        return states
    q = g.qubits[0]
    u = single_qubit_matrix(g)
    v = states.reshape(lead + (1 << (num_qubits - q - 1), 2, 1 << q))
    v = np.einsum("ab,...xbz->...xaz", u, v)
    return v.reshape(lead + (1 << num_qubits,))


def unitary_of(circuit: Circuit, cap: int = UNITARY_CAP) -> np.ndarray:
    """Dense unitary; column k is the image of basis state k."""
    n = circuit.num_qubits
    if n > cap:
        raise CircuitError(f"unitary_of limited to {cap} qubits, circuit has {n}")
    # rows of ``m`` are images of basis states; transpose at the end
    m = np.eye(1 << n, dtype=complex)
    for g in circuit.gates:
        m = apply_dense(m, g, n)
    return m.T


def phase_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Frobenius distance after aligning global phase on the largest entry of ``b``."""
    k = np.unravel_index(np.argmax(np.abs(b)), b.shape)
    if abs(a[k]) == 0:
        return float(np.linalg.norm(a - b))
    phase = a[k] / abs(a[k]) * abs(b[k]) / b[k]
    return float(np.linalg.norm(a - phase * b))


# ---------------------------------------------------------------- scheduling


def schedule_layers(circuit: Circuit) -> LayerSchedule:
    frontier = [0] * circuit.num_qubits
    layers: list[list[int]] = []
    for i, g in enumerate(circuit.gates):
        level = max(frontier[q] for q in g.qubits)
        if level == len(layers):
            layers.append([])
        layers[level].append(i)
        for q in g.qubits:
            frontier[q] = level + 1
    return LayerSchedule(tuple(tuple(layer) for layer in layers))


def critical_path_counts(circuit: Circuit) -> GateCounts:
    """Longest dependency-graph paths, counting 2q and 1q gates separately.

    ID gates keep their dependencies but weigh nothing.
    """
    best2 = [0] * circuit.num_qubits
    best1 = [0] * circuit.num_qubits
    tot2 = tot1 = 0
    for g in circuit.gates:
        w2 = int(g.is_two_qubit)
        w1 = int(not g.is_two_qubit and g.kind != "ID")
        tot2 += w2
        tot1 += w1
        m2 = max(best2[q] for q in g.qubits) + w2
        m1 = max(best1[q] for q in g.qubits) + w1
        for q in g.qubits:
            best2[q] = m2
            best1[q] = m1
    return GateCounts(max(best2, default=0), max(best1, default=0), tot2, tot1)
