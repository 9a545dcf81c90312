"""Density-matrix simulation of parameterised circuits and measurements.

Qubit 0 is the most significant bit of every basis index. Gate unitaries are
embedded into the full ``2**n`` space with Kronecker products; at the sizes
this package targets (n <= 4) that is simpler than index arithmetic and fast.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .numerics import unitary_exp

GATE_KINDS = ("single", "cnot", "generator", "universal")
BASES = ("X", "Y", "Z")

I2 = np.eye(2, dtype=complex)
PAULI = {
    "I": I2,
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_S_DAG = np.diag([1, -1j]).astype(complex)
BASIS_CHANGE = {"X": _HADAMARD, "Y": _HADAMARD @ _S_DAG, "Z": I2}


class InvalidStateError(ValueError):
    pass


class CircuitError(ValueError):
    pass


@dataclass(frozen=True)
class DensityMatrix:
    n: int
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        d = 2**self.n
        if m.shape != (d, d):
            raise InvalidStateError(f"expected a {d}x{d} matrix for n={self.n}, got {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > 1e-10:
            raise InvalidStateError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1) > 1e-10:
            raise InvalidStateError(f"trace is {np.trace(m).real:.12f}, expected 1")
        if np.linalg.eigvalsh(m)[0] < -1e-10:
            raise InvalidStateError("density matrix has a negative eigenvalue")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def basis_state(cls, bits: str) -> DensityMatrix:
        """Projector onto a computational basis state, e.g. ``"10"``."""
        d = 2 ** len(bits)
        m = np.zeros((d, d), dtype=complex)
        k = int(bits, 2)
        m[k, k] = 1
        return cls(len(bits), m)

    @classmethod
    def maximally_mixed(cls, n: int) -> DensityMatrix:
        return cls(n, np.eye(2**n, dtype=complex) / 2**n)


@dataclass(frozen=True)
class GateOp:
    """One gate of a circuit.

    ``single`` is the three-parameter rotation ``u(phi, omega, theta)`` with
    slots in that order; ``cnot`` uses control ``i`` and target ``j``;
    ``generator`` applies ``exp(i theta P)`` for the Pauli word ``pauli``;
    ``universal`` applies ``exp(i sum_k theta_k P_k)`` over every word in
    ``paulis``.
    """

    kind: str
    i: int = 0
    j: int = 0
    slots: tuple[int, ...] = ()
    pauli: str | None = None
    paulis: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(int(s) for s in self.slots))
        object.__setattr__(self, "paulis", tuple(self.paulis))
        if self.kind not in GATE_KINDS:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        if self.kind == "single" and (len(self.slots) != 3 or self.i != self.j):
            raise CircuitError("single gate needs i == j and exactly 3 slots")
        if self.kind == "cnot" and (self.i == self.j or self.slots):
            raise CircuitError("cnot needs distinct control/target and no slots")
        if self.kind == "generator" and (len(self.slots) != 1 or not self.pauli):
            raise CircuitError("generator gate needs one slot and a Pauli word")
        if self.kind == "universal" and len(self.slots) != len(self.paulis):
            raise CircuitError("universal gate needs one slot per Pauli word")

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "i": self.i, "j": self.j, "slots": list(self.slots)}
        if self.pauli is not None:
            out["pauli"] = self.pauli
        if self.paulis:
            out["paulis"] = list(self.paulis)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> GateOp:
        return cls(
            kind=data["kind"],
            i=int(data.get("i", 0)),
            j=int(data.get("j", 0)),
            slots=tuple(data.get("slots", ())),
            pauli=data.get("pauli"),
            paulis=tuple(data.get("paulis", ())),
        )


@dataclass(frozen=True)
class Circuit:
    n: int
    gates: tuple[GateOp, ...]
    p: int

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        seen: set[int] = set()
        for k, g in enumerate(self.gates):
            for q in (g.i, g.j):
                if not 0 <= q < self.n:
                    raise CircuitError(f"gate {k}: qubit {q} out of range for n={self.n}")
            words = [g.pauli] if g.kind == "generator" else list(g.paulis)
            if any(len(w) != self.n for w in words):
                raise CircuitError(f"gate {k}: Pauli word length differs from n={self.n}")
            for s in g.slots:
                if not 0 <= s < self.p:
                    raise CircuitError(f"gate {k}: slot {s} out of range for p={self.p}")
                if s in seen:
                    raise CircuitError(f"gate {k}: slot {s} is shared with an earlier gate")
                seen.add(s)

    def to_dict(self) -> dict:
        return {"n": self.n, "gates": [g.to_dict() for g in self.gates], "p": self.p}

    @classmethod
    def from_dict(cls, data: dict) -> Circuit:
        return cls(int(data["n"]), tuple(GateOp.from_dict(g) for g in data["gates"]), int(data["p"]))


@dataclass(frozen=True)
class MeasurementProtocol:
    bases: tuple[str, ...]
    weights: tuple[float, ...] = ()

    def __post_init__(self):
        bases = tuple(self.bases)
        if not bases:
            raise ValueError("protocol needs at least one basis")
        if len(set(bases)) != len(bases) or any(b not in BASES for b in bases):
            raise ValueError(f"bases must be distinct entries of X, Y, Z; got {bases}")
        weights = tuple(float(w) for w in self.weights) or (1.0 / len(bases),) * len(bases)
        if len(weights) != len(bases) or any(w <= 0 for w in weights):
            raise ValueError("need one strictly positive weight per basis")
        total = sum(weights)
        object.__setattr__(self, "bases", bases)
        object.__setattr__(self, "weights", tuple(w / total for w in weights))

    @classmethod
    def parse(cls, spec: str) -> MeasurementProtocol:
        """``"XYZ"`` or ``"X,Y"`` -> uniform protocol over those bases."""
        return cls(tuple(c for c in spec.upper() if c in BASES))

    @property
    def label(self) -> str:
        return "".join(self.bases)


def embed(op: np.ndarray, qubit: int, n: int) -> np.ndarray:
    return np.kron(np.kron(np.eye(2**qubit), op), np.eye(2 ** (n - qubit - 1)))


@lru_cache(maxsize=None)
def pauli_matrix(word: str) -> np.ndarray:
    m = np.ones((1, 1), dtype=complex)
    for c in word:
        m = np.kron(m, PAULI[c])
    m.setflags(write=False)
    return m


@lru_cache(maxsize=None)
def cnot_matrix(control: int, target: int, n: int) -> np.ndarray:
    p0 = np.diag([1, 0]).astype(complex)
    p1 = np.diag([0, 1]).astype(complex)
    ops0 = [I2] * n
    ops1 = [I2] * n
    ops0[control] = p0
    ops1[control] = p1
    ops1[target] = PAULI["X"]
    m0 = np.ones((1, 1), dtype=complex)
    m1 = np.ones((1, 1), dtype=complex)
    for a, b in zip(ops0, ops1):
        m0 = np.kron(m0, a)
        m1 = np.kron(m1, b)
    out = m0 + m1
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def basis_change(basis: str, n: int) -> np.ndarray:
    m = np.ones((1, 1), dtype=complex)
    for _ in range(n):
        m = np.kron(m, BASIS_CHANGE[basis])
    m.setflags(write=False)
    return m


def _rz(a: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * a), np.exp(0.5j * a)])


def _ry(a: float) -> np.ndarray:
    c, s = np.cos(a / 2), np.sin(a / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def u_matrix(phi: float, omega: float, theta: float) -> np.ndarray:
    """The single-qubit rotation ``Rz(omega) Ry(theta) Rz(phi)``."""
    return _rz(omega) @ _ry(theta) @ _rz(phi)


def u_matrix_derivatives(phi: float, omega: float, theta: float) -> np.ndarray:
    """Partial derivatives of :func:`u_matrix` w.r.t. (phi, omega, theta)."""
    mz = -0.5j * PAULI["Z"]
    my = -0.5j * PAULI["Y"]
    rz_w, ry_t, rz_p = _rz(omega), _ry(theta), _rz(phi)
    return np.stack(
        [
            rz_w @ ry_t @ rz_p @ mz,
            mz @ rz_w @ ry_t @ rz_p,
            rz_w @ ry_t @ my @ rz_p,
        ]
    )


def gate_unitary(gate: GateOp, params: np.ndarray, n: int) -> np.ndarray:
    if gate.kind == "cnot":
        return cnot_matrix(gate.i, gate.j, n)
    theta = params[list(gate.slots)]
    if gate.kind == "single":
        return embed(u_matrix(*theta), gate.i, n)
    if gate.kind == "generator":
        t = theta[0]
        return np.cos(t) * np.eye(2**n) + 1j * np.sin(t) * pauli_matrix(gate.pauli)
    return unitary_exp(universal_exponent(gate.paulis, theta))


def universal_exponent(words: Sequence[str], theta: np.ndarray) -> np.ndarray:
    return np.tensordot(theta, np.stack([pauli_matrix(w) for w in words]), axes=1)


def circuit_unitary(circuit: Circuit, params) -> np.ndarray:
    params = check_params(circuit, params)
    u = np.eye(2**circuit.n, dtype=complex)
    for g in circuit.gates:
        u = gate_unitary(g, params, circuit.n) @ u
    return u


def check_params(circuit: Circuit, params) -> np.ndarray:
    params = np.asarray(params, dtype=float).reshape(-1)
    if params.shape[0] != circuit.p:
        raise CircuitError(f"expected {circuit.p} parameters, got {params.shape[0]}")
    return params


def apply_gate(state: DensityMatrix, gate: GateOp, params) -> DensityMatrix:
    params = np.asarray(params, dtype=float).reshape(-1)
    for q in (gate.i, gate.j):
        if not 0 <= q < state.n:
            raise CircuitError(f"qubit {q} out of range for n={state.n}")
    if any(not 0 <= s < params.shape[0] for s in gate.slots):
        raise CircuitError(f"gate slots {gate.slots} out of range for {params.shape[0]} parameters")
    g = gate_unitary(gate, params, state.n)
    return DensityMatrix(state.n, g @ state.matrix @ g.conj().T)


def run_circuit(circuit: Circuit, params, state: DensityMatrix) -> DensityMatrix:
    if state.n != circuit.n:
        raise CircuitError(f"state has {state.n} qubits, circuit has {circuit.n}")
    u = circuit_unitary(circuit, params)
    return DensityMatrix(circuit.n, u @ state.matrix @ u.conj().T)


def basis_probabilities(rho: np.ndarray, basis: str, n: int) -> np.ndarray:
    """Computational-basis probabilities after rotating into ``basis``.

    Works on any stack ``(..., d, d)``; the result has shape ``(..., d)``.
    Linear in ``rho``, so it also maps state tangents to probability tangents.
    """
    b = basis_change(basis, n)
    return np.einsum("yi,...ij,yj->...y", b, rho, b.conj(), optimize=True).real


def outcome_probabilities(state: DensityMatrix, basis: str) -> np.ndarray:
    if basis not in BASES:
        raise ValueError(f"unknown basis {basis!r}")
    p = np.clip(basis_probabilities(state.matrix, basis, state.n), 0.0, None)
    return p / p.sum()


def distribution_from_states(rho: np.ndarray, protocol: MeasurementProtocol, n: int) -> np.ndarray:
    """Joint (basis, outcome) distribution of a stack of states, unclamped."""
    return np.concatenate(
        [w * basis_probabilities(rho, b, n) for b, w in zip(protocol.bases, protocol.weights)],
        axis=-1,
    )


def model_distribution(
    circuit: Circuit, params, state: DensityMatrix, protocol: MeasurementProtocol
) -> np.ndarray:
    out = run_circuit(circuit, params, state)
    return np.concatenate(
        [w * outcome_probabilities(out, b) for b, w in zip(protocol.bases, protocol.weights)]
    )
