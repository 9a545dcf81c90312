"""Classical Fisher information of a circuit model and its effective rank.

The model is the joint distribution over (measurement basis, outcome) for a
uniformly drawn input state. Expectations over inputs and outcomes are exact
sums; nothing here samples measurement shots.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ansatz import max_rank
from .data import Dataset
from .numerics import DEFAULT_REL_TOL, rank_from_spectrum, unitary_exp_directional_many
from .quantum import (
    Circuit,
    DensityMatrix,
    MeasurementProtocol,
    check_params,
    distribution_from_states,
    embed,
    gate_unitary,
    pauli_matrix,
    u_matrix_derivatives,
    universal_exponent,
)

METHODS = ("auto", "shift", "fd", "exact")
PROB_FLOOR = 1e-12
FD_STEP = 1e-5
FD_REL_TOL = 1e-6

# (shift, coefficient) pairs so that df/dt = c * (f(t + s) - f(t - s))
_ROTATION_SHIFT = (np.pi / 2, 0.5)  # exp(-i t P / 2)
_GENERATOR_SHIFT = (np.pi / 4, 1.0)  # exp(+i t P)


class GradientMethodError(ValueError):
    pass


@dataclass(frozen=True)
class FisherMatrix:
    matrix: np.ndarray
    eigenvalues: np.ndarray

    def rank(self, rel_tol: float = DEFAULT_REL_TOL) -> int:
        return rank_from_spectrum(self.eigenvalues, rel_tol)


@dataclass(frozen=True)
class RankReport:
    kappa: int
    p: int
    d_n: int
    draws: tuple[int, ...]
    spectrum: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def eta(self) -> float:
        return self.kappa / self.p if self.p else 0.0


def shift_compatible(circuit: Circuit) -> bool:
    return all(g.kind != "universal" for g in circuit.gates)


def resolve_method(circuit: Circuit, method: str) -> str:
    if method not in METHODS:
        raise GradientMethodError(f"unknown gradient method {method!r}")
    if method == "auto":
        return "shift" if shift_compatible(circuit) else "exact"
    if method == "shift" and not shift_compatible(circuit):
        raise GradientMethodError(
            "parameter shift does not apply to the multi-generator universal gate; "
            "use method='exact' or 'fd'"
        )
    return method


def default_rel_tol(method: str) -> float:
    return FD_REL_TOL if method == "fd" else DEFAULT_REL_TOL


def _products(circuit: Circuit, params: np.ndarray):
    d = 2**circuit.n
    mats = [gate_unitary(g, params, circuit.n) for g in circuit.gates]
    prefix = [np.eye(d, dtype=complex)]
    for m in mats:
        prefix.append(m @ prefix[-1])
    suffix = [np.eye(d, dtype=complex)]
    for m in reversed(mats[1:]):
        suffix.append(suffix[-1] @ m)
    suffix = suffix[::-1]  # suffix[k] = product of the gates after gate k
    return mats, prefix, suffix


def _gate_tangents(gate, params, n) -> np.ndarray:
    """Exact derivatives of the embedded gate unitary, one per slot."""
    theta = params[list(gate.slots)]
    if gate.kind == "single":
        return np.stack([embed(m, gate.i, n) for m in u_matrix_derivatives(*theta)])
    if gate.kind == "generator":
        return (1j * pauli_matrix(gate.pauli) @ gate_unitary(gate, params, n))[None]
    paulis = np.stack([pauli_matrix(w) for w in gate.paulis])
    return unitary_exp_directional_many(universal_exponent(gate.paulis, theta), paulis)


def _shifted_gates(gate, params, n, method, h):
    """Gate unitaries at +/- displaced slots and the difference coefficients."""
    plus, minus, coef = [], [], []
    for s in gate.slots:
        if method == "fd":
            step, c = h, 0.5 / h
        elif gate.kind == "generator":
            step, c = _GENERATOR_SHIFT
        else:
            step, c = _ROTATION_SHIFT
        pp = params.copy()
        pp[s] += step
        plus.append(gate_unitary(gate, pp, n))
        pp[s] -= 2 * step
        minus.append(gate_unitary(gate, pp, n))
        coef.append(c)
    return np.stack(plus), np.stack(minus), np.asarray(coef)


def _conjugate(u: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """``U rho U^H`` for every pair in stacks ``(k, d, d)`` x ``(N, d, d)``."""
    return u[:, None] @ rho[None] @ u.conj().swapaxes(-1, -2)[:, None]


def jacobian(
    circuit: Circuit,
    params,
    states: np.ndarray,
    protocol: MeasurementProtocol,
    method: str = "auto",
    h: float = FD_STEP,
) -> tuple[np.ndarray, np.ndarray]:
    """Model distribution and its parameter derivatives for a stack of inputs.

    Returns ``probs`` with shape ``(N, K)`` and ``grads`` with shape
    ``(N, K, p)``, ``K = len(protocol.bases) * 2**n``.
    """
    params = check_params(circuit, params)
    method = resolve_method(circuit, method)
    n = circuit.n
    states = np.asarray(states)
    if states.ndim == 2:
        states = states[None]
    mats, prefix, suffix = _products(circuit, params)
    u = prefix[-1]
    probs = distribution_from_states(u @ states @ u.conj().T, protocol, n)
    grads = np.zeros(probs.shape + (circuit.p,))
    if circuit.p == 0:
        return probs, grads

    slots, blocks = [], []
    for k, g in enumerate(circuit.gates):
        if not g.slots:
            continue
        slots.extend(g.slots)
        if method == "exact":
            blocks.append(suffix[k] @ _gate_tangents(g, params, n) @ prefix[k])
        else:
            plus, minus, coef = _shifted_gates(g, params, n, method, h)
            blocks.append((suffix[k] @ plus @ prefix[k], suffix[k] @ minus @ prefix[k], coef))

    if method == "exact":
        du = np.concatenate(blocks)
        x = du[:, None] @ (states @ u.conj().T)[None]
        drho = x + x.conj().swapaxes(-1, -2)
        dp = distribution_from_states(drho, protocol, n)
    else:
        plus = np.concatenate([b[0] for b in blocks])
        minus = np.concatenate([b[1] for b in blocks])
        coef = np.concatenate([b[2] for b in blocks])
        dp = distribution_from_states(_conjugate(plus, states), protocol, n)
        dp -= distribution_from_states(_conjugate(minus, states), protocol, n)
        dp *= coef[:, None, None]
    grads[..., slots] = np.moveaxis(dp, 0, -1)
    return probs, grads


def prob_gradients(
    circuit: Circuit,
    params,
    state: DensityMatrix,
    protocol: MeasurementProtocol,
    method: str = "auto",
    h: float = FD_STEP,
) -> np.ndarray:
    """``(outcomes, p)`` matrix of derivatives of the model distribution."""
    _, grads = jacobian(circuit, params, state.matrix, protocol, method, h)
    return grads[0]


def _states_of(dataset) -> np.ndarray:
    if isinstance(dataset, Dataset):
        return dataset.array
    if isinstance(dataset, DensityMatrix):
        return dataset.matrix[None]
    if isinstance(dataset, np.ndarray):
        return dataset if dataset.ndim == 3 else dataset[None]
    states = list(dataset)
    if not states:
        raise ValueError("dataset is empty")
    return np.stack([s.matrix for s in states])


def fisher_from_jacobian(probs: np.ndarray, grads: np.ndarray) -> np.ndarray:
    mask = probs > PROB_FLOOR
    inv = np.where(mask, 1.0 / np.where(mask, probs, 1.0), 0.0)
    f = np.einsum("nkp,nk,nkq->pq", grads, inv, grads, optimize=True) / probs.shape[0]
    return 0.5 * (f + f.T)


def fisher_matrix(
    circuit: Circuit,
    params,
    dataset,
    protocol: MeasurementProtocol,
    method: str = "auto",
    h: float = FD_STEP,
) -> FisherMatrix:
    states = _states_of(dataset)
    if states.shape[-1] != 2**circuit.n:
        raise ValueError(f"states have dimension {states.shape[-1]}, circuit needs {2**circuit.n}")
    probs, grads = jacobian(circuit, params, states, protocol, method, h)
    f = fisher_from_jacobian(probs, grads)
    w = np.linalg.eigvalsh(f) if f.size else np.zeros(0)
    return FisherMatrix(f, w)


def effective_rank(
    circuit: Circuit,
    dataset,
    protocol: MeasurementProtocol,
    n_draws: int = 3,
    rel_tol: float | None = None,
    seed: int = 0,
    method: str = "auto",
) -> RankReport:
    """Maximum Fisher rank over ``n_draws`` parameter vectors uniform on [0, 2pi)."""
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    method = resolve_method(circuit, method)
    tol = default_rel_tol(method) if rel_tol is None else rel_tol
    states = _states_of(dataset)
    rng = np.random.default_rng(seed)
    ranks = []
    best = None
    for _ in range(n_draws):
        theta = rng.uniform(0.0, 2 * np.pi, circuit.p)
        fm = fisher_matrix(circuit, theta, states, protocol, method)
        r = fm.rank(tol)
        ranks.append(r)
        if best is None or r > best[0]:
            best = (r, fm.eigenvalues)
    return RankReport(max(ranks), circuit.p, max_rank(circuit.n), tuple(ranks), best[1])


def parameter_efficiency(report: RankReport) -> float:
    if report.p == 0:
        raise ValueError("parameter efficiency is undefined for a circuit without parameters")
    return report.kappa / report.p
