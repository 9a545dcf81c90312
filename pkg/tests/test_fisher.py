import numpy as np
import pytest

from qnnrank.ansatz import chain_blocks, decode_tokens, TokenSequence, universal_circuit
from qnnrank.data import make_dataset
from qnnrank.fisher import (
    GradientMethodError,
    RankReport,
    effective_rank,
    fisher_matrix,
    parameter_efficiency,
    prob_gradients,
)
from qnnrank.numerics import psd_rank
from qnnrank.quantum import Circuit, DensityMatrix, GateOp, MeasurementProtocol, model_distribution

XYZ = MeasurementProtocol.parse("XYZ")
Z = MeasurementProtocol.parse("Z")
ZERO = DensityMatrix.basis_state("0")
U1 = Circuit(1, (GateOp("single", 0, 0, (0, 1, 2)),), 3)


def fd_fisher(circuit, theta, states, protocol, h=1e-5):
    """Brute-force FIM from model_distribution alone."""
    f = np.zeros((circuit.p, circuit.p))
    for s in states:
        p0 = model_distribution(circuit, theta, s, protocol)
        cols = []
        for j in range(circuit.p):
            e = np.zeros(circuit.p)
            e[j] = h
            cols.append((model_distribution(circuit, theta + e, s, protocol)
                         - model_distribution(circuit, theta - e, s, protocol)) / (2 * h))
        d = np.array(cols).T
        keep = p0 > 1e-12
        f += d[keep].T @ (d[keep] / p0[keep, None])
    return f / len(states)


def fd_rank(circuit, states, protocol, seed=0):
    theta = np.random.default_rng(seed).uniform(0, 2 * np.pi, circuit.p)
    return psd_rank(fd_fisher(circuit, theta, states, protocol), 1e-6)


def test_u_gate_gradient_closed_form():
    theta = np.array([0.4, 1.1, 0.9])
    g = prob_gradients(U1, theta, ZERO, Z, "shift")
    t = theta[2]
    expect = [-np.sin(t / 2) * np.cos(t / 2), np.sin(t / 2) * np.cos(t / 2)]
    assert np.allclose(g[:, :2], 0, atol=1e-14)
    assert np.allclose(g[:, 2], expect)


def test_unmeasured_independent_parameter_has_zero_column():
    # qubit 1 is rotated but never entangled; a protocol on qubit 0 alone is not
    # expressible, so use a product input and check the marginal is unaffected
    c = Circuit(2, (GateOp("single", 0, 0, (0, 1, 2)), GateOp("single", 1, 1, (3, 4, 5))), 6)
    state = DensityMatrix.basis_state("00")
    g = prob_gradients(c, np.full(6, 0.7), state, Z, "shift")
    marginal = g.reshape(2, 2, 6).sum(axis=1)
    assert np.allclose(marginal[:, 3:], 0, atol=1e-14)


def test_unreferenced_slot_gives_zero_column():
    c = Circuit(1, (GateOp("single", 0, 0, (0, 1, 2)),), 4)
    g = prob_gradients(c, np.full(4, 0.3), ZERO, XYZ, "exact")
    assert np.allclose(g[:, 3], 0)


@pytest.mark.parametrize("method", ["shift", "exact"])
def test_methods_agree_with_fd_on_chain(method, rng):
    c = chain_blocks(2, 2)
    state = make_dataset(2, 1, 5).states[0]
    theta = rng.uniform(0, 2 * np.pi, c.p)
    a = prob_gradients(c, theta, state, XYZ, method)
    b = prob_gradients(c, theta, state, XYZ, "fd", h=1e-5)
    assert np.abs(a - b).max() < 1e-6


def test_generator_shift_rule(rng):
    c = Circuit(2, (GateOp("generator", slots=(0,), pauli="XY"), GateOp("single", 1, 1, (1, 2, 3)),
                    GateOp("generator", slots=(4,), pauli="ZZ")), 5)
    state = make_dataset(2, 1, 1).states[0]
    theta = rng.uniform(0, 2 * np.pi, 5)
    a = prob_gradients(c, theta, state, XYZ, "shift")
    b = prob_gradients(c, theta, state, XYZ, "fd")
    assert np.abs(a - b).max() < 1e-6


def test_universal_gradients(rng):
    c = universal_circuit(2)
    state = make_dataset(2, 1, 2).states[0]
    theta = rng.uniform(0, 2 * np.pi, c.p)
    a = prob_gradients(c, theta, state, XYZ, "exact")
    b = prob_gradients(c, theta, state, XYZ, "fd")
    assert np.abs(a - b).max() < 1e-6
    with pytest.raises(GradientMethodError):
        prob_gradients(c, theta, state, XYZ, "shift")


def test_fisher_empty_circuit():
    fm = fisher_matrix(Circuit(1, (), 0), [], [ZERO], XYZ)
    assert fm.matrix.shape == (0, 0)


def test_fisher_single_gate_rank_one():
    theta = np.array([0.4, 1.1, 0.9])
    fm = fisher_matrix(U1, theta, [ZERO], Z)
    oracle = fd_fisher(U1, theta, [ZERO], Z)
    assert np.allclose(fm.matrix, oracle, atol=1e-8)
    mask = np.zeros((3, 3), dtype=bool)
    mask[2, 2] = True
    assert np.allclose(fm.matrix[~mask], 0, atol=1e-14) and fm.matrix[2, 2] > 0
    assert psd_rank(fm.matrix) == 1


def test_fisher_matches_brute_force_on_chain(rng):
    c = chain_blocks(2, 1)
    ds = make_dataset(2, 3, 4)
    theta = rng.uniform(0, 2 * np.pi, c.p)
    fm = fisher_matrix(c, theta, ds, XYZ)
    assert np.allclose(fm.matrix, fd_fisher(c, theta, ds.states, XYZ), atol=1e-8)


def test_fisher_rejects_bad_dataset():
    with pytest.raises(ValueError):
        fisher_matrix(U1, np.zeros(3), [], Z)
    with pytest.raises(ValueError):
        fisher_matrix(U1, np.zeros(3), [DensityMatrix.basis_state("00")], Z)


def test_rank_universal_n1_full():
    ds = make_dataset(1, 4, 0)
    assert effective_rank(universal_circuit(1), ds, XYZ).kappa == 3


@pytest.mark.parametrize("protocol,expected", [(Z, 1), (XYZ, 2)])
def test_rank_universal_n1_pure_input(protocol, expected):
    c = universal_circuit(1)
    assert fd_rank(c, [ZERO], protocol) == expected
    assert effective_rank(c, [ZERO], protocol).kappa == expected


def test_rank_report_fields():
    r = effective_rank(chain_blocks(2, 1), make_dataset(2, 4, 0), XYZ, n_draws=2, seed=3)
    assert r.p == 6 and r.d_n == 15 and len(r.draws) == 2 and r.kappa == max(r.draws)
    again = effective_rank(chain_blocks(2, 1), make_dataset(2, 4, 0), XYZ, n_draws=2, seed=3)
    assert again.draws == r.draws


def test_parameter_efficiency():
    assert parameter_efficiency(RankReport(13, 18, 63, (13,))) == pytest.approx(13 / 18)
    assert parameter_efficiency(RankReport(5, 5, 15, (5,))) == 1.0
    assert parameter_efficiency(RankReport(0, 5, 15, (0,))) == 0.0
    with pytest.raises(ValueError):
        parameter_efficiency(RankReport(0, 0, 15, (0,)))


def test_fisher_psd_at_random_draws():
    rng = np.random.default_rng(5)
    for n in (1, 2, 3):
        c = universal_circuit(n) if n == 1 else chain_blocks(n, 2)
        ds = make_dataset(n, 3, n)
        for _ in range(50):
            f = fisher_matrix(c, rng.uniform(0, 2 * np.pi, c.p), ds, XYZ).matrix
            assert np.abs(f - f.T).max() < 1e-10
            w = np.linalg.eigvalsh(f)
            assert w[0] >= -1e-8 * w[-1]


def test_monotone_in_data_and_protocol():
    c = universal_circuit(2)
    ds = make_dataset(2, 6, 2)
    protos = [MeasurementProtocol.parse(p) for p in ("X", "XY", "XYZ")]
    grid = [[effective_rank(c, ds.head(k), pr).kappa for k in range(1, 7)] for pr in protos]
    for row in grid:
        assert row == sorted(row)
    for col in zip(*grid):
        assert list(col) == sorted(col)


def test_reweighting_keeps_rank():
    c = decode_tokens(TokenSequence(3, (0, 4, 1, 8, 5, 0)))
    ds = make_dataset(3, 4, 0)
    base = effective_rank(c, ds, XYZ).kappa
    skew = MeasurementProtocol(("X", "Y", "Z"), (0.7, 0.05, 0.25))
    assert effective_rank(c, ds, skew).kappa == base


def test_single_basis_reference_values():
    ds = make_dataset(3, 20, 0)
    z = MeasurementProtocol.parse("Z")
    assert effective_rank(chain_blocks(3, 2), ds, z).kappa == 13
    found = decode_tokens(TokenSequence(3, (0, 4, 8, 1, 5, 0, 8, 2, 4, 0)))
    assert effective_rank(found, ds, z).kappa == 16
