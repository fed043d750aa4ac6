import math

import numpy as np
import pytest

from entroq.circuits import ParamCircuit, ansatz_circuit9, ansatz_complex_entangled, compile_unitary
from entroq.divergences import relative_entropy, von_neumann_entropy
from entroq.errors import ValidationError
from entroq.experiments import (
    GAConfig,
    PauliChannel,
    build_rho_LR,
    coherent_info_exact,
    genetic_optimize,
    global_loss_l2,
    gradient_scaling,
    normalized,
    pauli_apply,
    pauli_coherent_info,
    pauli_tensor_apply,
    scan_channel,
    superadd_grid,
    superadditivity_scan,
)
from entroq.linalg import kron, partial_trace
from entroq.states import DensityMatrix, PureState, maximally_entangled, random_mixed_state, random_pure_state

from conftest import random_full_rank

PAULI = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1, -1])]


def test_l2_examples(rng):
    c = ansatz_circuit9(2, 1)
    zero = np.diag([1.0, 0, 0, 0])
    ident = ParamCircuit(2, (), 0)
    assert abs(global_loss_l2(ident, [], zero, zero) - 1) < 1e-15
    assert abs(global_loss_l2(ident, [], zero, np.diag([0, 1.0, 0, 0]))) < 1e-15
    rho, sigma = random_full_rank(4, rng), random_full_rank(4, rng)
    p = rng.uniform(0, 6, c.n_params)
    w = compile_unitary(c, p)
    a = global_loss_l2(c, p, rho, sigma)
    assert abs(a - np.trace(w.conj().T @ sigma @ w @ rho).real) < 1e-12
    assert 0 <= a <= 1


def test_l2_gradient_zero_for_maximally_mixed():
    mm = DensityMatrix(np.eye(4) / 4)
    rec = gradient_scaling("l2", 2, 2, samples=20, states=(mm, mm))
    assert rec.overall() < 1e-14


def test_gradient_scaling_deterministic():
    a = gradient_scaling("l1", 2, 1, samples=5, seed=3)
    b = gradient_scaling("l1", 2, 1, samples=5, seed=3)
    assert a.mean_abs_gradient == b.mean_abs_gradient
    assert all(v >= 0 for v in a.mean_abs_gradient.values())
    assert set(a.to_row()) >= {"loss", "n_qubits", "layers", "samples", "grad_theta", "grad_beta"}


def test_gradient_scaling_validation():
    with pytest.raises(ValidationError):
        gradient_scaling("l3", 2, 1)
    with pytest.raises(ValidationError):
        gradient_scaling("l2", 1, 1)


def test_l2_trend_small():
    vals = [gradient_scaling("l2", n, 5, samples=60, seed=1).overall() for n in (2, 3, 4)]
    assert vals[0] > vals[1] > vals[2]


def test_normalized():
    assert np.allclose(normalized([2.0, 1.0, 0.5]), [1, 0.5, 0.25])
    assert np.array_equal(normalized([0.0, 0.0]), [0.0, 0.0])


def test_pauli_channel_validation():
    with pytest.raises(ValidationError):
        PauliChannel((0.5, 0.5, 0.1, 0.0))
    with pytest.raises(ValidationError):
        PauliChannel((1.1, -0.1, 0, 0))
    assert PauliChannel.from_xyz(0.1, 0.2, 0.3).p[0] == pytest.approx(0.4)


def test_pauli_apply_examples(rng):
    rho = random_full_rank(2, rng)
    assert np.allclose(pauli_apply(PauliChannel.identity(), rho).matrix, rho)
    assert np.allclose(pauli_apply(PauliChannel((0.25,) * 4), rho).matrix, np.eye(2) / 2)
    ch = PauliChannel((0.4, 0.3, 0.2, 0.1))
    want = sum(p * P @ rho @ P.conj().T for p, P in zip(ch.p, PAULI))
    assert np.allclose(pauli_apply(ch, rho).matrix, want, atol=1e-14)


def test_pauli_tensor_factorizes(rng):
    ch = PauliChannel((0.4, 0.3, 0.2, 0.1))
    a, b = random_full_rank(2, rng), random_full_rank(2, rng)
    out = pauli_tensor_apply(ch, 2, kron(a, b)).matrix
    assert np.allclose(out, kron(pauli_apply(ch, a).matrix, pauli_apply(ch, b).matrix), atol=1e-14)


def test_pauli_tensor_on_chosen_qubits(rng):
    ch = PauliChannel((0.5, 0.0, 0.0, 0.5))
    a, b, c = (random_full_rank(2, rng) for _ in range(3))
    out = pauli_tensor_apply(ch, 1, kron(a, b, c), qubits=[2]).matrix
    assert np.allclose(out, kron(pauli_apply(ch, a).matrix, b, c), atol=1e-14)


def test_channel_cptp_random_inputs(rng):
    for _ in range(5):
        ch = PauliChannel(rng.dirichlet(np.ones(4)))
        for s in range(200):
            rho = random_mixed_state(2, 1 + s % 4, seed=s)
            out = pauli_tensor_apply(ch, 2, rho).matrix
            assert abs(np.trace(out) - 1) <= 1e-12
            assert np.linalg.eigvalsh(out).min() >= -1e-12


def test_pauli_coherent_info_examples():
    assert pauli_coherent_info(PauliChannel.identity()) == 1.0
    assert abs(pauli_coherent_info(PauliChannel((0.25,) * 4)) + 1) < 1e-15
    assert abs(pauli_coherent_info(PauliChannel((0.5, 0.5, 0, 0)))) < 1e-15


def test_coherent_info_examples(rng):
    assert abs(coherent_info_exact(PauliChannel.identity(), maximally_entangled(2)) - 2) < 1e-10
    psi = random_pure_state(2, 11)
    full = PauliChannel((0.25,) * 4)
    val = coherent_info_exact(full, psi)
    phi_a = partial_trace(psi.density().matrix, [2, 2], [0])
    assert abs(val + von_neumann_entropy(phi_a)) < 1e-10
    for _ in range(10):
        ch = PauliChannel(rng.dirichlet(np.ones(4)))
        v = coherent_info_exact(ch, maximally_entangled(1), cross_check=True)
        assert abs(v - pauli_coherent_info(ch)) <= 1e-10


def test_coherent_info_callable_channel():
    ch = PauliChannel((0.7, 0.1, 0.1, 0.1))
    fn = lambda m: pauli_tensor_apply(ch, 1, m)
    assert abs(coherent_info_exact(fn, maximally_entangled(1)) - pauli_coherent_info(ch)) < 1e-12


def test_build_rho_lr_examples(rng):
    c = ansatz_complex_entangled(2, 1)
    rho_l, rho_r = build_rho_LR(PauliChannel.identity(), 1, c, np.zeros(c.n_params))
    assert abs(rho_l.purity() - 1) < 1e-12
    assert abs(relative_entropy(rho_l, rho_r).value) < 1e-10
    assert abs(rho_l.trace - 1) < 1e-12 and abs(rho_r.trace - 2) < 1e-12
    # H on qubit 1 followed by CNOT(1 -> 0) prepares a Bell pair across A and A'
    from entroq.circuits import Gate

    bell = ParamCircuit(2, (Gate("H", (1,)), Gate("CNOT", (1, 0))), 0)
    rho_l, rho_r = build_rho_LR(PauliChannel.identity(), 1, bell, [])
    assert abs(relative_entropy(rho_l, rho_r).value - 1) < 1e-10
    c4 = ansatz_complex_entangled(4, 2)
    ch = PauliChannel((0.7, 0.1, 0.1, 0.1))
    x = rng.uniform(0, 6, c4.n_params)
    rho_l, rho_r = build_rho_LR(ch, 2, c4, x)
    assert abs(rho_r.trace - 4) < 1e-12
    psi = PureState(compile_unitary(c4, x)[:, 0])
    assert abs(relative_entropy(rho_l, rho_r).value - coherent_info_exact(ch, psi)) <= 1e-10


def test_build_rho_lr_width():
    with pytest.raises(ValidationError):
        build_rho_LR(PauliChannel.identity(), 2, ansatz_complex_entangled(2, 1), np.zeros(6))


def test_ga_quadratic():
    obj = lambda x: -float(np.sum((x - np.pi) ** 2))
    res = genetic_optimize(obj, 4, GAConfig(population=40, generations=50, seed=1))
    assert res.best_value >= -0.05
    assert all(b >= a for a, b in zip(res.history, res.history[1:]))
    again = genetic_optimize(obj, 4, GAConfig(population=40, generations=50, seed=1))
    assert np.array_equal(res.best_params, again.best_params)
    assert res.evaluations == 40 + 50 * 38


def test_ga_parallel_matches_serial():
    obj = lambda x: -float(np.sum(np.cos(x) * x))
    a = genetic_optimize(obj, 3, GAConfig(population=12, generations=10, seed=4))
    b = genetic_optimize(obj, 3, GAConfig(population=12, generations=10, seed=4), workers=3)
    assert a.best_value == b.best_value and a.history == b.history


def test_ga_validation():
    with pytest.raises(ValidationError):
        genetic_optimize(lambda x: 0.0, 2, GAConfig(population=1))
    with pytest.raises(ValidationError):
        genetic_optimize(lambda x: 0.0, 0)


def test_identity_not_superadditive():
    row = scan_channel(PauliChannel.identity(), GAConfig(population=16, generations=15))
    assert not row.confirmed and row.exact_gap <= 0
    assert row.single_use == 1.0


def test_scan_report_shape():
    grid = superadd_grid(0.1, 0.1)
    assert len(grid) == 8
    rep = superadditivity_scan(grid[:2], GAConfig(population=8, generations=3))
    assert len(rep.rows) == 2 and rep.mode == "exact"
    assert set(rep.rows[0].to_row()) == {"p1", "p2", "p3", "single_use", "two_use_half", "gap", "exact_gap", "confirmed"}
    for r in rep.superadditive():
        assert r.exact_gap > 0


def test_scan_vqa_mode_is_checked_by_oracle():
    row = scan_channel(PauliChannel.from_xyz(0.05, 0.05, 0.05), GAConfig(population=6, generations=2), mode="vqa",
                       vqa_config=__import__("entroq.vqa", fromlist=["FtConfig"]).FtConfig(iterations=5))
    assert not row.confirmed or row.exact_gap > 0
