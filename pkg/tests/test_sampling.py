import numpy as np
import pytest

from entroq.circuits import Gate, ParamCircuit, ansatz_two_qubit, ansatz_u3, compile_unitary
from entroq.errors import ValidationError
from entroq.sampling import (
    ProbVector,
    SampleRequest,
    UnitaryCache,
    direct_theta,
    evaluate_request,
    extended_swap_general,
    prob_u_dagger_basis,
    prob_v_basis,
    sample_shots,
    swap_test_probs,
)

from conftest import random_full_rank

IDENT1 = ParamCircuit(1, (), 0)
HAD1 = ParamCircuit(1, (Gate("H", (0,)),), 0)


def test_v_basis_examples(rng):
    assert np.allclose(prob_v_basis(np.diag([0.3, 0.7]), IDENT1, []).probs, [0.3, 0.7])
    assert np.allclose(prob_v_basis(np.diag([1.0, 0]), HAD1, []).probs, [0.5, 0.5])
    rho = random_full_rank(4, rng)
    c = ansatz_two_qubit(2)
    p = prob_v_basis(rho, c, rng.uniform(0, 6, c.n_params)).probs
    assert abs(p.sum() - 1) <= 1e-10


def test_u_dagger_examples(rng):
    sigma = random_full_rank(2, rng)
    assert np.allclose(prob_u_dagger_basis(sigma, IDENT1, []).probs, np.diag(sigma).real)
    c = ansatz_two_qubit(1)
    th = rng.uniform(0, 6, c.n_params)
    assert np.allclose(prob_u_dagger_basis(np.eye(4) / 4, c, th).probs, 0.25)
    p = prob_u_dagger_basis(random_full_rank(4, rng), c, th).probs
    assert abs(p.sum() - 1) <= 1e-10
    u = compile_unitary(c, th)
    want = np.diag(u.conj().T @ random_full_rank(4, np.random.default_rng(1)) @ u).real
    got = prob_u_dagger_basis(random_full_rank(4, np.random.default_rng(1)), c, th).probs
    assert np.allclose(got, want, atol=1e-12)


def test_swap_trivial_cases(rng):
    rho = np.diag([0.3, 0.7])
    for method in ("contract", "circuit"):
        p = swap_test_probs(rho, IDENT1, [], IDENT1, [], method=method).probs
        assert np.allclose(p, [0.65, 0.85], atol=1e-12)
        p = swap_test_probs(np.diag([1.0, 0]), IDENT1, [], IDENT1, [], method=method).probs
        assert np.allclose(p, [1.0, 0.5], atol=1e-12)


@pytest.mark.parametrize("n", [1, 2])
def test_swap_circuit_matches_contract(n, rng):
    c = ansatz_u3() if n == 1 else ansatz_two_qubit(1)
    for _ in range(5):
        rho = random_full_rank(1 << n, rng)
        th, be = rng.uniform(0, 6, c.n_params), rng.uniform(0, 6, c.n_params)
        a = swap_test_probs(rho, c, th, c, be, "contract").probs
        b = swap_test_probs(rho, c, th, c, be, "circuit").probs
        assert np.max(np.abs(a - b)) <= 1e-10
        u, v = compile_unitary(c, th), compile_unitary(c, be)
        ref = 0.5 * (1 + np.real(np.diag(v @ rho @ u)))
        assert np.allclose(a, ref, atol=1e-12)


def test_bias_identity(rng):
    # 2 sum_i lam_i (2 p_chi - 1) = tr[rho (Z + Z^dag)] with Z = U Lambda V
    c = ansatz_u3()
    rho = random_full_rank(2, rng)
    th, be = rng.uniform(0, 6, 3), rng.uniform(0, 6, 3)
    lam = rng.random(2)
    p = swap_test_probs(rho, c, th, c, be).probs
    z = compile_unitary(c, th) @ np.diag(lam) @ compile_unitary(c, be)
    assert abs(2 * np.sum(lam * (2 * p - 1)) - np.trace(rho @ (z + z.conj().T)).real) < 1e-12


def test_extended_order_one_consistency(rng):
    c = ansatz_u3()
    rho = random_full_rank(2, rng)
    th, be = rng.uniform(0, 6, 3), rng.uniform(0, 6, 3)
    p = swap_test_probs(rho, c, th, c, be).probs
    for i in range(2):
        theta = extended_swap_general(rho, [(c, th, c, be)], [i])
        assert abs(theta - (2 * p[i] - 1)) < 1e-10


def test_extended_identity_product():
    rho = np.diag([0.2, 0.8])
    for i in range(2):
        val = extended_swap_general(rho, [(IDENT1, [], IDENT1, [])] * 3, [i, i, i])
        assert abs(val - rho[i, i]) < 1e-12


def test_extended_order_two_random(rng):
    c = ansatz_u3()
    rho = random_full_rank(2, rng)
    pairs = [(c, rng.uniform(0, 6, 3), c, rng.uniform(0, 6, 3)) for _ in range(2)]
    for j in [(0, 0), (0, 1), (1, 0), (1, 1)]:
        assert abs(extended_swap_general(rho, pairs, j) - direct_theta(rho, pairs, j)) <= 1e-10


def test_shots_point_mass():
    assert np.array_equal(sample_shots([1.0, 0.0], 37, 0).probs, [1.0, 0.0])


def test_shots_binomial_concentration():
    fails = 0
    for s in range(200):
        p = sample_shots([0.5, 0.5], 10000, s).probs
        fails += np.any(np.abs(p - 0.5) > 0.02)
    assert fails <= 2


def test_shots_deterministic():
    a = sample_shots([0.2, 0.3, 0.5], 1000, 42).probs
    b = sample_shots([0.2, 0.3, 0.5], 1000, 42).probs
    assert np.array_equal(a, b)
    assert abs(a.sum() - 1) == 0


def test_shots_unnormalized_uses_binomials():
    p = sample_shots(ProbVector(np.array([1.0, 0.5]), normalized=False), 500, 3)
    assert p.probs[0] == 1.0 and not p.normalized


def test_shots_tv_distance_scaling():
    exact = np.array([0.1, 0.2, 0.3, 0.4])
    tv = {}
    for n in (100, 10000):
        tv[n] = np.mean([0.5 * np.abs(sample_shots(exact, n, s).probs - exact).sum() for s in range(200)])
    # O(n^-1/2): 100x more shots, about 10x smaller distance
    assert 6 < tv[100] / tv[10000] < 16


def test_shots_validation():
    with pytest.raises(ValidationError):
        sample_shots([0.5, 0.5], 0, 0)


def test_request_roundtrip_and_evaluate(rng):
    c = ansatz_u3()
    rho = random_full_rank(2, rng)
    th, be = rng.uniform(0, 6, 3), rng.uniform(0, 6, 3)
    req = SampleRequest("swap_test", (c, c), np.concatenate([th, be]), id=4)
    back = SampleRequest.from_json(req.to_json())
    cache = UnitaryCache()
    a = evaluate_request(rho, back, cache)
    assert np.array_equal(a, evaluate_request(rho, req))
    assert np.allclose(a, swap_test_probs(rho, c, th, c, be).probs)
    shot = SampleRequest("v_basis", c, be, shots=100, seed=9)
    assert np.array_equal(evaluate_request(rho, shot), evaluate_request(rho, shot, cache))


def test_request_validation(rng):
    c = ansatz_u3()
    with pytest.raises(ValidationError):
        SampleRequest.from_json({"family": "nope", "circuit": c.to_json()})
    with pytest.raises(ValidationError):
        evaluate_request(np.eye(4) / 4, SampleRequest("v_basis", c, np.zeros(3)))
