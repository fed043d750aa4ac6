import math

import numpy as np
import pytest

from entroq import kernels
from entroq.circuits import (
    Gate,
    ParamCircuit,
    ansatz_circuit9,
    ansatz_complex_entangled,
    ansatz_two_qubit,
    ansatz_u3,
    apply_circuit,
    compile_batch,
    compile_unitary,
    param_shift_gradient,
)
from entroq.errors import ValidationError

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)
H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
P0, P1 = np.diag([1.0, 0]), np.diag([0, 1.0])


def rot(p, x):
    return math.cos(x / 2) * I2 - 1j * math.sin(x / 2) * p


def on(n, q, g):
    # little-endian: qubit 0 is the rightmost kron factor
    out = np.eye(1)
    for k in reversed(range(n)):
        out = np.kron(out, g if k == q else I2)
    return out


def controlled(n, c, t, g):
    return on(n, c, P0) + on(n, c, P1) @ on(n, t, g)


def reference_unitary(circuit, params):
    n = circuit.n_qubits
    u = np.eye(1 << n, dtype=complex)
    for g in circuit.gates:
        assert not g.controls
        k, q = g.kind, g.targets
        if k in ("RX", "RY", "RZ"):
            m = on(n, q[0], rot({"RX": X, "RY": Y, "RZ": Z}[k], params[g.slots[0]]))
        elif k == "U3":
            th, ph, la = (params[s] for s in g.slots)
            m = on(n, q[0], rot(Z, ph) @ rot(Y, th) @ rot(Z, la))
        elif k == "H":
            m = on(n, q[0], H)
        elif k == "CNOT":
            m = controlled(n, q[0], q[1], X)
        elif k == "CZ":
            m = controlled(n, q[0], q[1], Z)
        elif k == "SWAP":
            m = controlled(n, q[0], q[1], X) @ controlled(n, q[1], q[0], X) @ controlled(n, q[0], q[1], X)
        else:
            raise AssertionError(k)
        u = m @ u
    return u


def unitary_defect(u):
    return np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))


ANSATZE = [ansatz_u3(), ansatz_two_qubit(4), ansatz_circuit9(3, 2), ansatz_circuit9(5, 5), ansatz_complex_entangled(4, 2)]


def test_u3_identity_and_flip():
    assert np.allclose(compile_unitary(ansatz_u3(), [0, 0, 0]), np.eye(2), atol=1e-12)
    u = compile_unitary(ansatz_u3(), [np.pi, 0, 0])
    out = u @ np.array([1, 0])
    assert abs(abs(out[1]) - 1) < 1e-12


@pytest.mark.parametrize("circ", ANSATZE, ids=lambda c: c.name)
def test_ansatz_matches_reference_and_is_unitary(circ, rng):
    for _ in range(100):
        p = rng.uniform(0, 2 * np.pi, circ.n_params)
        u = compile_unitary(circ, p)
        assert unitary_defect(u) <= 1e-10
    assert np.allclose(u, reference_unitary(circ, p), atol=1e-12)


def test_two_qubit_zero_params():
    c = ansatz_two_qubit(3)
    assert c.n_params == 18
    cnot = compile_unitary(ParamCircuit(2, (Gate("CNOT", (0, 1)),), 0))
    assert np.allclose(compile_unitary(c, np.zeros(18)), np.linalg.matrix_power(cnot, 3))
    assert np.allclose(compile_unitary(ansatz_two_qubit(4), np.zeros(24)), np.eye(4))


def test_circuit9_structure():
    assert ansatz_circuit9(4, 3).n_params == 12
    u = compile_unitary(ansatz_circuit9(2, 1), np.zeros(2))
    cz = np.diag([1, 1, 1, -1])
    assert np.allclose(u, cz @ np.kron(H, H), atol=1e-14)


def test_complex_entangled_structure():
    c = ansatz_complex_entangled(3, 2)
    assert c.n_params == 18
    u = compile_unitary(ansatz_complex_entangled(3, 1), np.zeros(9))
    ring = controlled(3, 2, 0, X) @ controlled(3, 1, 2, X) @ controlled(3, 0, 1, X)
    assert np.allclose(u, ring)


def test_empty_and_cnot():
    assert np.array_equal(compile_unitary(ParamCircuit(2, (), 0)), np.eye(4))
    u = compile_unitary(ParamCircuit(2, (Gate("CNOT", (0, 1)),), 0))
    perm = np.eye(4)[[0, 3, 2, 1]]
    assert np.array_equal(u.real, perm)


def test_composition_order(rng):
    a, b = ansatz_two_qubit(1), ansatz_circuit9(2, 1)
    pa, pb = rng.uniform(0, 6, a.n_params), rng.uniform(0, 6, b.n_params)
    ab = compile_unitary(a.then(b), np.concatenate([pa, pb]))
    assert np.allclose(ab, compile_unitary(b, pb) @ compile_unitary(a, pa), atol=1e-12)


def test_controlled_gates_against_reference(rng):
    c = ParamCircuit(3, (Gate("RY", (1,), (0,), (0,)), Gate("SWAP", (1, 2), (), (0,)), Gate("U3", (2,), (1, 2, 3), (1,))), 4)
    p = rng.uniform(0, 6, 4)
    u = compile_unitary(c, p)
    ref = controlled(3, 0, 1, rot(Y, p[0]))
    sw = reference_unitary(ParamCircuit(2, (Gate("SWAP", (0, 1)),), 0), [])
    ref = (np.kron(sw, P1) + np.kron(np.eye(4), P0)) @ ref
    ref = controlled(3, 1, 2, rot(Z, p[2]) @ rot(Y, p[1]) @ rot(Z, p[3])) @ ref
    assert np.allclose(u, ref, atol=1e-12)


def test_batch_matches_single(rng):
    c = ansatz_complex_entangled(3, 2)
    ps = rng.uniform(0, 6, (5, c.n_params))
    batch = compile_batch(c, ps)
    for p, u in zip(ps, batch):
        assert np.allclose(u, compile_unitary(c, p), atol=1e-13)
    v = rng.standard_normal((8, 2)) + 0j
    assert np.allclose(apply_circuit(c, ps[0], v), batch[0] @ v, atol=1e-12)


def test_gate_kernel_variants_agree(rng):
    c = ansatz_complex_entangled(3, 2)
    low = c.lowered
    from entroq.circuits import _gate_mats

    mats = _gate_mats(low, rng.uniform(0, 6, (3, c.n_params)))
    s0 = rng.standard_normal((3, 8, 4)) + 1j * rng.standard_normal((3, 8, 4))
    a = kernels.apply_gates_numba(s0.copy(), mats, low.targets, low.partners, low.ctrls)
    b = kernels.apply_gates_numpy(s0.copy(), mats, low.targets, low.partners, low.ctrls)
    assert np.allclose(a, b, atol=1e-13)


def test_wrong_param_length():
    with pytest.raises(ValidationError):
        compile_unitary(ansatz_u3(), [0.1, 0.2])


def test_gate_validation():
    with pytest.raises(ValidationError):
        Gate("CNOT", (1, 1))
    with pytest.raises(ValidationError):
        ParamCircuit(2, (Gate("RX", (2,), (0,)),), 1)
    with pytest.raises(ValidationError):
        ParamCircuit(1, (Gate("RX", (0,), (3,)),), 1)
    with pytest.raises(ValidationError):
        Gate("FOO", (0,))


def test_json_roundtrip():
    c = ansatz_complex_entangled(3, 1)
    back = ParamCircuit.from_json(c.to_json())
    assert back == c
    assert c.to_json()["gates"][0] == {"kind": "U3", "targets": [0], "slots": [0, 1, 2]}


def test_shift_constant_fn():
    assert np.array_equal(param_shift_gradient(lambda p: 3.0, ansatz_u3(), [0.1, 0.2, 0.3]), np.zeros(3))


def test_shift_cos():
    c = ParamCircuit(1, (Gate("RY", (0,), (0,)),), 1)

    def fn(p):
        psi = compile_unitary(c, p) @ np.array([1, 0])
        return float(np.real(psi.conj() @ Z @ psi))

    assert abs(param_shift_gradient(fn, c, [0.7])[0] + math.sin(0.7)) < 1e-12


def test_shift_matches_finite_difference(rng):
    for _ in range(20):
        c = ansatz_two_qubit(2)
        obs = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        obs = obs + obs.conj().T
        psi0 = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        psi0 /= np.linalg.norm(psi0)

        def fn(p):
            psi = compile_unitary(c, p) @ psi0
            return float(np.real(psi.conj() @ obs @ psi))

        p = rng.uniform(0, 2 * np.pi, c.n_params)
        h = 1e-5
        fd = np.array([(fn(p + h * e) - fn(p - h * e)) / (2 * h) for e in np.eye(c.n_params)])
        assert np.max(np.abs(param_shift_gradient(fn, c, p) - fd)) <= 1e-6


def test_four_term_rule_exact_for_half_frequency(rng):
    # Re tr[U], U = RY(x): cos(x/2) has frequency 1/2
    fn = lambda p: math.cos(p[0] / 2) + math.sin(p[0])
    x = 0.9
    got = param_shift_gradient(fn, None, [x], rule="four_term")[0]
    assert abs(got - (-0.5 * math.sin(x / 2) + math.cos(x))) < 1e-12
