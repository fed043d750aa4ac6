"""The three probability families behind the variational loss.

For a basis index i:

* ``v_basis``:        p_beta(i)  = <i| V rho V^dag |i>         (hosted by the rho device)
* ``u_dagger_basis``: p_theta(i) = <i| U^dag sigma U |i>       (hosted by the sigma device)
* ``swap_test``:      p_chi(i)   = (1 + Re <i| V rho U |i>) / 2  (hosted by the rho device)

``p_chi`` is the probability of reading the ancilla as 0 in an ancilla-controlled
SWAP test.  :func:`chi_circuit` builds that circuit and :func:`swap_test_probs`
can simulate it; the training loop uses the closed form, which the tests pin
to the circuit to 1e-10.

Register layout of the SWAP test on ``n``-qubit states: system S on qubits
``0..n-1``, the |i> register R on ``n..2n-1`` and the ancilla on qubit ``2n``.
Gate order: H(anc), controlled-V on S, controlled-U on R, controlled-SWAP of
each (S_q, R_q) pair, H(anc).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .circuits import Gate, ParamCircuit, apply_circuit, compile_unitary
from .errors import ValidationError

FAMILIES = ("v_basis", "u_dagger_basis", "swap_test")
# which hosted state a family reads
FAMILY_STATE = {"v_basis": "rho", "u_dagger_basis": "sigma", "swap_test": "rho"}
FAMILY_CODE = {"v_basis": 0, "u_dagger_basis": 1, "swap_test": 2}


@dataclass(frozen=True)
class ProbVector:
    """Probabilities with the number of shots behind them (0 = exact).

    ``normalized`` is False for the SWAP-test family, whose entries are one
    Bernoulli parameter per basis input rather than a single distribution.
    """

    probs: np.ndarray
    shots: int = 0
    normalized: bool = True

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)


def _mat(x) -> np.ndarray:
    return np.asarray(x.matrix if hasattr(x, "matrix") else x, dtype=np.complex128)


def _check_dims(state: np.ndarray, circuit: ParamCircuit):
    if state.shape != (circuit.dim, circuit.dim):
        raise ValidationError(f"state of shape {state.shape} does not fit a {circuit.n_qubits}-qubit circuit")


def _clip(p: np.ndarray) -> np.ndarray:
    return np.clip(p, 0.0, 1.0)


def v_basis_probs(rho: np.ndarray, v: np.ndarray) -> np.ndarray:
    return _clip(np.real(np.einsum("ij,jk,ik->i", v, rho, v.conj())))


def u_dagger_probs(sigma: np.ndarray, u: np.ndarray) -> np.ndarray:
    return _clip(np.real(np.einsum("ji,jk,ki->i", u.conj(), sigma, u)))


def swap_contract_probs(rho: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return _clip(0.5 * (1.0 + np.real(np.einsum("ij,jk,ki->i", v, rho, u))))


def prob_v_basis(rho, V: ParamCircuit, beta) -> ProbVector:
    """Diagonal of V rho V^dag in the computational basis."""
    r = _mat(rho)
    _check_dims(r, V)
    return ProbVector(v_basis_probs(r, compile_unitary(V, beta)))


def prob_u_dagger_basis(sigma, U: ParamCircuit, theta) -> ProbVector:
    """Diagonal of U^dag sigma U in the computational basis."""
    s = _mat(sigma)
    _check_dims(s, U)
    return ProbVector(u_dagger_probs(s, compile_unitary(U, theta)))


def chi_circuit(U: ParamCircuit, V: ParamCircuit) -> ParamCircuit:
    """The SWAP-test circuit; parameters are theta (for U) followed by beta (for V)."""
    if U.n_qubits != V.n_qubits:
        raise ValidationError("U and V must act on the same number of qubits")
    n = U.n_qubits
    anc = 2 * n
    total = 2 * n + 1
    gates = [Gate("H", (anc,))]
    gates += V.embed(total, range(n), controls=(anc,), slot_offset=U.n_params).gates
    gates += U.embed(total, range(n, 2 * n), controls=(anc,)).gates
    gates += [Gate("SWAP", (q, n + q), (), (anc,)) for q in range(n)]
    gates.append(Gate("H", (anc,)))
    return ParamCircuit(total, tuple(gates), U.n_params + V.n_params, "chi/v1")


def _ancilla_zero_prob(circuit: ParamCircuit, params, rho_in: np.ndarray, d_rest: int) -> float:
    w = compile_unitary(circuit, params)
    out = w @ rho_in @ w.conj().T
    # the ancilla is the most significant qubit: indices below d_rest have it at 0
    return float(np.real(np.trace(out[:d_rest, :d_rest])))


def swap_test_probs(rho, U: ParamCircuit, theta, V: ParamCircuit, beta, method: str = "contract") -> ProbVector:
    """p_chi(i) for every basis input i.

    ``method="contract"`` evaluates (1 + Re <i|V rho U|i>)/2 directly;
    ``method="circuit"`` evolves the full density matrix through :func:`chi_circuit`.
    """
    r = _mat(rho)
    _check_dims(r, U)
    _check_dims(r, V)
    if method == "contract":
        return ProbVector(swap_contract_probs(r, compile_unitary(U, theta), compile_unitary(V, beta)), normalized=False)
    if method != "circuit":
        raise ValidationError(f"unknown method {method!r}")
    chi = chi_circuit(U, V)
    params = np.concatenate([np.asarray(theta, float).reshape(-1), np.asarray(beta, float).reshape(-1)])
    d = r.shape[0]
    out = np.empty(d)
    for i in range(d):
        ket = np.zeros((d, d))
        ket[i, i] = 1.0
        # kron order: ancilla, R, S
        rho_in = np.kron(np.diag([1.0, 0.0]), np.kron(ket, r))
        out[i] = _ancilla_zero_prob(chi, params, rho_in, d * d)
    return ProbVector(_clip(out), normalized=False)


def extended_swap_circuit(pairs: Sequence[tuple], n_qubits: int) -> ParamCircuit:
    """Order-p test estimating Re tr[rho U_1|j_1><j_1|V_1 ... U_p|j_p><j_p|V_p].

    ``pairs`` is a sequence of (U_k, V_k) circuits.  Registers: S (qubits
    0..n-1) holds rho and R_k (block k) holds |j_k>; the ancilla is last.  S
    gets V_p, R_1 gets U_1, R_k gets U_k then V_{k-1}; a chain of controlled
    swaps (S, R_1), (R_1, R_2), ... then realizes the cyclic shift whose trace
    is the ordered product.  Parameters are concatenated as
    (theta_1, beta_1, ..., theta_p, beta_p).
    """
    p = len(pairs)
    if p < 1:
        raise ValidationError("need at least one (U, V) pair")
    n = n_qubits
    anc = (p + 1) * n
    total = anc + 1
    offsets, off = [], 0
    for u, v in pairs:
        if u.n_qubits != n or v.n_qubits != n:
            raise ValidationError("every U_k, V_k must act on n_qubits qubits")
        offsets.append((off, off + u.n_params))
        off += u.n_params + v.n_params
    reg = lambda k: range(k * n, (k + 1) * n)  # noqa: E731
    gates = [Gate("H", (anc,))]
    gates += pairs[-1][1].embed(total, reg(0), (anc,), offsets[-1][1], off).gates
    for k in range(1, p + 1):
        u = pairs[k - 1][0]
        gates += u.embed(total, reg(k), (anc,), offsets[k - 1][0], off).gates
        if k >= 2:
            gates += pairs[k - 2][1].embed(total, reg(k), (anc,), offsets[k - 2][1], off).gates
    for k in range(p):
        gates += [Gate("SWAP", (k * n + q, (k + 1) * n + q), (), (anc,)) for q in range(n)]
    gates.append(Gate("H", (anc,)))
    return ParamCircuit(total, tuple(gates), off, f"chi_general/v1/p{p}")


def extended_swap_general(rho, unitaries: Sequence[tuple], j_tuple: Sequence[int]) -> float:
    """Theta = Re tr[rho prod_k U_k|j_k><j_k|V_k] from the simulated order-p test.

    ``unitaries`` holds (U_k, theta_k, V_k, beta_k) entries.
    """
    r = _mat(rho)
    if len(unitaries) != len(j_tuple):
        raise ValidationError("one basis index per (U, V) pair is required")
    n = unitaries[0][0].n_qubits
    d = 1 << n
    if r.shape != (d, d):
        raise ValidationError("rho does not match the circuits")
    circ = extended_swap_circuit([(u, v) for u, _, v, _ in unitaries], n)
    params = np.concatenate([np.concatenate([np.asarray(a, float).reshape(-1), np.asarray(b, float).reshape(-1)])
                             for _, a, _, b in unitaries])
    # kron order: ancilla, R_p, ..., R_1, S
    rho_in = r
    for j in j_tuple:
        if not (0 <= j < d):
            raise ValidationError(f"basis index {j} out of range")
        ket = np.zeros((d, d))
        ket[j, j] = 1.0
        rho_in = np.kron(ket, rho_in)
    rho_in = np.kron(np.diag([1.0, 0.0]), rho_in)
    p0 = _ancilla_zero_prob(circ, params, rho_in, d ** (len(j_tuple) + 1))
    return 2.0 * p0 - 1.0


def direct_theta(rho, unitaries: Sequence[tuple], j_tuple: Sequence[int]) -> float:
    """The same Theta by plain matrix arithmetic."""
    r = _mat(rho)
    prod = r.copy()
    d = r.shape[0]
    for (u, a, v, b), j in zip(unitaries, j_tuple):
        proj = np.zeros((d, d))
        proj[j, j] = 1.0
        prod = prod @ compile_unitary(u, a) @ proj @ compile_unitary(v, b)
    return float(np.real(np.trace(prod)))


def sample_shots(p, shots: int, rng_seed, kind: str | None = None) -> ProbVector:
    """Empirical frequencies from ``shots`` draws.

    A normalized vector is sampled as one multinomial; an unnormalized one
    (SWAP-test family) as independent binomials, one per basis input.
    """
    if shots < 1:
        raise ValidationError(f"shots must be at least 1, got {shots}")
    pv = p if isinstance(p, ProbVector) else ProbVector(np.asarray(p, dtype=float))
    if kind is None:
        kind = "multinomial" if pv.normalized else "binomial"
    rng = np.random.default_rng(rng_seed)
    probs = np.clip(np.asarray(pv.probs, dtype=float), 0.0, 1.0)
    if kind == "multinomial":
        counts = rng.multinomial(shots, probs / probs.sum())
        return ProbVector(counts / shots, shots, True)
    if kind == "binomial":
        return ProbVector(rng.binomial(shots, probs) / shots, shots, False)
    raise ValidationError(f"unknown sampling kind {kind!r}")


def apply_to_pure(circuit: ParamCircuit, params, amplitudes) -> np.ndarray:
    a = np.asarray(amplitudes, dtype=np.complex128).reshape(-1, 1)
    return apply_circuit(circuit, params, a)[:, 0]


# Requests: the unit of work shared by the in-process backend and the devices.


@dataclass(frozen=True)
class SampleRequest:
    """One probability-family evaluation.

    ``circuit`` is a :class:`ParamCircuit`, or a (U, V) pair for ``swap_test``
    whose ``params`` are theta followed by beta.  ``shots = 0`` asks for exact
    probabilities; otherwise ``seed`` keys the sampling stream.
    """

    family: str
    circuit: object
    params: np.ndarray
    shots: int = 0
    seed: int = 0
    id: int = 0

    def circuit_json(self):
        if self.family == "swap_test":
            u, v = self.circuit
            return {"U": u.to_json(), "V": v.to_json()}
        return self.circuit.to_json()

    def to_json(self) -> dict:
        return {
            "id": int(self.id),
            "family": self.family,
            "circuit": self.circuit_json(),
            "params": [float(x) for x in np.asarray(self.params, dtype=float).reshape(-1)],
            "shots": int(self.shots),
            "seed": int(self.seed),
        }

    @classmethod
    def from_json(cls, obj: dict, circuit_cache: dict | None = None) -> "SampleRequest":
        family = obj["family"]
        if family not in FAMILIES:
            raise ValidationError(f"unsupported family {family!r}")
        circ = _parse_circuit(family, obj["circuit"], circuit_cache)
        params = np.asarray(obj.get("params", []), dtype=float).reshape(-1)
        return cls(family, circ, params, int(obj.get("shots", 0)), int(obj.get("seed", 0)), int(obj.get("id", 0)))


def _parse_circuit(family: str, obj, cache: dict | None):
    import json as _json

    key = None
    if cache is not None:
        key = (family, _json.dumps(obj, sort_keys=True))
        hit = cache.get(key)
        if hit is not None:
            return hit
    if family == "swap_test":
        circ = (ParamCircuit.from_json(obj["U"]), ParamCircuit.from_json(obj["V"]))
    else:
        circ = ParamCircuit.from_json(obj)
    if cache is not None:
        if len(cache) > 256:
            cache.clear()
        cache[key] = circ
    return circ


class UnitaryCache:
    """Memo of compiled unitaries keyed by (circuit, params); results are bit-identical to recompiling."""

    def __init__(self, maxsize: int = 512):
        self.maxsize = maxsize
        self._data: dict = {}

    def get(self, circuit: ParamCircuit, params: np.ndarray) -> np.ndarray:
        p = np.ascontiguousarray(params, dtype=float)
        key = (id(circuit), p.tobytes())
        hit = self._data.get(key)
        if hit is not None and hit[0] is circuit:
            return hit[1]
        if len(self._data) >= self.maxsize:
            self._data.clear()
        u = compile_unitary(circuit, p)
        # the entry keeps the circuit alive so its id cannot be reused
        self._data[key] = (circuit, u)
        return u


def request_dim(req: SampleRequest) -> int:
    c = req.circuit[0] if req.family == "swap_test" else req.circuit
    return c.dim


def evaluate_request(state, req: SampleRequest, cache: UnitaryCache | None = None) -> np.ndarray:
    """Probabilities requested by ``req`` against the hosted ``state``."""
    s = _mat(state)
    comp = cache.get if cache is not None else compile_unitary
    params = np.asarray(req.params, dtype=float).reshape(-1)
    if req.family == "swap_test":
        u_c, v_c = req.circuit
        _check_dims(s, u_c)
        _check_dims(s, v_c)
        if params.size != u_c.n_params + v_c.n_params:
            raise ValidationError("swap_test params must hold theta then beta")
        p = swap_contract_probs(s, comp(u_c, params[: u_c.n_params]), comp(v_c, params[u_c.n_params:]))
        normalized = False
    elif req.family in ("v_basis", "u_dagger_basis"):
        _check_dims(s, req.circuit)
        if params.size != req.circuit.n_params:
            raise ValidationError(f"expected {req.circuit.n_params} parameters, got {params.size}")
        w = comp(req.circuit, params)
        p = v_basis_probs(s, w) if req.family == "v_basis" else u_dagger_probs(s, w)
        normalized = True
    else:
        raise ValidationError(f"unsupported family {req.family!r}")
    if req.shots > 0:
        p = sample_shots(ProbVector(p, 0, normalized), req.shots, req.seed).probs
    return p
