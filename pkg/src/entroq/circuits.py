"""Parameterized circuits, the four ansatz families, compilation and parameter shift.

Conventions, fixed library-wide:

* little-endian qubits: qubit ``k`` is bit ``k`` of a basis index, so on two
  qubits CNOT(0 -> 1) swaps indices 1 and 3;
* rotations are ``R_P(theta) = exp(-i theta P / 2)``;
* ``U3(theta, phi, lam) = RZ(phi) RY(theta) RZ(lam)`` (determinant one).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import math
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import ValidationError

GATE_KINDS = ("RX", "RY", "RZ", "U3", "H", "X", "Z", "CNOT", "CZ", "SWAP")
_ARITY = {"RX": 1, "RY": 1, "RZ": 1, "U3": 1, "H": 1, "X": 1, "Z": 1, "CNOT": 2, "CZ": 2, "SWAP": 2}
_NPARAM = {"RX": 1, "RY": 1, "RZ": 1, "U3": 3}

# primitive op codes understood by the lowering step
_P_RX, _P_RY, _P_RZ, _P_H, _P_X, _P_Z, _P_SWAP = range(7)


@dataclass(frozen=True)
class Gate:
    """One gate.  ``controls`` adds extra control qubits to any kind."""

    kind: str
    targets: tuple
    slots: tuple = ()
    controls: tuple = ()

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValidationError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "targets", tuple(int(q) for q in self.targets))
        object.__setattr__(self, "slots", tuple(int(s) for s in self.slots))
        object.__setattr__(self, "controls", tuple(int(q) for q in self.controls))
        if len(self.targets) != _ARITY[self.kind]:
            raise ValidationError(f"{self.kind} takes {_ARITY[self.kind]} target(s), got {self.targets}")
        if len(self.slots) != _NPARAM.get(self.kind, 0):
            raise ValidationError(f"{self.kind} takes {_NPARAM.get(self.kind, 0)} parameter slot(s)")
        qubits = self.targets + self.controls
        if len(set(qubits)) != len(qubits):
            raise ValidationError(f"gate qubits must be distinct: {qubits}")

    def to_json(self) -> dict:
        d = {"kind": self.kind, "targets": list(self.targets), "slots": list(self.slots)}
        if self.controls:
            d["controls"] = list(self.controls)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "Gate":
        try:
            return cls(obj["kind"], tuple(obj["targets"]), tuple(obj.get("slots", ())), tuple(obj.get("controls", ())))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed gate JSON: {exc}") from exc


@dataclass(frozen=True, eq=False)
class _Lowered:
    kinds: np.ndarray
    targets: np.ndarray
    partners: np.ndarray
    ctrls: np.ndarray
    slots: np.ndarray

    @cached_property
    def templates(self):
        return _templates(self)


@dataclass(frozen=True)
class ParamCircuit:
    n_qubits: int
    gates: tuple
    n_params: int
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.n_qubits < 1:
            raise ValidationError("a circuit needs at least one qubit")
        for g in self.gates:
            if any(q < 0 or q >= self.n_qubits for q in g.targets + g.controls):
                raise ValidationError(f"gate {g} addresses a qubit outside 0..{self.n_qubits - 1}")
            if any(s < 0 or s >= self.n_params for s in g.slots):
                raise ValidationError(f"gate {g} uses a slot outside 0..{self.n_params - 1}")

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    @cached_property
    def lowered(self) -> _Lowered:
        ops = []
        for g in self.gates:
            cm = 0
            for q in g.controls:
                cm |= 1 << q
            k = g.kind
            if k == "U3":
                q = g.targets[0]
                theta, phi, lam = g.slots
                ops += [(_P_RZ, q, -1, cm, lam), (_P_RY, q, -1, cm, theta), (_P_RZ, q, -1, cm, phi)]
            elif k in ("RX", "RY", "RZ"):
                ops.append(({"RX": _P_RX, "RY": _P_RY, "RZ": _P_RZ}[k], g.targets[0], -1, cm, g.slots[0]))
            elif k in ("H", "X", "Z"):
                ops.append(({"H": _P_H, "X": _P_X, "Z": _P_Z}[k], g.targets[0], -1, cm, -1))
            elif k == "CNOT":
                ops.append((_P_X, g.targets[1], -1, cm | (1 << g.targets[0]), -1))
            elif k == "CZ":
                ops.append((_P_Z, g.targets[1], -1, cm | (1 << g.targets[0]), -1))
            else:
                ops.append((_P_SWAP, g.targets[0], g.targets[1], cm, -1))
        if not ops:
            z = np.zeros(0, dtype=np.int64)
            return _Lowered(z, z, z, z, z)
        arr = np.array(ops, dtype=np.int64)
        return _Lowered(*(np.ascontiguousarray(arr[:, i]) for i in range(5)))

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "n_qubits": self.n_qubits,
            "n_params": self.n_params,
            "gates": [g.to_json() for g in self.gates],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ParamCircuit":
        try:
            gates = tuple(Gate.from_json(g) for g in obj["gates"])
            return cls(int(obj["n_qubits"]), gates, int(obj["n_params"]), str(obj.get("name", "")))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed circuit JSON: {exc}") from exc

    def then(self, other: "ParamCircuit") -> "ParamCircuit":
        """This circuit followed by ``other``; ``other``'s slots are offset past ours."""
        if other.n_qubits != self.n_qubits:
            raise ValidationError("composed circuits must act on the same register")
        shifted = tuple(Gate(g.kind, g.targets, tuple(s + self.n_params for s in g.slots), g.controls) for g in other.gates)
        return ParamCircuit(self.n_qubits, self.gates + shifted, self.n_params + other.n_params)

    def embed(self, n_total: int, qubit_map: Sequence[int], controls: Sequence[int] = (), slot_offset: int = 0,
              n_params: int | None = None) -> "ParamCircuit":
        """Relabel qubits into a larger register, optionally adding controls to every gate."""
        qm = [int(q) for q in qubit_map]
        if len(qm) != self.n_qubits:
            raise ValidationError("qubit_map must name one target qubit per circuit qubit")
        ctrl = tuple(int(c) for c in controls)
        gates = tuple(
            Gate(g.kind, tuple(qm[q] for q in g.targets), tuple(s + slot_offset for s in g.slots),
                 tuple(qm[q] for q in g.controls) + ctrl)
            for g in self.gates
        )
        return ParamCircuit(n_total, gates, self.n_params + slot_offset if n_params is None else n_params)


def concat(n_qubits: int, parts: Sequence[ParamCircuit], n_params: int, name: str = "") -> ParamCircuit:
    gates = []
    for p in parts:
        gates.extend(p.gates)
    return ParamCircuit(n_qubits, tuple(gates), n_params, name)


# Ansatz families.  Each carries a versioned name so serialized runs pin structure.


def ansatz_u3() -> ParamCircuit:
    """Single-qubit U3(theta, phi, lam) with slots (0, 1, 2)."""
    return ParamCircuit(1, (Gate("U3", (0,), (0, 1, 2)),), 3, "u3/v1")


def ansatz_two_qubit(layers: int = 4) -> ParamCircuit:
    """Per layer: RX, RY, RZ on qubit 0, the same on qubit 1, then CNOT(0 -> 1)."""
    if layers < 1:
        raise ValidationError("layers must be at least 1")
    gates, s = [], 0
    for _ in range(layers):
        for q in (0, 1):
            for kind in ("RX", "RY", "RZ"):
                gates.append(Gate(kind, (q,), (s,)))
                s += 1
        gates.append(Gate("CNOT", (0, 1)))
    return ParamCircuit(2, tuple(gates), s, f"two_qubit/v1/L{layers}")


def ansatz_circuit9(n_qubits: int, layers: int = 1) -> ParamCircuit:
    """Per layer: H on every qubit, CZ(i, i+1) chain, RX on every qubit."""
    if n_qubits < 2 or layers < 1:
        raise ValidationError("circuit9 needs n_qubits >= 2 and layers >= 1")
    gates, s = [], 0
    for _ in range(layers):
        gates += [Gate("H", (q,)) for q in range(n_qubits)]
        gates += [Gate("CZ", (q, q + 1)) for q in range(n_qubits - 1)]
        for q in range(n_qubits):
            gates.append(Gate("RX", (q,), (s,)))
            s += 1
    return ParamCircuit(n_qubits, tuple(gates), s, f"circuit9/v1/n{n_qubits}/L{layers}")


def ansatz_complex_entangled(n_qubits: int, layers: int = 2) -> ParamCircuit:
    """Per layer: U3 on every qubit then the CNOT ring 0->1, ..., (n-1)->0."""
    if n_qubits < 2 or layers < 1:
        raise ValidationError("complex_entangled needs n_qubits >= 2 and layers >= 1")
    gates, s = [], 0
    for _ in range(layers):
        for q in range(n_qubits):
            gates.append(Gate("U3", (q,), (s, s + 1, s + 2)))
            s += 3
        gates += [Gate("CNOT", (q, (q + 1) % n_qubits)) for q in range(n_qubits)]
    return ParamCircuit(n_qubits, tuple(gates), s, f"complex_entangled/v1/n{n_qubits}/L{layers}")


def default_ansatz(n_qubits: int) -> ParamCircuit:
    if n_qubits == 1:
        return ansatz_u3()
    if n_qubits == 2:
        return ansatz_two_qubit(4)
    return ansatz_complex_entangled(n_qubits, 2)


ANSATZ_BUILDERS = {
    "u3": lambda n, layers: ansatz_u3(),
    "two_qubit": lambda n, layers: ansatz_two_qubit(layers),
    "circuit9": ansatz_circuit9,
    "complex_entangled": ansatz_complex_entangled,
}


# Compilation

_SQ2 = 1.0 / math.sqrt(2.0)


def _templates(low: _Lowered):
    """Per-op constant templates with mat = a0 + cos(x/2) ac + sin(x/2) as."""
    ng = low.kinds.shape[0]
    a0 = np.zeros((ng, 2, 2), dtype=np.complex128)
    ac = np.zeros((ng, 2, 2), dtype=np.complex128)
    a_s = np.zeros((ng, 2, 2), dtype=np.complex128)
    eye = np.eye(2)
    sin_part = {
        _P_RX: np.array([[0, -1j], [-1j, 0]]),
        _P_RY: np.array([[0, -1], [1, 0]], dtype=np.complex128),
        _P_RZ: np.array([[-1j, 0], [0, 1j]]),
    }
    fixed = {
        _P_H: np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]]),
        _P_X: np.array([[0.0, 1.0], [1.0, 0.0]]),
        _P_Z: np.array([[1.0, 0.0], [0.0, -1.0]]),
    }
    for g, k in enumerate(low.kinds):
        if k in sin_part:
            ac[g] = eye
            a_s[g] = sin_part[k]
        elif k in fixed:
            a0[g] = fixed[k]
    return a0, ac, a_s


def _gate_mats(low: _Lowered, params: np.ndarray) -> np.ndarray:
    """(B, G, 2, 2) gate matrices for a batch of parameter vectors."""
    a0, ac, a_s = low.templates
    nb = params.shape[0]
    if params.shape[1]:
        ang = np.where(low.slots >= 0, params[:, np.maximum(low.slots, 0)], 0.0)
    else:
        ang = np.zeros((nb, low.kinds.shape[0]))
    half = 0.5 * ang
    return a0 + np.cos(half)[:, :, None, None] * ac + np.sin(half)[:, :, None, None] * a_s


def _param_batch(circuit: ParamCircuit, params) -> np.ndarray:
    p = np.asarray(params, dtype=float)
    if p.ndim == 1:
        p = p[None, :]
    if p.ndim != 2 or p.shape[1] != circuit.n_params:
        raise ValidationError(f"expected {circuit.n_params} parameters, got shape {np.shape(params)}")
    return p


def apply_circuit(circuit: ParamCircuit, params, states: np.ndarray) -> np.ndarray:
    """Apply the circuit to the columns of ``states`` (shape (dim, k) or (B, dim, k)); returns a new array."""
    p = _param_batch(circuit, params)
    st = np.array(states, dtype=np.complex128, copy=True)
    squeeze = st.ndim == 2
    if squeeze:
        st = np.broadcast_to(st, (p.shape[0],) + st.shape).copy()
    elif st.ndim == 1:
        raise ValidationError("states must hold column vectors")
    if st.shape[1] != circuit.dim:
        raise ValidationError(f"state dimension {st.shape[1]} does not match circuit dimension {circuit.dim}")
    low = circuit.lowered
    if low.kinds.size:
        kernels.apply_gates(st, _gate_mats(low, p), low.targets, low.partners, low.ctrls)
    return st[0] if squeeze and p.shape[0] == 1 else st


def compile_batch(circuit: ParamCircuit, params) -> np.ndarray:
    """Unitaries for a (B, n_params) parameter batch, shape (B, dim, dim)."""
    p = _param_batch(circuit, params)
    eye = np.broadcast_to(np.eye(circuit.dim, dtype=np.complex128), (p.shape[0], circuit.dim, circuit.dim)).copy()
    low = circuit.lowered
    if low.kinds.size:
        kernels.apply_gates(eye, _gate_mats(low, p), low.targets, low.partners, low.ctrls)
    return eye


def compile_unitary(circuit: ParamCircuit, params=()) -> np.ndarray:
    """The circuit's unitary: product of gate matrices, later gates on the left."""
    p = np.asarray(params, dtype=float).reshape(-1)
    if p.size != circuit.n_params:
        raise ValidationError(f"expected {circuit.n_params} parameters, got {p.size}")
    return compile_batch(circuit, p[None, :])[0]


# Parameter shift
#
# A single rotation enters an expectation value with frequency 1 (two-term rule
# exact).  Inside a controlled block it also enters with frequency 1/2, e.g.
# through Re tr[rho U V]; the four-term rule below is exact for {1/2, 1}.

_C_PLUS = (math.sqrt(2.0) + 1.0) / (4.0 * math.sqrt(2.0))
_C_MINUS = (math.sqrt(2.0) - 1.0) / (4.0 * math.sqrt(2.0))
SHIFT_RULES = {
    "two_term": ((math.pi / 2, 0.5),),
    "four_term": ((math.pi / 2, _C_PLUS), (3 * math.pi / 2, -_C_MINUS)),
}


def param_shift_gradient(scalar_fn: Callable[[np.ndarray], float], circuit: ParamCircuit | None, params,
                         rule: str = "two_term") -> np.ndarray:
    """Gradient of ``scalar_fn`` by shifted evaluations.

    ``"two_term"`` is (f(x + pi/2 e_k) - f(x - pi/2 e_k)) / 2.  ``"four_term"``
    stays exact when a parameter also appears at half frequency, as in
    controlled rotations.
    """
    x = np.asarray(params, dtype=float).reshape(-1)
    if circuit is not None and x.size != circuit.n_params:
        raise ValidationError(f"expected {circuit.n_params} parameters, got {x.size}")
    try:
        terms = SHIFT_RULES[rule]
    except KeyError:
        raise ValidationError(f"unknown shift rule {rule!r}") from None
    g = np.zeros_like(x)
    for k in range(x.size):
        acc = 0.0
        for shift, coef in terms:
            xp = x.copy()
            xp[k] += shift
            xm = x.copy()
            xm[k] -= shift
            acc += coef * (scalar_fn(xp) - scalar_fn(xm))
        g[k] = acc
    return g


def shifted_params(params, rule: str = "two_term"):
    """(batch, coefs) with batch[k*2r + 2i] = x + s_i e_k and batch[.. + 1] = x - s_i e_k."""
    x = np.asarray(params, dtype=float).reshape(-1)
    terms = SHIFT_RULES[rule]
    rows, coefs = [], []
    for k in range(x.size):
        for shift, coef in terms:
            for sgn in (1.0, -1.0):
                xp = x.copy()
                xp[k] += sgn * shift
                rows.append(xp)
                coefs.append(sgn * coef)
    return np.array(rows).reshape(-1, x.size), np.array(coefs)
