"""Density matrices, pure states, random generators and Pauli primitives.

Random states use numpy's PCG64 generator (``numpy.random.default_rng``),
a 64-bit permuted congruential generator whose output stream is identical
across platforms for a given seed and numpy release.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import json
import math
import threading

import numpy as np

from .errors import ValidationError
from .linalg import (
    HERMITIAN_TOL,
    NEGATIVE_TOL,
    SpectralDecomposition,
    _support_violation,
    as_matrix,
    hermitian_eig,
    hermiticity_defect,
    matrix_from_json,
    matrix_to_json,
)

TRACE_TOL = 1e-10
NORM_TOL = 1e-12

I2 = np.eye(2, dtype=np.complex128)
X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
PAULIS = (I2, X, Y, Z)


@dataclass(frozen=True)
class Violation:
    invariant: str
    defect: float

    def __str__(self) -> str:
        return f"{self.invariant} violation (defect {self.defect:.3g})"


class StateValidationError(ValidationError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


def _n_qubits(dim: int) -> int | None:
    n = int(round(math.log2(dim))) if dim > 0 else 0
    return n if (1 << n) == dim else None


class DensityMatrix:
    """A validated quantum state.

    ``relaxed_trace=True`` admits PSD operators with arbitrary trace, such as
    ``I_A kron sigma_B``.  The spectral decomposition is computed on first use
    and cached; a lock makes that initialization happen exactly once.
    """

    __slots__ = ("_matrix", "relaxed_trace", "_spectral", "_lock")

    def __init__(self, matrix, relaxed_trace: bool = False, _checked: bool = False):
        a = np.array(matrix, dtype=np.complex128, copy=True)
        if not _checked:
            problems = state_violations(a, relaxed_trace=relaxed_trace)
            if problems:
                raise StateValidationError(problems)
        a = 0.5 * (a + a.conj().T)
        a.setflags(write=False)
        self._matrix = a
        self.relaxed_trace = relaxed_trace
        self._spectral = None
        self._lock = threading.Lock()

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def dim(self) -> int:
        return self._matrix.shape[0]

    @property
    def n_qubits(self) -> int | None:
        return _n_qubits(self.dim)

    @property
    def spectral(self) -> SpectralDecomposition:
        if self._spectral is None:
            with self._lock:
                if self._spectral is None:
                    self._spectral = hermitian_eig(self._matrix)
        return self._spectral

    @property
    def trace(self) -> float:
        return float(np.trace(self._matrix).real)

    def rank(self) -> int:
        return self.spectral.rank()

    def purity(self) -> float:
        return float(np.real(np.vdot(self._matrix, self._matrix)))

    def __array__(self, dtype=None, copy=None):
        return self._matrix if dtype is None else self._matrix.astype(dtype)

    def __repr__(self) -> str:
        return f"DensityMatrix(dim={self.dim}, trace={self.trace:.6g})"

    def to_json(self) -> dict:
        return matrix_to_json(self._matrix)

    @classmethod
    def from_json(cls, obj: dict, relaxed_trace: bool = False) -> "DensityMatrix":
        return validate_state(matrix_from_json(obj, hermitian=False), relaxed_trace=relaxed_trace)


@dataclass(frozen=True)
class PureState:
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        if _n_qubits(a.size) is None:
            raise ValidationError(f"pure state length {a.size} is not a power of two")
        norm = float(np.linalg.norm(a))
        if abs(norm - 1.0) > NORM_TOL:
            raise ValidationError(f"pure state is not normalized (norm {norm:.15g})")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @property
    def n(self) -> int:
        return _n_qubits(self.amplitudes.size)

    def density(self) -> DensityMatrix:
        a = self.amplitudes
        return DensityMatrix(np.outer(a, a.conj()))

    def to_json(self) -> dict:
        return {"n": self.n, "re": self.amplitudes.real.tolist(), "im": self.amplitudes.imag.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "PureState":
        try:
            amp = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj.get("im", 0.0), dtype=float)
            n = int(obj["n"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed pure-state JSON: {exc}") from exc
        if amp.size != 1 << n:
            raise ValidationError(f"pure state has {amp.size} amplitudes, expected {1 << n}")
        return cls(amp)


def state_violations(m, relaxed_trace: bool = False) -> list[Violation]:
    """Every density-matrix invariant that ``m`` breaks, with the measured defect."""
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        return [Violation("square", float(abs(a.shape[0] - a.shape[1])))]
    out = []
    herm = hermiticity_defect(a)
    if herm > HERMITIAN_TOL:
        out.append(Violation("Hermiticity", herm))
    w = np.linalg.eigvalsh(0.5 * (a + a.conj().T))
    if w.size and w[0] < -NEGATIVE_TOL:
        out.append(Violation("PSD", float(-w[0])))
    if not relaxed_trace:
        tr = float(np.trace(a).real)
        if abs(tr - 1.0) > TRACE_TOL:
            out.append(Violation("trace", abs(tr - 1.0)))
    return out


def validate_state(m, relaxed_trace: bool = False) -> DensityMatrix:
    """Return ``m`` as a :class:`DensityMatrix` or raise with every violation listed."""
    if isinstance(m, DensityMatrix):
        if m.relaxed_trace and not relaxed_trace:
            problems = state_violations(m.matrix)
            if problems:
                raise StateValidationError(problems)
            return DensityMatrix(m.matrix, _checked=True)
        return m
    problems = state_violations(m, relaxed_trace=relaxed_trace)
    if problems:
        raise StateValidationError(problems)
    return DensityMatrix(m, relaxed_trace=relaxed_trace, _checked=True)


def as_state(m, relaxed_trace: bool = False) -> DensityMatrix:
    if isinstance(m, DensityMatrix):
        return m
    return validate_state(m, relaxed_trace=relaxed_trace)


def random_pure_state(n_qubits: int, seed) -> PureState:
    rng = np.random.default_rng(seed)
    d = 1 << int(n_qubits)
    a = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return PureState(a / np.linalg.norm(a))


def random_mixed_state(n_qubits: int, rank: int, seed) -> DensityMatrix:
    """Marginal of a Gaussian random pure state on system plus a rank-sized ancilla."""
    if n_qubits < 1:
        raise ValidationError(f"n_qubits must be positive, got {n_qubits}")
    d = 1 << int(n_qubits)
    if not (1 <= rank <= d):
        raise ValidationError(f"rank must lie in [1, {d}], got {rank}")
    rng = np.random.default_rng(seed)
    psi = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    psi /= np.linalg.norm(psi)
    rho = psi @ psi.conj().T
    return DensityMatrix(0.5 * (rho + rho.conj().T), _checked=True)


def random_marginal_state(n_qubits: int, n_reference: int, seed) -> DensityMatrix:
    """Marginal on S of a Gaussian random pure state on S (n_qubits) and a reference R.

    A larger reference makes the marginal more mixed; rank is min(2^n, 2^n_reference).
    """
    if n_reference < 0:
        raise ValidationError(f"n_reference must be non-negative, got {n_reference}")
    d, dr = 1 << int(n_qubits), 1 << int(n_reference)
    rng = np.random.default_rng(seed)
    psi = rng.standard_normal((d, dr)) + 1j * rng.standard_normal((d, dr))
    psi /= np.linalg.norm(psi)
    rho = psi @ psi.conj().T
    return DensityMatrix(0.5 * (rho + rho.conj().T), _checked=True)


def seeded_pair(n_qubits: int, rho_seed: int, sigma_seed: int | None = None, n_reference: int = 3):
    """(rho, sigma) marginals drawn with seeds ``rho_seed`` and ``sigma_seed`` (default rho_seed + 1).

    Equal seeds give equal states.
    """
    if sigma_seed is None:
        sigma_seed = rho_seed + 1
    return (random_marginal_state(n_qubits, n_reference, rho_seed),
            random_marginal_state(n_qubits, n_reference, sigma_seed))


def support_contained(rho, sigma) -> bool:
    """True iff supp(rho) lies inside supp(sigma), within 1e-10 in operator norm."""
    rho = as_state(rho, relaxed_trace=True)
    sigma = as_state(sigma, relaxed_trace=True)
    if rho.dim != sigma.dim:
        raise ValidationError(f"dimension mismatch {rho.dim} vs {sigma.dim}")
    return _support_violation(rho.spectral, sigma.spectral, rho.matrix) <= 1e-10


def maximally_entangled(n_qubits: int) -> PureState:
    """(1/sqrt d) sum_i |i>_A |i>_A' with A the high (most significant) register."""
    d = 1 << int(n_qubits)
    a = np.zeros(d * d, dtype=np.complex128)
    a[np.arange(d) * d + np.arange(d)] = 1.0 / math.sqrt(d)
    return PureState(a)


def basis_state(n_qubits: int, index: int) -> DensityMatrix:
    d = 1 << int(n_qubits)
    m = np.zeros((d, d), dtype=np.complex128)
    m[index, index] = 1.0
    return DensityMatrix(m, _checked=True)


def load_state(path, relaxed_trace: bool = False) -> DensityMatrix:
    """Load a matrix JSON file, or a pure-state JSON file (``{"n", "re", "im"}``)."""
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if "dim" in obj:
        return DensityMatrix.from_json(obj, relaxed_trace=relaxed_trace)
    return PureState.from_json(obj).density()


def save_state(path, state) -> None:
    obj = state.to_json() if hasattr(state, "to_json") else matrix_to_json(state)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh)
