"""Dense complex linear algebra for small Hermitian problems.

Matrices are plain ``numpy`` arrays of dtype ``complex128``.  Tensor factors
are always listed most-significant first, i.e. in the order they appear in
``kron(A, B, ...)``.
"""
from __future__ import annotations

from dataclasses import dataclass
import json
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import DomainError, ValidationError

HERMITIAN_TOL = 1e-12
# Relative rank threshold: eigenvalues below RANK_TOL * max eigenvalue are zero.
RANK_TOL = 1e-12
# matrix_function: eigenvalues below this are treated as kernel.
KERNEL_TOL = 1e-14
NEGATIVE_TOL = 1e-10
SYLVESTER_RIDGE = 1e-14
MAX_DIM = 64


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues sorted descending and the unitary whose columns are eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T

    def rank(self, rel_tol: float = RANK_TOL) -> int:
        return int(np.count_nonzero(self.support_mask(rel_tol)))

    def support_mask(self, rel_tol: float = RANK_TOL) -> np.ndarray:
        w = self.eigenvalues
        top = max(float(w[0]), 0.0) if w.size else 0.0
        return w > rel_tol * top

    def support_projector(self, rel_tol: float = RANK_TOL) -> np.ndarray:
        v = self.eigenvectors[:, self.support_mask(rel_tol)]
        return v @ v.conj().T


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def hermiticity_defect(m: np.ndarray) -> float:
    if m.shape[0] != m.shape[1]:
        return float("inf")
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def check_hermitian(m, name: str = "matrix", tol: float = HERMITIAN_TOL) -> np.ndarray:
    a = as_matrix(m, name)
    if a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {a.shape}")
    defect = hermiticity_defect(a)
    if defect > tol:
        raise ValidationError(f"{name} is not Hermitian (defect {defect:.3g})")
    return a


def hermitian_eig(m) -> SpectralDecomposition:
    """Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Raises:
        ValidationError: if ``m`` is not square or not Hermitian within 1e-12.
    """
    a = check_hermitian(m)
    if a.shape[0] > MAX_DIM:
        raise ValidationError(f"dimension {a.shape[0]} exceeds {MAX_DIM}")
    a = 0.5 * (a + a.conj().T)
    w, v = kernels.jacobi_eigh(a)
    w.setflags(write=False)
    v.setflags(write=False)
    return SpectralDecomposition(w, v)


def matrix_function(
    m,
    f: Callable[[np.ndarray], np.ndarray],
    zero_policy: str = "skip_kernel",
    spectral: SpectralDecomposition | None = None,
) -> np.ndarray:
    """Apply ``f`` to the spectrum of a PSD Hermitian matrix.

    With ``zero_policy="skip_kernel"`` eigenvalues below 1e-14 are excluded from
    ``f`` and map to 0, which is what ``log`` and negative powers need on
    rank-deficient states.  ``zero_policy="apply"`` evaluates ``f`` everywhere.
    """
    sd = hermitian_eig(m) if spectral is None else spectral
    w = sd.eigenvalues
    if w.size and w[-1] < -NEGATIVE_TOL:
        raise DomainError(f"matrix is not PSD (eigenvalue {w[-1]:.3g})")
    if zero_policy == "skip_kernel":
        keep = w >= KERNEL_TOL
        fw = np.zeros(w.shape)
        fw[keep] = f(w[keep])
    elif zero_policy == "apply":
        fw = f(np.clip(w, 0.0, None))
    else:
        raise ValidationError(f"unknown zero_policy {zero_policy!r}")
    v = sd.eigenvectors
    return (v * fw) @ v.conj().T


def kron(*factors) -> np.ndarray:
    out = np.ones((1, 1), dtype=np.complex128)
    for a in factors:
        out = np.kron(out, np.asarray(a, dtype=np.complex128))
    return out


def partial_trace(m, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every factor not listed in ``keep``.

    ``dims`` lists subsystem dimensions in kron order; ``keep`` indexes into it.
    The kept factors stay in their original order.
    """
    a = as_matrix(m)
    dims = [int(d) for d in dims]
    if any(d < 1 for d in dims):
        raise ValidationError(f"subsystem dimensions must be positive: {dims}")
    total = int(np.prod(dims))
    if a.shape != (total, total):
        raise ValidationError(f"dims {dims} do not match matrix shape {a.shape}")
    keep = sorted({int(k) for k in keep})
    if any(k < 0 or k >= len(dims) for k in keep):
        raise ValidationError(f"keep indices {keep} out of range for {len(dims)} factors")
    n = len(dims)
    t = a.reshape(dims + dims)
    # einsum labels: row index i_k, column index j_k; traced factors share labels
    row = list(range(n))
    col = [k if k not in keep else n + k for k in range(n)]
    out_labels = [k for k in keep] + [n + k for k in keep]
    r = np.einsum(t, row + col, out_labels)
    d_keep = int(np.prod([dims[k] for k in keep])) if keep else 1
    return r.reshape(d_keep, d_keep)


def _support_violation(rho_sd: SpectralDecomposition, sigma_sd: SpectralDecomposition, rho) -> float:
    d = rho_sd.eigenvectors.shape[0]
    comp = np.eye(d) - sigma_sd.support_projector()
    leak = comp @ np.asarray(rho) @ comp
    return float(np.linalg.norm(leak, 2)) if d else 0.0


def sylvester_system(t: float, rho, sigma) -> np.ndarray:
    """The d^2 x d^2 matrix of Z -> (1-t) Z rho + t sigma Z in row-major vec form.

    Uses vec(A X B) = (A kron B^T) vec(X).
    """
    rho = as_matrix(rho, "rho")
    sigma = as_matrix(sigma, "sigma")
    eye = np.eye(rho.shape[0])
    return (1.0 - t) * np.kron(eye, rho.T) + t * np.kron(sigma, eye)


def solve_sylvester(t: float, rho, sigma) -> np.ndarray:
    """Solve (1-t) Z rho + t sigma Z = -rho for Z.

    When both arguments are rank deficient the system is singular and the
    ridge-regularized normal equations give the minimum-norm least-squares
    solution instead.

    Raises:
        ValidationError: shapes disagree or ``t`` outside (0, 1].
        DomainError: supp(rho) is not contained in supp(sigma).
    """
    if not (0.0 < t <= 1.0):
        raise ValidationError(f"t must lie in (0, 1], got {t}")
    rho = check_hermitian(rho, "rho")
    sigma = check_hermitian(sigma, "sigma")
    if rho.shape != sigma.shape:
        raise ValidationError(f"shape mismatch {rho.shape} vs {sigma.shape}")
    r_sd, s_sd = hermitian_eig(rho), hermitian_eig(sigma)
    if _support_violation(r_sd, s_sd, rho) > 1e-10:
        raise DomainError("supp(rho) is not contained in supp(sigma)")
    d = rho.shape[0]
    mat = sylvester_system(t, rho, sigma)
    rhs = -rho.reshape(-1)
    if r_sd.rank() < d and s_sd.rank() < d:
        mh = mat.conj().T
        z = np.linalg.solve(mh @ mat + SYLVESTER_RIDGE * np.eye(d * d), mh @ rhs)
    else:
        z = np.linalg.solve(mat, rhs)
    return z.reshape(d, d)


# Matrix JSON: {"dim": n, "re": [[...]], "im": [[...]]}, row-major.


def matrix_to_json(m) -> dict:
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise ValidationError("only square matrices are serialized")
    return {"dim": int(a.shape[0]), "re": a.real.tolist(), "im": a.imag.tolist()}


def matrix_from_json(obj: dict, hermitian: bool = True) -> np.ndarray:
    try:
        n = int(obj["dim"])
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj.get("im", np.zeros((n, n))), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed matrix JSON: {exc}") from exc
    if re.shape != (n, n) or im.shape != (n, n):
        raise ValidationError(f"matrix JSON entries do not match dim {n}")
    a = re + 1j * im
    if hermitian:
        check_hermitian(a)
    return a


def load_matrix(path, hermitian: bool = True) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        return matrix_from_json(json.load(fh), hermitian=hermitian)


def save_matrix(path, m) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(matrix_to_json(m), fh)
