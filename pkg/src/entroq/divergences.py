"""Exact spectral oracles for f-divergences, relative entropy and Petz Renyi divergences.

All logarithms are base 2, so divergences are in bits; the quasi-entropy
Q_alpha is dimensionless.  Every routine works from the two spectral
decompositions and the overlap table |<v_j|w_k>|^2, which keeps degenerate
eigenspaces harmless.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Callable

import numpy as np

from .errors import DomainError, ValidationError
from .linalg import matrix_function, solve_sylvester
from .quadrature import LN2, QuadratureRule, eval_ft
from .states import DensityMatrix, as_state, support_contained

KINDS = ("f_generic", "f_t", "relative", "petz_alpha", "quasi_alpha")
_LEAK_TOL = 1e-10


@dataclass(frozen=True)
class DivergenceValue:
    value: float
    kind: str
    finite: bool = True
    params: dict = field(default_factory=dict)

    def __float__(self) -> float:
        return float(self.value)

    def to_json(self) -> dict:
        v = self.value
        return {
            "value": v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan"),
            "finite": self.finite,
            "kind": self.kind,
            "params": dict(self.params),
        }


def _pair(rho, sigma):
    rho = as_state(rho, relaxed_trace=True)
    sigma = as_state(sigma, relaxed_trace=True)
    if rho.dim != sigma.dim:
        raise ValidationError(f"dimension mismatch {rho.dim} vs {sigma.dim}")
    return rho, sigma


def _spectral_table(rho: DensityMatrix, sigma: DensityMatrix):
    """(eta, mu, overlap, leak) restricted to the supports of rho and sigma."""
    rs, ss = rho.spectral, sigma.spectral
    rm, sm = rs.support_mask(), ss.support_mask()
    eta = rs.eigenvalues[rm]
    mu = ss.eigenvalues[sm]
    ov = np.abs(rs.eigenvectors[:, rm].conj().T @ ss.eigenvectors[:, sm]) ** 2
    # tr[rho (I - sigma^0)]
    leak = float(np.sum(eta) - np.sum(eta[:, None] * ov))
    return eta, mu, ov, max(leak, 0.0)


def f_divergence(rho, sigma, f: Callable, f0p: float, kind: str = "f_generic", params=None) -> DivergenceValue:
    """Standard quantum f-divergence from the two spectral decompositions.

    ``f0p`` is the right limit f(0+), which multiplies tr[rho (I - sigma^0)].
    An infinite ``f0p`` with nonzero leakage gives ``finite=False``.
    """
    rho, sigma = _pair(rho, sigma)
    eta, mu, ov, leak = _spectral_table(rho, sigma)
    ratios = mu[None, :] / eta[:, None]
    body = float(np.sum(eta[:, None] * np.asarray(f(ratios), dtype=float) * ov))
    params = {} if params is None else dict(params)
    if leak > _LEAK_TOL:
        if math.isinf(f0p):
            return DivergenceValue(f0p, kind, False, params)
        body += f0p * leak
    return DivergenceValue(body, kind, True, params)


def relative_entropy(rho, sigma) -> DivergenceValue:
    """D(rho||sigma) = tr[rho (log rho - log sigma)] in bits; ``sigma`` may be unnormalized."""
    rho, sigma = _pair(rho, sigma)
    if not support_contained(rho, sigma):
        return DivergenceValue(math.inf, "relative", False)
    lr = matrix_function(rho.matrix, np.log2, spectral=rho.spectral)
    ls = matrix_function(sigma.matrix, np.log2, spectral=sigma.spectral)
    val = float(np.real(np.trace(rho.matrix @ (lr - ls))))
    return DivergenceValue(val, "relative")


def von_neumann_entropy(rho) -> float:
    w = as_state(rho, relaxed_trace=True).spectral.eigenvalues
    w = w[w > 1e-15]
    return float(-np.sum(w * np.log2(w)))


def _check_alpha(alpha: float) -> float:
    a = float(alpha)
    if not (0.0 < a <= 2.0) or a == 1.0:
        raise ValidationError(f"alpha must lie in (0,1) or (1,2], got {alpha}")
    return a


def quasi_entropy(rho, sigma, alpha: float) -> DivergenceValue:
    """Q_alpha = tr[rho^alpha sigma^(1-alpha)]."""
    alpha = _check_alpha(alpha)
    rho, sigma = _pair(rho, sigma)
    params = {"alpha": alpha}
    if alpha > 1.0 and not support_contained(rho, sigma):
        return DivergenceValue(math.inf, "quasi_alpha", False, params)
    ra = matrix_function(rho.matrix, lambda w: w**alpha, spectral=rho.spectral)
    sb = matrix_function(sigma.matrix, lambda w: w ** (1.0 - alpha), spectral=sigma.spectral)
    return DivergenceValue(float(np.real(np.trace(ra @ sb))), "quasi_alpha", True, params)


def petz_renyi(rho, sigma, alpha: float) -> DivergenceValue:
    """D_alpha = log2(Q_alpha) / (alpha - 1)."""
    q = quasi_entropy(rho, sigma, alpha)
    params = {"alpha": q.params["alpha"]}
    if not q.finite:
        return DivergenceValue(math.inf, "petz_alpha", False, params)
    if alpha < 1.0 and q.value <= 0.0:
        # orthogonal supports
        return DivergenceValue(math.inf, "petz_alpha", False, params)
    return DivergenceValue(math.log2(q.value) / (alpha - 1.0), "petz_alpha", True, params)


def _ft_values(rho, sigma, ts) -> np.ndarray:
    eta, mu, ov, _ = _spectral_table(rho, sigma)
    ratios = (mu[None, :] / eta[:, None])[None]
    t = np.asarray(ts, dtype=float).reshape(-1, 1, 1)
    vals = np.sum(eta[None, :, None] * eval_ft(t, ratios) * ov[None], axis=(1, 2))
    # equal-support convention for the t = 0 node
    return np.where(t.reshape(-1) == 0.0, 0.0, vals)


def ft_divergence_exact(rho, sigma, t: float) -> DivergenceValue:
    """D_{f_t}(rho||sigma); t = 0 returns 0 by the equal-support convention."""
    if not (0.0 <= t <= 1.0):
        raise ValidationError(f"t must lie in [0, 1], got {t}")
    rho, sigma = _pair(rho, sigma)
    params = {"t": float(t)}
    if not support_contained(rho, sigma):
        return DivergenceValue(-math.inf if t == 1.0 else math.nan, "f_t", False, params)
    return DivergenceValue(float(_ft_values(rho, sigma, [t])[0]), "f_t", True, params)


def variational_objective(z, rho, sigma, t: float) -> float:
    """(1/t) (tr rho + tr[rho (Z + Z^dag)] + (1-t) tr[rho Z^dag Z] + t tr[sigma Z Z^dag])."""
    r = np.asarray(rho)
    s = np.asarray(sigma)
    z = np.asarray(z, dtype=np.complex128)
    zd = z.conj().T
    val = np.trace(r) + np.trace(r @ (z + zd)) + (1.0 - t) * np.trace(r @ zd @ z) + t * np.trace(s @ z @ zd)
    return float(np.real(val)) / t


def variational_optimum(rho, sigma, t: float):
    """The Sylvester optimizer Z and the objective value it attains."""
    if not (0.0 < t <= 1.0):
        raise ValidationError(f"t must lie in (0, 1], got {t}")
    rho, sigma = _pair(rho, sigma)
    if not support_contained(rho, sigma):
        raise DomainError("supp(rho) is not contained in supp(sigma)")
    z = solve_sylvester(t, rho.matrix, sigma.matrix)
    return z, variational_objective(z, rho.matrix, sigma.matrix, t)


def quadrature_divergence(rho, sigma, rule: QuadratureRule, target: str) -> DivergenceValue:
    """Noise-free quadrature value of the relative entropy or of Q_alpha.

    ``target="relent"`` needs a uniform rule and returns -sum_j (w_j/ln 2) D_{f_tj};
    ``target="quasi_alpha"`` needs a Jacobi rule and returns
    1 + (sin(alpha pi)/pi) sum_j w_j D_{f_tj}.
    """
    rho, sigma = _pair(rho, sigma)
    params = {"m": rule.m, "fixed_end": rule.fixed_end, "alpha": rule.alpha}
    if target == "relent":
        if rule.alpha is not None:
            raise ValidationError("relative-entropy quadrature needs a uniform rule")
        kind = "relative"
    elif target == "quasi_alpha":
        if rule.alpha is None:
            raise ValidationError("quasi-entropy quadrature needs a Jacobi rule")
        kind = "quasi_alpha"
    else:
        raise ValidationError(f"unknown quadrature target {target!r}")
    if not support_contained(rho, sigma):
        return DivergenceValue(math.inf, kind, False, params)
    s = float(rule.weights @ _ft_values(rho, sigma, rule.nodes))
    if target == "relent":
        return DivergenceValue(-s / LN2, kind, True, params)
    return DivergenceValue(1.0 + math.sin(rule.alpha * math.pi) / math.pi * s, kind, True, params)


def prop1_constant(rho, sigma) -> float:
    """C = (Q_0 + Q_2) / (D ln 2) with Q_0 = tr[rho^0 sigma] and D in bits."""
    rho, sigma = _pair(rho, sigma)
    d = relative_entropy(rho, sigma)
    if not d.finite or d.value <= 0.0:
        raise ValidationError("the error bound needs a finite, positive relative entropy")
    q0 = float(np.real(np.trace(rho.spectral.support_projector() @ sigma.matrix)))
    q2 = quasi_entropy(rho, sigma, 2.0).value
    return (q0 + q2) / (d.value * LN2)


def prop1_bound(rho, sigma, m: int, eps_v: float = 0.0) -> float:
    """Relative-error bound C (1 + eps_v) / m^2 + eps_v for fixed-end-one relent estimates."""
    if m < 1:
        raise ValidationError(f"m must be positive, got {m}")
    c = prop1_constant(rho, sigma)
    return c * (1.0 + eps_v) / m**2 + eps_v
