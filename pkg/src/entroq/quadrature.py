"""Gauss-Radau-Jacobi rules on [0, 1] and the scalar approximants built from them.

A rule integrates against either the uniform weight or the Jacobi weight
``t**(alpha-1) * (1-t)**(1-alpha)`` and keeps one node pinned at 0 or 1.
Construction follows Golub-Welsch: closed-form Jacobi recurrence coefficients
on [-1, 1], an affine map to [0, 1], the Radau modification of the last
diagonal entry, and an eigen-solve of the resulting Jacobi matrix.
"""
from __future__ import annotations

from dataclasses import dataclass
import json
import math

import numpy as np

from .errors import ValidationError
from .kernels import tridiag_eigh

LN2 = math.log(2.0)
FIXED_ENDS = ("zero", "one")


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights of a GRJ rule.

    Attributes:
        m: number of nodes.
        nodes: strictly increasing nodes in [0, 1].
        weights: positive weights summing to the total mass of the weight function.
        fixed_end: ``"zero"`` or ``"one"``.
        alpha: ``None`` for the uniform weight, otherwise the Jacobi parameter.
    """

    m: int
    nodes: np.ndarray
    weights: np.ndarray
    fixed_end: str
    alpha: float | None = None

    @property
    def weight_kind(self) -> str:
        return "uniform" if self.alpha is None else "jacobi"

    def to_json(self) -> dict:
        return {
            "m": self.m,
            "fixed_end": self.fixed_end,
            "alpha": self.alpha,
            "nodes": self.nodes.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "QuadratureRule":
        alpha = obj.get("alpha")
        nodes = np.asarray(obj["nodes"], dtype=float)
        weights = np.asarray(obj["weights"], dtype=float)
        rule = cls(int(obj["m"]), nodes, weights, str(obj["fixed_end"]), None if alpha is None else float(alpha))
        _check_rule(rule)
        return rule

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def _check_alpha(alpha):
    if alpha is None:
        return None
    a = float(alpha)
    if not (0.0 < a < 2.0) or a == 1.0:
        raise ValidationError(f"alpha must lie in (0,1) or (1,2), got {alpha}")
    return a


def _check_rule(rule: QuadratureRule) -> None:
    t, w = rule.nodes, rule.weights
    if t.shape != (rule.m,) or w.shape != (rule.m,):
        raise ValidationError("rule nodes/weights do not match m")
    if rule.fixed_end not in FIXED_ENDS:
        raise ValidationError(f"fixed_end must be one of {FIXED_ENDS}")
    if np.any(t < 0.0) or np.any(t > 1.0) or np.any(np.diff(t) <= 0.0) or np.any(w <= 0.0):
        raise ValidationError("rule violates node ordering, range or weight positivity")


def jacobi_recurrence(n: int, a: float, b: float):
    """Monic recurrence (alpha_k, beta_k), k < n, for (1-x)^a (1+x)^b on [-1, 1].

    ``beta[0]`` is the total mass of the weight.
    """
    s = a + b
    al = np.empty(n)
    be = np.empty(n)
    al[0] = (b - a) / (s + 2.0)
    be[0] = 2.0 ** (s + 1.0) * math.gamma(a + 1.0) * math.gamma(b + 1.0) / math.gamma(s + 2.0)
    if n > 1:
        be[1] = 4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + s) ** 2 * (3.0 + s))
    for k in range(1, n):
        al[k] = (b * b - a * a) / ((2 * k + s) * (2 * k + s + 2.0))
    for k in range(2, n):
        be[k] = 4.0 * k * (k + a) * (k + b) * (k + s) / ((2 * k + s) ** 2 * (2 * k + s + 1.0) * (2 * k + s - 1.0))
    return al, be


def grj_rule(m: int, fixed_end: str = "one", alpha: float | None = None) -> QuadratureRule:
    """Gauss-Radau-Jacobi rule with ``m`` nodes, one of them pinned at ``fixed_end``.

    ``alpha=None`` gives the uniform weight on [0, 1]; otherwise the weight is
    ``t**(alpha-1) (1-t)**(1-alpha)``.  The rule is exact for polynomials up
    to degree ``2m - 2``.
    """
    if int(m) != m or m < 1:
        raise ValidationError(f"m must be a positive integer, got {m}")
    m = int(m)
    if fixed_end not in FIXED_ENDS:
        raise ValidationError(f"fixed_end must be one of {FIXED_ENDS}, got {fixed_end!r}")
    alpha = _check_alpha(alpha)
    # exponent a on (1-t), b on t; these map to (1-x), (1+x) on [-1, 1]
    a, b = (0.0, 0.0) if alpha is None else (1.0 - alpha, alpha - 1.0)
    al, be = jacobi_recurrence(m, a, b)
    al = 0.5 * (1.0 + al)
    mass = 0.5 * be[0]
    be = be / 4.0
    z = 1.0 if fixed_end == "one" else 0.0
    if m == 1:
        al[0] = z
    else:
        # p_{m-1}(z), p_{m-2}(z) of the shifted monic family
        p_prev, p = 0.0, 1.0
        for k in range(m - 1):
            p_prev, p = p, (z - al[k]) * p - (be[k] * p_prev if k > 0 else 0.0)
        al[m - 1] = z - be[m - 1] * p_prev / p
    nodes, vecs = tridiag_eigh(al, np.sqrt(be[1:m]))
    weights = mass * vecs[0] ** 2
    pin = 0 if fixed_end == "zero" else m - 1
    nodes = np.clip(nodes, 0.0, 1.0)
    nodes[pin] = z
    nodes.setflags(write=False)
    weights.setflags(write=False)
    rule = QuadratureRule(m, nodes, weights, fixed_end, alpha)
    _check_rule(rule)
    return rule


def eval_ft(t, x):
    """f_t(x) = (x - 1) / (t (x - 1) + 1); broadcasts over arrays."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    out = (x - 1.0) / (t * (x - 1.0) + 1.0)
    return out if out.ndim else float(out)


def _node_sum(rule: QuadratureRule, x):
    x = np.asarray(x, dtype=float)
    vals = eval_ft(rule.nodes[:, None], x.reshape(1, -1))
    s = rule.weights @ vals
    return s.reshape(x.shape) if x.ndim else float(s[0])


def eval_rm(rule: QuadratureRule, x):
    """r_m(x) = (1/ln 2) sum_j w_j f_{t_j}(x), the quadrature approximant of log2 x."""
    if rule.alpha is not None:
        raise ValidationError("eval_rm needs a uniform-weight rule")
    return _node_sum(rule, x) / LN2


def eval_hm(rule: QuadratureRule, x):
    """h_m(x) = 1 + (sin(alpha pi)/pi) sum_j w_j f_{t_j}(x), approximating x**(1-alpha)."""
    if rule.alpha is None:
        raise ValidationError("eval_hm needs a Jacobi-weight rule")
    return 1.0 + math.sin(rule.alpha * math.pi) / math.pi * _node_sum(rule, x)


def error_table(rule: QuadratureRule, x_grid):
    """Rows (x, exact, approx, error) comparing the rule's approximant with its target."""
    x = np.asarray(x_grid, dtype=float)
    if rule.alpha is None:
        exact, approx = np.log2(x), eval_rm(rule, x)
    else:
        exact, approx = x ** (1.0 - rule.alpha), eval_hm(rule, x)
    approx = np.asarray(approx)
    return np.column_stack([x, exact, approx, np.abs(approx - exact)])
