"""Variational estimators for f_t-divergences, relative entropy and Petz Renyi divergences.

For one quadrature node t the trainer minimizes

    L(lambda, theta, beta) = sum_i t lambda_i^2 p_theta(i) + (1-t) lambda_i^2 p_beta(i)
                             + lambda_i (4 p_chi(i) - 2)

by alternating the closed-form lambda step with a gradient step on theta and
beta, and returns (1 + L)/t averaged over the final iterations.  The
estimators never touch rho or sigma directly; they only issue
:class:`~entroq.sampling.SampleRequest` objects through a backend, so the same
code runs in-process and against remote devices.

The update is a descent step theta <- theta - lr * grad L.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import math
import threading
from typing import Sequence

import numpy as np

from .circuits import SHIFT_RULES, ParamCircuit, default_ansatz
from .divergences import _pair
from .errors import DomainError, EstimationError, TrainingError, ValidationError
from .quadrature import LN2, QuadratureRule, grj_rule
from .rng import derive_seed, generator
from .sampling import FAMILY_CODE, FAMILY_STATE, SampleRequest, UnitaryCache, evaluate_request
from .states import support_contained

_PHASE_INIT, _PHASE_TRAIN = 0, 1


def loss(lam, p_theta, p_beta, p_chi, t: float) -> float:
    lam = np.asarray(lam, dtype=float)
    return float(np.sum(t * lam**2 * p_theta + (1.0 - t) * lam**2 * p_beta + lam * (4.0 * np.asarray(p_chi) - 2.0)))


def lambda_opt(p_theta, p_beta, p_chi, t: float, rank_cap: int | None = None) -> np.ndarray:
    """max(0, (1 - 2 p_chi) / (t p_theta + (1-t) p_beta)), 0 where the denominator vanishes.

    With ``rank_cap = s`` only the s indices with the largest |1 - 2 p_chi|
    keep their value.
    """
    p_theta = np.asarray(p_theta, dtype=float)
    p_beta = np.asarray(p_beta, dtype=float)
    p_chi = np.asarray(p_chi, dtype=float)
    den = t * p_theta + (1.0 - t) * p_beta
    num = 1.0 - 2.0 * p_chi
    safe = den > 0.0
    lam = np.zeros_like(num)
    lam[safe] = np.maximum(0.0, num[safe] / den[safe])
    if rank_cap is not None and rank_cap < lam.size:
        order = np.argsort(-np.abs(num), kind="stable")
        lam[order[rank_cap:]] = 0.0
    return lam


def adaptive_lr_update(loss_history: Sequence[float], lr: float, window: int = 20, mse_threshold: float = 2.0) -> float:
    """Halve ``lr`` when a quadratic fit of the last ``window`` losses leaves MSE above the threshold."""
    h = np.asarray(loss_history, dtype=float)
    if h.size < window:
        return lr
    h = h[-window:]
    x = np.arange(window, dtype=float)
    coef = np.polyfit(x, h, 2)
    mse = float(np.mean((np.polyval(coef, x) - h) ** 2))
    return lr / 2.0 if mse > mse_threshold else lr


@dataclass(frozen=True)
class FtConfig:
    """Hyperparameters of one node's training run.

    ``init_redraws`` bounds how many uniform draws of (theta, beta) are tried
    to find a start with negative loss; a start with every p_chi >= 1/2 sits
    on the flat lambda = 0 region where the gradient vanishes identically.
    """

    iterations: int = 300
    learning_rate: float = 0.1
    shots: int = 0
    rank_cap: int | None = None
    ansatz_u: ParamCircuit | None = None
    ansatz_v: ParamCircuit | None = None
    seed: int = 0
    adaptive_lr: bool = False
    loss_window: int = 20
    mse_threshold: float = 2.0
    final_average_window: int = 10
    init_redraws: int = 100

    def validate(self, dim: int | None = None) -> None:
        if self.iterations < 1:
            raise ValidationError("iterations must be at least 1")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if self.shots < 0:
            raise ValidationError("shots must be non-negative")
        if self.final_average_window < 1 or self.loss_window < 3:
            raise ValidationError("averaging and regression windows are too small")
        if self.init_redraws < 1:
            raise ValidationError("init_redraws must be at least 1")
        if self.rank_cap is not None and dim is not None and not (1 <= self.rank_cap <= dim):
            raise ValidationError(f"rank_cap must lie in [1, {dim}]")

    def circuits(self, n_qubits: int):
        u = self.ansatz_u if self.ansatz_u is not None else default_ansatz(n_qubits)
        v = self.ansatz_v if self.ansatz_v is not None else default_ansatz(n_qubits)
        if u.n_qubits != n_qubits or v.n_qubits != n_qubits:
            raise ValidationError(f"ansatz width does not match {n_qubits}-qubit states")
        return u, v

    def to_json(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "iterations", "learning_rate", "shots", "rank_cap", "seed", "adaptive_lr",
            "loss_window", "mse_threshold", "final_average_window", "init_redraws")}
        d["ansatz_u"] = None if self.ansatz_u is None else self.ansatz_u.name
        d["ansatz_v"] = None if self.ansatz_v is None else self.ansatz_v.name
        return d


@dataclass
class FtResult:
    t: float
    value: float
    loss_trace: np.ndarray
    lr_trace: np.ndarray
    theta: np.ndarray
    beta: np.ndarray
    lam: np.ndarray
    node_index: int = 0
    init_draws: int = 0

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "value": self.value,
            "node_index": self.node_index,
            "init_draws": self.init_draws,
            "final_loss": float(self.loss_trace[-1]) if self.loss_trace.size else None,
            "final_lr": float(self.lr_trace[-1]) if self.lr_trace.size else None,
            "theta": self.theta.tolist(),
            "beta": self.beta.tolist(),
            "lambda": self.lam.tolist(),
        }


@dataclass
class EstimationReport:
    kind: str
    per_node: list
    rule: QuadratureRule | None
    aggregate: float
    alpha: float | None = None
    q_hat: float | None = None
    requests: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def recompute(self) -> float:
        """Aggregate rebuilt from per-node values and rule weights."""
        vals = np.array([r.value for r in self.per_node])
        if self.kind == "relent":
            return float(-(self.rule.weights @ vals) / LN2)
        q = self.recompute_q()
        return math.log2(q) / (self.alpha - 1.0)

    def recompute_q(self) -> float:
        vals = np.array([r.value for r in self.per_node])
        if self.rule is None:
            return float(1.0 - vals[0])
        return float(1.0 + math.sin(self.alpha * math.pi) / math.pi * (self.rule.weights @ vals))

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "alpha": self.alpha,
            "aggregate": self.aggregate,
            "q_hat": self.q_hat,
            "rule": None if self.rule is None else self.rule.to_json(),
            "per_node": [r.to_json() for r in self.per_node],
            "requests": dict(self.requests),
            "config": dict(self.config),
            "notes": list(self.notes),
        }

    def trace_rows(self):
        """(node, t, iteration, loss, lr) rows for every node."""
        for r in self.per_node:
            for k, (l, lr) in enumerate(zip(r.loss_trace, r.lr_trace)):
                yield r.node_index, r.t, k, float(l), float(lr)


class LocalBackend:
    """Evaluates requests in-process against both states."""

    def __init__(self, rho, sigma):
        self._states = {"rho": np.asarray(rho.matrix if hasattr(rho, "matrix") else rho),
                        "sigma": np.asarray(sigma.matrix if hasattr(sigma, "matrix") else sigma)}
        self._cache = threading.local()
        self._lock = threading.Lock()
        self.counts = {"rho": 0, "sigma": 0}

    @property
    def dim(self) -> int:
        return self._states["rho"].shape[0]

    def _unitaries(self) -> UnitaryCache:
        c = getattr(self._cache, "u", None)
        if c is None:
            c = self._cache.u = UnitaryCache()
        return c

    def run(self, requests: Sequence[SampleRequest]) -> list:
        cache = self._unitaries()
        out = []
        n = {"rho": 0, "sigma": 0}
        for req in requests:
            dev = FAMILY_STATE[req.family]
            out.append(evaluate_request(self._states[dev], req, cache))
            n[dev] += 1
        with self._lock:
            for k, v in n.items():
                self.counts[k] += v
        return out

    def request_counts(self) -> dict:
        return dict(self.counts)


class _NodeTrainer:
    """Request construction and gradient assembly for one quadrature node."""

    def __init__(self, backend, t: float, config: FtConfig, u: ParamCircuit, v: ParamCircuit, node_index: int):
        self.backend = backend
        self.t = float(t)
        self.cfg = config
        self.u, self.v = u, v
        self.node = int(node_index)
        self.pair = (u, v)
        (self.s1, self.c1), = SHIFT_RULES["two_term"]
        self.chi_terms = SHIFT_RULES["four_term"]

    def _seed(self, phase: int, it: int, family: str, idx: int) -> int:
        if self.cfg.shots == 0:
            return 0
        return derive_seed(self.cfg.seed, self.node, phase, it, FAMILY_CODE[family], idx)

    def _req(self, family, circuit, params, phase, it, idx):
        return SampleRequest(family, circuit, np.asarray(params, dtype=float), self.cfg.shots, self._seed(phase, it, family, idx), idx)

    def base_requests(self, theta, beta, phase, it):
        return [
            self._req("v_basis", self.v, beta, phase, it, 0),
            self._req("u_dagger_basis", self.u, theta, phase, it, 1),
            self._req("swap_test", self.pair, np.concatenate([theta, beta]), phase, it, 2),
        ]

    def shift_requests(self, theta, beta, it):
        reqs = []
        idx = 3
        for k in range(theta.size):
            for sgn in (1.0, -1.0):
                th = theta.copy()
                th[k] += sgn * self.s1
                reqs.append(self._req("u_dagger_basis", self.u, th, _PHASE_TRAIN, it, idx))
                idx += 1
            for shift, _ in self.chi_terms:
                for sgn in (1.0, -1.0):
                    th = theta.copy()
                    th[k] += sgn * shift
                    reqs.append(self._req("swap_test", self.pair, np.concatenate([th, beta]), _PHASE_TRAIN, it, idx))
                    idx += 1
        for k in range(beta.size):
            for sgn in (1.0, -1.0):
                be = beta.copy()
                be[k] += sgn * self.s1
                reqs.append(self._req("v_basis", self.v, be, _PHASE_TRAIN, it, idx))
                idx += 1
            for shift, _ in self.chi_terms:
                for sgn in (1.0, -1.0):
                    be = beta.copy()
                    be[k] += sgn * shift
                    reqs.append(self._req("swap_test", self.pair, np.concatenate([theta, be]), _PHASE_TRAIN, it, idx))
                    idx += 1
        return reqs

    def gradient(self, lam, probs, n_theta, n_beta):
        """Gradient of L at fixed lambda from the shifted evaluations (list order of shift_requests)."""
        t = self.t
        lam2 = lam * lam
        per = 2 + 2 * len(self.chi_terms)
        g_theta = np.empty(n_theta)
        g_beta = np.empty(n_beta)
        for blk, (n, g, w_quad) in enumerate(((n_theta, g_theta, t), (n_beta, g_beta, 1.0 - t))):
            base = 0 if blk == 0 else n_theta * per
            for k in range(n):
                o = base + k * per
                quad = self.c1 * (probs[o] - probs[o + 1])
                chi = 0.0
                for j, (_, coef) in enumerate(self.chi_terms):
                    chi = chi + coef * (probs[o + 2 + 2 * j] - probs[o + 3 + 2 * j])
                g[k] = w_quad * float(lam2 @ quad) + 4.0 * float(lam @ chi)
        return g_theta, g_beta

    def evaluate_base(self, theta, beta, phase, it):
        p_beta, p_theta, p_chi = self.backend.run(self.base_requests(theta, beta, phase, it))
        lam = lambda_opt(p_theta, p_beta, p_chi, self.t, self.cfg.rank_cap)
        return lam, loss(lam, p_theta, p_beta, p_chi, self.t)

    def initial_params(self):
        rng = generator(self.cfg.seed, self.node, _PHASE_INIT)
        for draw in range(self.cfg.init_redraws):
            theta = rng.uniform(0.0, 2.0 * math.pi, self.u.n_params)
            beta = rng.uniform(0.0, 2.0 * math.pi, self.v.n_params)
            if self.cfg.init_redraws == 1:
                return theta, beta, 1
            _, l0 = self.evaluate_base(theta, beta, _PHASE_INIT, draw)
            if l0 < 0.0:
                break
        return theta, beta, draw + 1

    def train(self) -> FtResult:
        cfg = self.cfg
        theta, beta, draws = self.initial_params()
        lr = cfg.learning_rate
        losses = np.empty(cfg.iterations)
        lrs = np.empty(cfg.iterations)
        window: list = []
        lam = np.zeros(self.u.dim)
        for it in range(cfg.iterations):
            reqs = self.base_requests(theta, beta, _PHASE_TRAIN, it) + self.shift_requests(theta, beta, it)
            try:
                probs = self.backend.run(reqs)
            except EstimationError as exc:
                exc.trace = {"node": self.node, "t": self.t, "iteration": it, "losses": losses[:it].tolist()}
                raise
            p_beta, p_theta, p_chi = probs[:3]
            lam = lambda_opt(p_theta, p_beta, p_chi, self.t, cfg.rank_cap)
            cur = loss(lam, p_theta, p_beta, p_chi, self.t)
            if not math.isfinite(cur):
                raise TrainingError(f"non-finite loss at node t={self.t} iteration {it}", losses[:it])
            losses[it] = cur
            lrs[it] = lr
            g_theta, g_beta = self.gradient(lam, probs[3:], theta.size, beta.size)
            theta = theta - lr * g_theta
            beta = beta - lr * g_beta
            if cfg.adaptive_lr:
                window.append(cur)
                new_lr = adaptive_lr_update(window, lr, cfg.loss_window, cfg.mse_threshold)
                if new_lr != lr:
                    lr = new_lr
                    window = []
        tail = losses[-min(cfg.final_average_window, cfg.iterations):]
        value = (1.0 + float(np.mean(tail))) / self.t
        return FtResult(self.t, value, losses, lrs, theta, beta, lam, self.node, draws)


def _n_qubits_of(dim: int) -> int:
    n = int(round(math.log2(dim)))
    if (1 << n) != dim:
        raise ValidationError(f"dimension {dim} is not a power of two")
    return n


def _prepare_local(rho, sigma, backend):
    if backend is not None:
        return backend
    rho, sigma = _pair(rho, sigma)
    if not support_contained(rho, sigma):
        raise DomainError("supp(rho) is not contained in supp(sigma)")
    return LocalBackend(rho, sigma)


def train_node(backend, t: float, config: FtConfig, node_index: int = 0, dim: int | None = None) -> FtResult:
    """One node of the estimator against an arbitrary backend."""
    t = float(t)
    if not (0.0 <= t <= 1.0):
        raise ValidationError(f"t must lie in [0, 1], got {t}")
    d = backend.dim if dim is None else dim
    config.validate(d)
    u, v = config.circuits(_n_qubits_of(d))
    if t == 0.0:
        # equal-support convention: D_{f_0} = 0
        empty = np.zeros(0)
        return FtResult(0.0, 0.0, empty, empty, np.zeros(u.n_params), np.zeros(v.n_params), np.zeros(d), node_index, 0)
    return _NodeTrainer(backend, t, config, u, v, node_index).train()


def estimate_ft(rho, sigma, t: float, config: FtConfig | None = None, backend=None, node_index: int = 0) -> FtResult:
    """Variational estimate of D_{f_t}(rho || sigma)."""
    backend = _prepare_local(rho, sigma, backend)
    return train_node(backend, t, config or FtConfig(), node_index)


def _run_nodes(backend, nodes, config: FtConfig, workers: int):
    jobs = list(enumerate(nodes))
    if workers <= 1 or len(jobs) <= 1:
        return [train_node(backend, t, config, j) for j, t in jobs]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda jt: train_node(backend, jt[1], config, jt[0]), jobs))


def _counts(backend) -> dict:
    fn = getattr(backend, "request_counts", None)
    return fn() if fn is not None else {}


def estimate_relative_entropy(rho, sigma, config: FtConfig | None = None, rule: QuadratureRule | None = None,
                              backend=None, workers: int = 1) -> EstimationReport:
    """-sum_j (w_j / ln 2) D_hat_{f_tj} over a uniform-weight rule (default m = 6, fixed end one)."""
    config = config or FtConfig()
    rule = rule or grj_rule(6, "one")
    if rule.alpha is not None:
        raise ValidationError("relative-entropy estimation needs a uniform-weight rule")
    backend = _prepare_local(rho, sigma, backend)
    per = _run_nodes(backend, rule.nodes, config, workers)
    vals = np.array([r.value for r in per])
    agg = float(-(rule.weights @ vals) / LN2)
    return EstimationReport("relent", per, rule, agg, requests=_counts(backend), config=config.to_json())


def estimate_petz(rho, sigma, alpha: float, config: FtConfig | None = None, rule: QuadratureRule | None = None,
                  backend=None, workers: int = 1) -> EstimationReport:
    """Petz Renyi estimate; alpha = 2 uses the single node t = 1 and no quadrature."""
    config = config or FtConfig()
    alpha = float(alpha)
    if not (0.0 < alpha <= 2.0) or alpha == 1.0:
        raise ValidationError(f"alpha must lie in (0,1) or (1,2], got {alpha}")
    backend = _prepare_local(rho, sigma, backend)
    notes = []
    if alpha == 2.0:
        if rule is not None:
            notes.append("rule ignored for alpha = 2")
        per = [train_node(backend, 1.0, config, 0)]
        q_hat = 1.0 - per[0].value
        rule = None
        notes.append("alpha = 2: no quadrature, Q_2 = 1 - D_f1")
    else:
        rule = rule or grj_rule(6, "one", alpha)
        if rule.alpha is None or abs(rule.alpha - alpha) > 1e-15:
            raise ValidationError("Petz estimation needs a Jacobi rule with matching alpha")
        per = _run_nodes(backend, rule.nodes, config, workers)
        vals = np.array([r.value for r in per])
        q_hat = float(1.0 + math.sin(alpha * math.pi) / math.pi * (rule.weights @ vals))
    report = EstimationReport("petz", per, rule, math.nan, alpha, q_hat, _counts(backend), config.to_json(), notes)
    if not (q_hat > 0.0 and math.isfinite(q_hat)):
        raise EstimationError(f"estimated Q_alpha = {q_hat:.6g} is not positive; the logarithm is undefined",
                              [r.value for r in per])
    report.aggregate = math.log2(q_hat) / (alpha - 1.0)
    return report


def with_seed(config: FtConfig, seed: int) -> FtConfig:
    return replace(config, seed=int(seed))
