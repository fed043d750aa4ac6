"""Barren-plateau gradient scaling and Pauli-channel superadditivity studies.

Register convention for channel experiments: an input on A A' has A as the
high kron factor and A' as the low one, so A' occupies qubits 0..n-1 of the
little-endian circuit register.  Channels act on A' only.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math
from typing import Callable, Sequence

import numpy as np

from .circuits import ParamCircuit, ansatz_circuit9, ansatz_complex_entangled, compile_batch, compile_unitary
from .divergences import relative_entropy, von_neumann_entropy
from .errors import ValidationError
from .linalg import kron, partial_trace
from .rng import generator
from .states import PAULIS, DensityMatrix, PureState, as_state, random_pure_state

SIMPLEX_TOL = 1e-12
# L(p) must clear this before a channel counts as superadditive
SUPERADD_MARGIN = 1e-9


# Barren plateaus

def global_loss_l2(circuit: ParamCircuit, params, rho, sigma) -> float:
    """tr[W rho W^dag sigma]."""
    w = compile_unitary(circuit, params)
    r = np.asarray(as_state(rho, relaxed_trace=True).matrix)
    s = np.asarray(as_state(sigma, relaxed_trace=True).matrix)
    if w.shape != r.shape or r.shape != s.shape:
        raise ValidationError("circuit and state dimensions differ")
    return float(np.real(np.vdot(s, w @ r @ w.conj().T)))


def _l2_gradients(circuit: ParamCircuit, params: np.ndarray, r: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Two-term shift gradients of l2 for a (B, P) parameter batch, shape (B, P)."""
    b, p = params.shape
    shifted = np.repeat(params, 2 * p, axis=0).reshape(b, p, 2, p)
    idx = np.arange(p)
    shifted[:, idx, 0, idx] += 0.5 * math.pi
    shifted[:, idx, 1, idx] -= 0.5 * math.pi
    w = compile_batch(circuit, shifted.reshape(-1, p))
    vals = np.real(np.einsum("ij,bji->b", s, w @ r @ np.conj(np.transpose(w, (0, 2, 1)))))
    vals = vals.reshape(b, p, 2)
    return 0.5 * (vals[:, :, 0] - vals[:, :, 1])


@dataclass
class GradScalingRecord:
    loss_kind: str
    n_qubits: int
    layers: int
    samples: int
    mean_abs_gradient: dict
    seed: int = 0

    def overall(self) -> float:
        """Mean |gradient| over every parameter group."""
        return float(np.mean(list(self.mean_abs_gradient.values())))

    def to_row(self) -> dict:
        row = {"loss": self.loss_kind, "n_qubits": self.n_qubits, "layers": self.layers, "samples": self.samples}
        for k, v in self.mean_abs_gradient.items():
            row[f"grad_{k}"] = v
        return row


def bp_states(n_qubits: int, seed: int):
    """Fixed pair of random pure states used by the scaling study."""
    return (random_pure_state(n_qubits, (seed, n_qubits, 0)).density(),
            random_pure_state(n_qubits, (seed, n_qubits, 1)).density())


def gradient_scaling(loss_kind: str, n_qubits: int, layers: int, samples: int = 200, seed: int = 0,
                     t: float = 0.5, states=None) -> GradScalingRecord:
    """Mean absolute parameter-shift gradient of l1 or l2 over uniform parameter draws (circuit 9).

    l1 is the variational loss at fixed lambda = lambda_opt of each draw, so its
    gradient is also the gradient of the lambda-minimized loss.
    """
    from .vqa import FtConfig, LocalBackend, _NodeTrainer, lambda_opt

    if loss_kind not in ("l1", "l2"):
        raise ValidationError(f"loss_kind must be l1 or l2, got {loss_kind!r}")
    if not (2 <= n_qubits <= 6) or layers < 1 or samples < 1:
        raise ValidationError("need 2 <= n_qubits <= 6, layers >= 1, samples >= 1")
    rho, sigma = states if states is not None else bp_states(n_qubits, seed)
    circ = ansatz_circuit9(n_qubits, layers)
    rng = generator(seed, n_qubits, layers, 0 if loss_kind == "l1" else 1)
    p = circ.n_params
    if loss_kind == "l2":
        r, s = np.asarray(rho.matrix), np.asarray(sigma.matrix)
        acc = 0.0
        for start in range(0, samples, 50):
            batch = rng.uniform(0.0, 2.0 * math.pi, (min(50, samples - start), p))
            acc += float(np.sum(np.abs(_l2_gradients(circ, batch, r, s))))
        return GradScalingRecord("l2", n_qubits, layers, samples, {"alpha": acc / (samples * p)}, seed)
    backend = LocalBackend(rho, sigma)
    tr = _NodeTrainer(backend, t, FtConfig(), circ, circ, 0)
    g_t = g_b = 0.0
    for _ in range(samples):
        theta = rng.uniform(0.0, 2.0 * math.pi, p)
        beta = rng.uniform(0.0, 2.0 * math.pi, p)
        probs = backend.run(tr.base_requests(theta, beta, 1, 0) + tr.shift_requests(theta, beta, 0))
        lam = lambda_opt(probs[1], probs[0], probs[2], t)
        gt, gb = tr.gradient(lam, probs[3:], p, p)
        g_t += float(np.mean(np.abs(gt)))
        g_b += float(np.mean(np.abs(gb)))
    return GradScalingRecord("l1", n_qubits, layers, samples, {"theta": g_t / samples, "beta": g_b / samples}, seed)


def normalized(values: Sequence[float]) -> np.ndarray:
    """Values divided by their maximum, as used for side-by-side trend plots."""
    v = np.asarray(values, dtype=float)
    top = float(np.max(np.abs(v))) if v.size else 0.0
    return v / top if top > 0 else v


# Pauli channels

@dataclass(frozen=True)
class PauliChannel:
    """rho -> sum_k p_k P_k rho P_k with P = (I, X, Y, Z)."""

    p: tuple

    def __post_init__(self):
        p = tuple(float(x) for x in np.asarray(self.p, dtype=float).reshape(-1))
        if len(p) != 4:
            raise ValidationError(f"Pauli channel needs 4 probabilities, got {len(p)}")
        if min(p) < -SIMPLEX_TOL or abs(sum(p) - 1.0) > SIMPLEX_TOL:
            raise ValidationError(f"Pauli probabilities {p} are not on the simplex")
        object.__setattr__(self, "p", tuple(max(0.0, x) for x in p))

    @classmethod
    def from_xyz(cls, p1: float, p2: float, p3: float) -> "PauliChannel":
        return cls((1.0 - p1 - p2 - p3, p1, p2, p3))

    @classmethod
    def identity(cls) -> "PauliChannel":
        return cls((1.0, 0.0, 0.0, 0.0))


def pauli_apply(ch: PauliChannel, rho) -> DensityMatrix:
    r = np.asarray(as_state(rho).matrix)
    if r.shape != (2, 2):
        raise ValidationError("pauli_apply acts on one qubit; use pauli_tensor_apply")
    out = sum(pk * (P @ r @ P) for pk, P in zip(ch.p, PAULIS) if pk)
    return DensityMatrix(out, _checked=True)


def _apply_on_qubit(ch: PauliChannel, m: np.ndarray, n_total: int, q: int) -> np.ndarray:
    hi, lo = 1 << (n_total - 1 - q), 1 << q
    t = m.reshape(hi, 2, lo, hi, 2, lo)
    out = np.zeros_like(t)
    for pk, P in zip(ch.p, PAULIS):
        if pk:
            out += pk * np.einsum("ab,ibjkcl,cd->iajkdl", P, t, P)
    return out.reshape(m.shape)


def pauli_tensor_apply(ch: PauliChannel, n: int, rho, qubits: Sequence[int] | None = None) -> DensityMatrix:
    """One copy of the channel on each of ``qubits`` (default 0..n-1, the low register)."""
    st = as_state(rho, relaxed_trace=True)
    total = st.n_qubits
    if total is None:
        raise ValidationError("state dimension is not a power of two")
    qs = list(range(n)) if qubits is None else [int(q) for q in qubits]
    if len(qs) != n or len(set(qs)) != n or any(not 0 <= q < total for q in qs):
        raise ValidationError(f"need {n} distinct qubits in [0, {total}), got {qs}")
    m = np.array(st.matrix)
    for q in qs:
        m = _apply_on_qubit(ch, m, total, q)
    return DensityMatrix(0.5 * (m + m.conj().T), relaxed_trace=st.relaxed_trace, _checked=True)


def pauli_coherent_info(ch: PauliChannel) -> float:
    """1 + sum_k p_k log2 p_k, with 0 log 0 = 0."""
    p = np.asarray(ch.p)
    p = p[p > 0]
    return float(1.0 + np.sum(p * np.log2(p)))


def _channel_fn(channel, n_a: int) -> Callable:
    if isinstance(channel, PauliChannel):
        return lambda m: pauli_tensor_apply(channel, n_a, m)
    return channel


def coherent_info_exact(channel_apply, phi, n_a: int | None = None, cross_check: bool = False) -> float:
    """I(A>B) = S(B) - S(AB) of (id_A x N)(phi), in bits.

    ``channel_apply`` maps the A A' density matrix to the A B one, or is a
    :class:`PauliChannel` applied to every A' qubit.  With ``cross_check`` the
    value is compared with D(sigma_AB || I_A x sigma_B).
    """
    rho = phi.density() if isinstance(phi, PureState) else as_state(phi)
    total = rho.n_qubits
    if n_a is None:
        if total % 2:
            raise ValidationError("pass n_a for an odd-width input")
        n_a = total // 2
    out = np.asarray(as_state(_channel_fn(channel_apply, total - n_a)(rho)).matrix)
    da = 1 << n_a
    db = out.shape[0] // da
    s_b = partial_trace(out, [da, db], [1])
    val = von_neumann_entropy(DensityMatrix(s_b)) - von_neumann_entropy(DensityMatrix(out))
    if cross_check:
        ref = relative_entropy(out, DensityMatrix(kron(np.eye(da), s_b), relaxed_trace=True)).value
        if abs(ref - val) > 1e-8:
            raise AssertionError(f"entropy identity broken: {val} vs {ref}")
    return float(val)


def build_rho_LR(channel, n_uses: int, circuit: ParamCircuit, params):
    """(rho_L, rho_R) with rho_L = (id_A x N^{x n})(U|0>) and rho_R = I_A x tr_A rho_L."""
    if circuit.n_qubits != 2 * n_uses:
        raise ValidationError(f"input circuit must act on {2 * n_uses} qubits")
    u = compile_unitary(circuit, params)
    amp = u[:, 0]
    phi = DensityMatrix(np.outer(amp, amp.conj()), _checked=True)
    rho_l = _channel_fn(channel, n_uses)(phi)
    d = 1 << n_uses
    s_b = partial_trace(rho_l.matrix, [d, d], [1])
    rho_r = DensityMatrix(kron(np.eye(d), s_b), relaxed_trace=True, _checked=True)
    return DensityMatrix(rho_l.matrix, _checked=True), rho_r


# Genetic optimizer

@dataclass(frozen=True)
class GAConfig:
    """Real-coded GA: elitism, tournament selection, uniform crossover, Gaussian mutation.

    A ``crossover_fraction`` of non-elite children come from crossover, the rest
    are mutated copies of a selected parent.
    """

    population: int = 40
    generations: int = 100
    mutation_sigma: float = 0.3
    elite_count: int = 2
    crossover_fraction: float = 0.8
    tournament: int = 2
    lower: float = 0.0
    upper: float = 2.0 * math.pi
    seed: int = 0

    def validate(self) -> None:
        if self.population < 2 or self.generations < 0:
            raise ValidationError("population must be at least 2 and generations non-negative")
        if not (0 <= self.elite_count < self.population):
            raise ValidationError("elite_count must lie in [0, population)")
        if self.mutation_sigma < 0 or not (0.0 <= self.crossover_fraction <= 1.0) or self.tournament < 1:
            raise ValidationError("invalid mutation, crossover or tournament setting")
        if not self.upper > self.lower:
            raise ValidationError("upper bound must exceed lower bound")


@dataclass
class GAResult:
    best_params: np.ndarray
    best_value: float
    history: list = field(default_factory=list)
    evaluations: int = 0


def genetic_optimize(objective: Callable[[np.ndarray], float], dim: int, config: GAConfig | None = None,
                     workers: int = 1) -> GAResult:
    """Maximize ``objective`` over the box [lower, upper]^dim."""
    cfg = config or GAConfig()
    cfg.validate()
    if dim < 1:
        raise ValidationError("dim must be at least 1")
    rng = np.random.default_rng(cfg.seed)
    pop = rng.uniform(cfg.lower, cfg.upper, (cfg.population, dim))
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def evaluate(x):
        vals = list(pool.map(objective, x)) if pool is not None else [objective(row) for row in x]
        return np.asarray(vals, dtype=float)

    try:
        fit = evaluate(pop)
        n_eval = cfg.population
        history = [float(fit.max())]
        n_child = cfg.population - cfg.elite_count
        n_cross = int(round(cfg.crossover_fraction * n_child))
        for _ in range(cfg.generations):
            order = np.argsort(-fit, kind="stable")
            elites = pop[order[: cfg.elite_count]]

            def select(k):
                cand = rng.integers(0, cfg.population, (k, cfg.tournament))
                return pop[cand[np.arange(k), np.argmax(fit[cand], axis=1)]]

            a, b = select(n_cross), select(n_cross)
            mask = rng.random((n_cross, dim)) < 0.5
            crossed = np.where(mask, a, b)
            mutants = select(n_child - n_cross)
            mutants = mutants + rng.normal(0.0, cfg.mutation_sigma, mutants.shape)
            children = np.clip(np.vstack([crossed, mutants]), cfg.lower, cfg.upper)
            child_fit = evaluate(children)
            n_eval += children.shape[0]
            pop = np.vstack([elites, children])
            fit = np.concatenate([fit[order[: cfg.elite_count]], child_fit])
            history.append(float(fit.max()))
    finally:
        if pool is not None:
            pool.shutdown()
    best = int(np.argmax(fit))
    return GAResult(pop[best].copy(), float(fit[best]), history, n_eval)


# Superadditivity scan

@dataclass
class ScanRow:
    p: tuple
    single_use: float
    two_use_half: float
    gap: float
    exact_gap: float
    confirmed: bool
    params: np.ndarray = field(repr=False, default=None)

    def to_row(self) -> dict:
        return {"p1": self.p[1], "p2": self.p[2], "p3": self.p[3], "single_use": self.single_use,
                "two_use_half": self.two_use_half, "gap": self.gap, "exact_gap": self.exact_gap,
                "confirmed": self.confirmed}


@dataclass
class ScanReport:
    rows: list
    mode: str
    ga: dict
    layers: int

    def superadditive(self) -> list:
        return [r for r in self.rows if r.confirmed]


def superadd_grid(step: float = 0.05, top: float = 0.2) -> list:
    """Channels with (p1, p2, p3) on a regular grid over [0, top]^3."""
    k = int(round(top / step))
    vals = [round(i * step, 12) for i in range(k + 1)]
    return [PauliChannel.from_xyz(a, b, c) for a in vals for b in vals for c in vals]


def _exact_half_info(channel, circuit, x) -> float:
    rho_l, rho_r = build_rho_LR(channel, 2, circuit, x)
    return 0.5 * relative_entropy(rho_l, rho_r).value


def scan_channel(channel: PauliChannel, ga: GAConfig | None = None, mode: str = "exact", layers: int = 2,
                 vqa_config=None) -> ScanRow:
    """Search two-use inputs for a coherent-information gain over one use.

    The GA always maximizes the exact two-use coherent information.  In
    ``"vqa"`` mode the reported value at the best input is the variational
    estimate (a lower bound, fixed end zero); either way the exact oracle has
    the final word on ``confirmed``.
    """
    if mode not in ("exact", "vqa"):
        raise ValidationError(f"mode must be exact or vqa, got {mode!r}")
    circ = ansatz_complex_entangled(4, layers)
    res = genetic_optimize(lambda x: _exact_half_info(channel, circ, x), circ.n_params, ga)
    single = pauli_coherent_info(channel)
    exact_half = _exact_half_info(channel, circ, res.best_params)
    if mode == "vqa":
        from .quadrature import grj_rule
        from .vqa import FtConfig, estimate_relative_entropy

        rho_l, rho_r = build_rho_LR(channel, 2, circ, res.best_params)
        est = estimate_relative_entropy(rho_l, rho_r, vqa_config or FtConfig(iterations=100), grj_rule(6, "zero"))
        half = 0.5 * est.aggregate
    else:
        half = exact_half
    exact_gap = exact_half - single
    gap = half - single
    confirmed = bool(gap > SUPERADD_MARGIN and exact_gap > SUPERADD_MARGIN)
    return ScanRow(channel.p, single, half, gap, exact_gap, confirmed, res.best_params)


def superadditivity_scan(grid: Sequence[PauliChannel], ga: GAConfig | None = None, mode: str = "exact",
                         layers: int = 2, workers: int = 1, vqa_config=None) -> ScanReport:
    ga = ga or GAConfig()
    fn = lambda ch: scan_channel(ch, ga, mode, layers, vqa_config)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(fn, grid))
    else:
        rows = [fn(ch) for ch in grid]
    ga_desc = {k: getattr(ga, k) for k in ("population", "generations", "mutation_sigma", "elite_count",
                                           "crossover_fraction", "tournament", "seed")}
    return ScanReport(rows, mode, ga_desc, layers)
