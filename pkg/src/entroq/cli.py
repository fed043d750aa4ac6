"""``entroq`` command line.

Every command writes its outputs plus ``manifest.json`` (resolved config,
seed, versions, output digests) into ``--out``.  A manifest can be fed back
with ``--config`` to regenerate the same files; explicit flags override
config values, and ``ENTROQ_SEED`` overrides both.

Exit codes: 0 success, 2 validation error, 3 domain (support) error,
4 estimation failure, 1 anything else.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from ._accel import backend_name
from .errors import EntroqError, ValidationError
from .rng import SEED_ENV, resolve_seed

log = logging.getLogger("entroq")

DEFAULTS = {
    "quadrature": {"m": 6, "fixed_end": "one", "alpha": None, "x_grid": "0.01:1:100"},
    "oracle": {"kind": "relent", "alpha": 1.5, "t": 0.5, "qubits": 1, "seed_states": None, "rho": None,
               "sigma": None, "m": 6, "fixed_end": "one"},
    "estimate": {"kind": "relent", "t": 0.5, "alpha": 1.5, "m": 6, "fixed_end": "one", "shots": 0, "k": 300,
                 "lr": 0.1, "adaptive": False, "seed": 0, "qubits": 1, "seed_states": None, "rho": None,
                 "sigma": None, "distributed": False, "rank_cap": None, "workers": None, "timeout": 30.0},
    "bp-scan": {"qubits": "2-4", "layers": "5", "samples": 200, "seed": 0, "t": 0.5, "loss": "l1,l2"},
    "superadd-scan": {"step": 0.05, "top": 0.2, "points": None, "mode": "exact", "population": 40,
                      "generations": 100, "mutation_sigma": 0.3, "elite_count": 2, "seed": 0, "layers": 2,
                      "workers": None, "k": 100},
}


# helpers

def _parse_range(text: str) -> list:
    """'2-4' -> [2, 3, 4]; '2,5' -> [2, 5]."""
    out = []
    for part in str(text).split(","):
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part.strip():
            out.append(int(part))
    return out


def _parse_grid(text: str) -> np.ndarray:
    """'a:b:n' (n points, inclusive) or a comma list."""
    if ":" in text:
        a, b, n = text.split(":")
        return np.linspace(float(a), float(b), int(n))
    return np.array([float(x) for x in text.split(",") if x.strip()])


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def _versions() -> dict:
    import numba

    return {"artifact": __version__, "numpy": np.__version__, "numba": numba.__version__,
            "python": platform.python_version(), "kernels": backend_name()}


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise ValidationError("config file must hold a JSON object")
    # a manifest can serve as its own config
    return dict(obj.get("config", obj))


def _resolve(command: str, args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[command])
    file_cfg = _load_config(getattr(args, "config", None))
    for k, v in file_cfg.items():
        key = k.replace("-", "_")
        if key in cfg:
            cfg[key] = v
    for k in cfg:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if "seed" in cfg:
        cfg["seed"] = resolve_seed(cfg["seed"])
    if "workers" in cfg and cfg["workers"] is None:
        cfg["workers"] = os.cpu_count() or 1
    return cfg


def _finish(out_dir: str, command: str, cfg: dict, files: list, extra: dict | None = None) -> dict:
    manifest = {
        "command": command,
        "config": cfg,
        "versions": _versions(),
        "seed_env": os.environ.get(SEED_ENV),
        "outputs": {os.path.basename(f): _sha256(f) for f in files},
    }
    if extra:
        manifest.update(extra)
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest


def _states(cfg: dict):
    from .states import load_state, seeded_pair

    if cfg.get("rho") and cfg.get("sigma") and not cfg.get("distributed"):
        return load_state(cfg["rho"]), load_state(cfg["sigma"], relaxed_trace=True)
    seeds = cfg.get("seed_states")
    if seeds is None:
        raise ValidationError("give --rho and --sigma state files or --seed-states")
    parts = [int(s) for s in str(seeds).split(",")]
    if len(parts) == 1:
        return seeded_pair(int(cfg["qubits"]), parts[0])
    if len(parts) == 2:
        return seeded_pair(int(cfg["qubits"]), parts[0], parts[1])
    raise ValidationError("--seed-states takes S or S_rho,S_sigma")


# commands

def cmd_quadrature(args) -> int:
    from .quadrature import error_table, grj_rule

    cfg = _resolve("quadrature", args)
    alpha = None if cfg["alpha"] in (None, "none") else float(cfg["alpha"])
    rule = grj_rule(int(cfg["m"]), cfg["fixed_end"], alpha)
    out = args.out
    os.makedirs(out, exist_ok=True)
    rule_path = os.path.join(out, "rule.json")
    _write_json(rule_path, rule.to_json())
    table = error_table(rule, _parse_grid(str(cfg["x_grid"])))
    err_path = os.path.join(out, "errors.csv")
    _write_csv(err_path, ["x", "exact", "approx", "error"], table.tolist())
    _finish(out, "quadrature", cfg, [rule_path, err_path])
    print(json.dumps({"m": rule.m, "nodes": rule.nodes.tolist(), "weights": rule.weights.tolist(),
                      "max_error": float(table[:, 3].max()) if table.size else None}))
    return 0


def _oracle_values(cfg: dict, rho, sigma) -> dict:
    from . import divergences as D
    from .quadrature import grj_rule

    kind = cfg["kind"]
    if kind == "relent":
        return {"relent": D.relative_entropy(rho, sigma).to_json()}
    if kind == "petz":
        a = float(cfg["alpha"])
        return {"petz": D.petz_renyi(rho, sigma, a).to_json(), "quasi": D.quasi_entropy(rho, sigma, a).to_json()}
    if kind == "ft":
        return {"ft": D.ft_divergence_exact(rho, sigma, float(cfg["t"])).to_json()}
    if kind == "quadrature":
        a = cfg.get("alpha")
        rel = D.quadrature_divergence(rho, sigma, grj_rule(int(cfg["m"]), cfg["fixed_end"]), "relent")
        out = {"quadrature_relent": rel.to_json()}
        if a is not None:
            q = D.quadrature_divergence(rho, sigma, grj_rule(int(cfg["m"]), cfg["fixed_end"], float(a)), "quasi_alpha")
            out["quadrature_quasi"] = q.to_json()
        return out
    raise ValidationError(f"unknown oracle kind {kind!r}")


def cmd_oracle(args) -> int:
    cfg = _resolve("oracle", args)
    rho, sigma = _states(cfg)
    result = _oracle_values(cfg, rho, sigma)
    out = args.out
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "oracle.json")
    _write_json(path, result)
    _finish(out, "oracle", cfg, [path])
    print(json.dumps(result))
    return 0


def _ft_config(cfg: dict):
    from .vqa import FtConfig

    return FtConfig(iterations=int(cfg["k"]), learning_rate=float(cfg["lr"]), shots=int(cfg["shots"]),
                    rank_cap=None if cfg["rank_cap"] is None else int(cfg["rank_cap"]), seed=int(cfg["seed"]),
                    adaptive_lr=bool(cfg["adaptive"]))


def cmd_estimate(args) -> int:
    from . import divergences as D
    from .quadrature import grj_rule
    from .vqa import EstimationReport, estimate_ft, estimate_petz, estimate_relative_entropy

    cfg = _resolve("estimate", args)
    conf = _ft_config(cfg)
    kind = cfg["kind"]
    m, end = int(cfg["m"]), cfg["fixed_end"]
    alpha = float(cfg["alpha"])
    t0 = time.time()
    oracle = None
    if cfg["distributed"]:
        from .distributed import distributed_estimate

        if not (cfg["rho"] and cfg["sigma"]):
            raise ValidationError("--distributed needs --rho ADDR and --sigma ADDR")
        rule = None
        if kind == "relent":
            rule = grj_rule(m, end)
        elif kind == "petz" and alpha != 2.0:
            rule = grj_rule(m, end, alpha)
        report = distributed_estimate(cfg["rho"], cfg["sigma"], kind, conf, t=float(cfg["t"]), alpha=alpha,
                                      rule=rule, workers=int(cfg["workers"]), timeout=float(cfg["timeout"]))
    else:
        rho, sigma = _states(cfg)
        if kind == "relent":
            report = estimate_relative_entropy(rho, sigma, conf, grj_rule(m, end), workers=int(cfg["workers"]))
            oracle = D.relative_entropy(rho, sigma).value
        elif kind == "petz":
            rule = None if alpha == 2.0 else grj_rule(m, end, alpha)
            report = estimate_petz(rho, sigma, alpha, conf, rule, workers=int(cfg["workers"]))
            oracle = D.petz_renyi(rho, sigma, alpha).value
        elif kind == "ft":
            res = estimate_ft(rho, sigma, float(cfg["t"]), conf)
            report = EstimationReport("ft", [res], None, res.value, config=conf.to_json())
            oracle = D.ft_divergence_exact(rho, sigma, float(cfg["t"])).value
        else:
            raise ValidationError(f"kind must be ft, relent or petz, got {kind!r}")
    body = report.to_json()
    if oracle is not None:
        body["oracle"] = oracle
        body["relative_error"] = abs(report.aggregate - oracle) / abs(oracle) if oracle else None
    out = args.out
    os.makedirs(out, exist_ok=True)
    rep_path = os.path.join(out, "report.json")
    _write_json(rep_path, body)
    tr_path = os.path.join(out, "traces.csv")
    _write_csv(tr_path, ["node", "t", "iteration", "loss", "lr"], report.trace_rows())
    _finish(out, "estimate", cfg, [rep_path, tr_path], {"elapsed_s": round(time.time() - t0, 3)})
    summary = {"kind": report.kind, "aggregate": report.aggregate, "oracle": oracle,
               "relative_error": body.get("relative_error"), "notes": report.notes, "requests": report.requests}
    print(json.dumps(summary))
    return 0


def cmd_bp_scan(args) -> int:
    from .experiments import gradient_scaling, normalized

    cfg = _resolve("bp-scan", args)
    losses = [s.strip() for s in str(cfg["loss"]).split(",") if s.strip()]
    qubits, layers = _parse_range(cfg["qubits"]), _parse_range(cfg["layers"])
    rows = []
    for kind in losses:
        for L in layers:
            recs = [gradient_scaling(kind, n, L, int(cfg["samples"]), int(cfg["seed"]), float(cfg["t"])) for n in qubits]
            norm = normalized([r.overall() for r in recs])
            for r, nv in zip(recs, norm):
                rows.append([kind, r.n_qubits, L, r.samples, r.overall(), float(nv),
                             r.mean_abs_gradient.get("theta", ""), r.mean_abs_gradient.get("beta", ""),
                             r.mean_abs_gradient.get("alpha", "")])
    out = args.out
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "bp_scan.csv")
    _write_csv(path, ["loss", "n_qubits", "layers", "samples", "mean_abs_grad", "normalized",
                      "grad_theta", "grad_beta", "grad_alpha"], rows)
    _finish(out, "bp-scan", cfg, [path])
    print(json.dumps({"rows": len(rows), "csv": path}))
    return 0


def cmd_superadd_scan(args) -> int:
    from .experiments import GAConfig, PauliChannel, superadd_grid, superadditivity_scan
    from .vqa import FtConfig

    cfg = _resolve("superadd-scan", args)
    if cfg["points"]:
        grid = []
        for chunk in str(cfg["points"]).split(";"):
            p = [float(x) for x in chunk.split(",")]
            if len(p) != 3:
                raise ValidationError("each point needs p1,p2,p3")
            grid.append(PauliChannel.from_xyz(*p))
    else:
        grid = superadd_grid(float(cfg["step"]), float(cfg["top"]))
    ga = GAConfig(population=int(cfg["population"]), generations=int(cfg["generations"]),
                  mutation_sigma=float(cfg["mutation_sigma"]), elite_count=int(cfg["elite_count"]),
                  seed=int(cfg["seed"]))
    rep = superadditivity_scan(grid, ga, cfg["mode"], int(cfg["layers"]), int(cfg["workers"]),
                               FtConfig(iterations=int(cfg["k"]), seed=int(cfg["seed"])))
    out = args.out
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "superadd_scan.csv")
    _write_csv(path, ["p1", "p2", "p3", "single_use", "two_use_half", "gap", "exact_gap", "confirmed"],
               [[r.p[1], r.p[2], r.p[3], r.single_use, r.two_use_half, r.gap, r.exact_gap, str(r.confirmed).lower()]
                for r in rep.rows])
    _finish(out, "superadd-scan", cfg, [path])
    print(json.dumps({"channels": len(rep.rows), "superadditive": len(rep.superadditive()), "csv": path}))
    return 0


def cmd_serve(args) -> int:
    from .distributed import serve_device
    from .states import load_state

    state = load_state(args.state, relaxed_trace=True)
    dev = serve_device(state, args.bind, args.role)
    host, port = dev.address
    print(json.dumps({"role": args.role, "address": f"{host}:{port}", "dim": state.dim}), flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        dev.shutdown()
    return 0


# parser

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--config", help="JSON config file or a previous manifest")


def _state_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rho", help="rho state file (or device address with --distributed)")
    p.add_argument("--sigma", help="sigma state file (or device address with --distributed)")
    p.add_argument("--seed-states", dest="seed_states", help="S or S_rho,S_sigma: seeded random states")
    p.add_argument("--qubits", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="entroq", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"entroq {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quadrature", help="GRJ rule and approximation-error table")
    q.add_argument("--m", type=int)
    q.add_argument("--fixed-end", dest="fixed_end", choices=("zero", "one"))
    q.add_argument("--alpha", type=float, help="Jacobi weight parameter; omit for the uniform weight")
    q.add_argument("--x-grid", dest="x_grid", help="a:b:n or comma list")
    _common(q)
    q.set_defaults(func=cmd_quadrature)

    o = sub.add_parser("oracle", help="exact divergences")
    o.add_argument("--kind", choices=("relent", "petz", "ft", "quadrature"))
    o.add_argument("--alpha", type=float)
    o.add_argument("--t", type=float)
    o.add_argument("--m", type=int)
    o.add_argument("--fixed-end", dest="fixed_end", choices=("zero", "one"))
    _state_flags(o)
    _common(o)
    o.set_defaults(func=cmd_oracle)

    e = sub.add_parser("estimate", help="variational estimation")
    e.add_argument("kind", nargs="?", choices=("ft", "relent", "petz"))
    e.add_argument("--t", type=float)
    e.add_argument("--alpha", type=float)
    e.add_argument("--m", type=int)
    e.add_argument("--fixed-end", dest="fixed_end", choices=("zero", "one"))
    e.add_argument("--shots", type=int)
    e.add_argument("--k", type=int, help="iterations per node")
    e.add_argument("--lr", type=float)
    e.add_argument("--adaptive", action="store_const", const=True)
    e.add_argument("--seed", type=int)
    e.add_argument("--rank-cap", dest="rank_cap", type=int)
    e.add_argument("--workers", type=int)
    e.add_argument("--timeout", type=float)
    e.add_argument("--distributed", action="store_const", const=True)
    _state_flags(e)
    _common(e)
    e.set_defaults(func=cmd_estimate)

    b = sub.add_parser("bp-scan", help="barren-plateau gradient scaling")
    b.add_argument("--qubits", help="e.g. 2-5")
    b.add_argument("--layers", help="e.g. 1-5")
    b.add_argument("--samples", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--t", type=float)
    b.add_argument("--loss", help="l1, l2 or l1,l2")
    _common(b)
    b.set_defaults(func=cmd_bp_scan)

    s = sub.add_parser("superadd-scan", help="Pauli-channel superadditivity scan")
    s.add_argument("--step", type=float)
    s.add_argument("--top", type=float)
    s.add_argument("--points", help="p1,p2,p3;p1,p2,p3;...")
    s.add_argument("--mode", choices=("exact", "vqa"))
    s.add_argument("--population", type=int)
    s.add_argument("--generations", type=int)
    s.add_argument("--mutation-sigma", dest="mutation_sigma", type=float)
    s.add_argument("--elite-count", dest="elite_count", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--layers", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--k", type=int, help="iterations per node in vqa mode")
    _common(s)
    s.set_defaults(func=cmd_superadd_scan)

    v = sub.add_parser("serve", help="host one state as a sampling device")
    v.add_argument("--state", required=True)
    v.add_argument("--bind", default="127.0.0.1:0")
    v.add_argument("--role", choices=("rho", "sigma"), default="rho")
    v.set_defaults(func=cmd_serve)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return int(args.func(args) or 0)
    except EntroqError as exc:
        print(f"entroq: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"entroq: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
