"""Batch front end: ``pamlab run CONFIG`` and ``pamlab sweep CONFIG --param NAME --values ...``.

A config is a JSON or YAML tree::

    experiment: spectrum
    seed: 0
    output_dir: out/spectrum
    model:  {dim: 1, kernel: nearest_neighbor, V: {dim: 1, entries: [[[0], 1.0]]}, sigma: 1.0}
    numerics: {L: 50, tol: 1.0e-6}

Unknown keys are rejected.  Every run writes ``results.csv`` and/or
``results.json`` plus ``manifest.json``.  Exit codes: 0 success, 1 numeric
failure, 2 config error.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .lattice import BoxDomain, CorrelationKernel, JumpKernel, Potential, correlator_from_b

log = logging.getLogger("pamlab")

EXPERIMENTS = ("simulate", "moments", "lyapunov", "spectrum", "sigma-cr", "bargmann", "sigma0",
               "classify", "partition", "zero-mean-1d", "scaling-check")
SIGMA_FLOOR_ZERO_MEAN = 0.01


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# config


@dataclass
class Model:
    dim: int = 1
    kernel: object = "nearest_neighbor"
    b: object = None
    V: object = None
    kappa: float = 0.5
    sigma: float = 1.0
    alpha: float = 2.0
    p: int = 2
    diffusion_scale: float = 1.0


@dataclass
class Numerics:
    L: int | None = None
    max_radius: int | None = None
    doubling: bool = True
    dt: float = 0.01
    scheme: str = "exp_split"
    grid_n: int | None = None
    n_members: int = 1000
    n_paths: int = 0
    t_max: float = 2.0
    t_grid: list | None = None
    tol: float = 1e-6
    p_min: int = 2
    p_max: int = 4
    sigma_max: float = 100.0
    method: str | None = None
    dump_eigenvector: bool = False
    workers: int = 1


@dataclass
class RunConfig:
    experiment: str
    model: Model = field(default_factory=Model)
    numerics: Numerics = field(default_factory=Numerics)
    seed: int = 0
    output_dir: str = "out"

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name for f in fields(cls)}
    extra = sorted(set(data) - known)
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(extra)}")
    return cls(**data)


def _check(cond, name, msg):
    if not cond:
        raise ConfigError(f"{name}: {msg}")


def _is_num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    data = copy.deepcopy(data)
    extra = sorted(set(data) - {"experiment", "model", "numerics", "seed", "output_dir"})
    if extra:
        raise ConfigError(f"config: unknown key(s) {', '.join(extra)}")
    if "experiment" not in data:
        raise ConfigError("experiment: required")
    cfg = RunConfig(data["experiment"], _build(Model, data.get("model", {}), "model"),
                    _build(Numerics, data.get("numerics", {}), "numerics"),
                    data.get("seed", 0), data.get("output_dir", "out"))
    _check(cfg.experiment in EXPERIMENTS, "experiment", f"must be one of {', '.join(EXPERIMENTS)}")
    _check(isinstance(cfg.seed, int) and not isinstance(cfg.seed, bool) and 0 <= cfg.seed < 2**64,
           "seed", "must be an integer in [0, 2^64)")
    _check(isinstance(cfg.output_dir, str), "output_dir", "must be a path string")
    m, n = cfg.model, cfg.numerics
    _check(isinstance(m.dim, int) and 1 <= m.dim <= 6, "model.dim", "must be an integer in [1, 6]")
    for name in ("kappa", "sigma"):
        _check(_is_num(getattr(m, name)) and getattr(m, name) >= 0, f"model.{name}", "must be >= 0")
    _check(_is_num(m.alpha) and m.alpha > 0, "model.alpha", "must be > 0")
    _check(isinstance(m.p, int) and m.p >= 1, "model.p", "must be an integer >= 1")
    _check(_is_num(m.diffusion_scale) and m.diffusion_scale > 0, "model.diffusion_scale",
           "must be > 0")
    if n.L is not None:
        _check(isinstance(n.L, int) and n.L >= 1, "numerics.L", "must be an integer >= 1")
    if n.max_radius is not None:
        _check(isinstance(n.max_radius, int) and n.max_radius >= 1, "numerics.max_radius",
               "must be an integer >= 1")
    _check(_is_num(n.dt) and n.dt > 0, "numerics.dt", "must be > 0")
    _check(n.scheme in ("exp_split", "ito_euler"), "numerics.scheme", "exp_split or ito_euler")
    if n.grid_n is not None:
        _check(isinstance(n.grid_n, int) and n.grid_n >= 8, "numerics.grid_n", "must be >= 8")
    _check(isinstance(n.n_members, int) and n.n_members >= 2, "numerics.n_members", "must be >= 2")
    _check(isinstance(n.n_paths, int) and n.n_paths >= 0, "numerics.n_paths", "must be >= 0")
    _check(_is_num(n.t_max) and n.t_max > 0, "numerics.t_max", "must be > 0")
    if n.t_grid is not None:
        _check(isinstance(n.t_grid, list) and len(n.t_grid) >= 1 and all(_is_num(t) and t >= 0
               for t in n.t_grid) and all(a < b for a, b in zip(n.t_grid, n.t_grid[1:])),
               "numerics.t_grid", "must be an increasing list of nonnegative numbers")
    _check(_is_num(n.tol) and n.tol > 0, "numerics.tol", "must be > 0")
    _check(isinstance(n.p_min, int) and isinstance(n.p_max, int) and 2 <= n.p_min <= n.p_max,
           "numerics.p_min/p_max", "need integers 2 <= p_min <= p_max")
    _check(_is_num(n.sigma_max) and n.sigma_max > 0, "numerics.sigma_max", "must be > 0")
    _check(isinstance(n.workers, int) and n.workers >= 1, "numerics.workers", "must be >= 1")
    # objects that must construct cleanly (normalization, symmetry, ...)
    try:
        kernel = _kernel(m)
        if m.b is not None:
            _b(m)
        if m.V is not None:
            _V(m)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"model: {exc}") from exc
    _check(kernel.dim == m.dim, "model.kernel", "dimension differs from model.dim")
    if cfg.experiment == "zero-mean-1d":
        _check(m.dim == 1, "model.dim", "zero-mean-1d is one-dimensional")
        _check(m.sigma >= SIGMA_FLOOR_ZERO_MEAN, "model.sigma",
               f"must be >= {SIGMA_FLOOR_ZERO_MEAN} for zero-mean-1d")
    if cfg.experiment in ("spectrum",) and n.L is not None:
        _check(n.L >= 4, "numerics.L", "box radius must be >= 4")
    return cfg


def load_config(path: str | Path) -> dict:
    text = Path(path).read_text()
    if str(path).endswith((".yaml", ".yml")):
        return yaml.safe_load(text)
    return json.loads(text)


def _kernel(m: Model) -> JumpKernel:
    if m.kernel == "nearest_neighbor":
        return JumpKernel.nearest_neighbor(m.dim)
    if isinstance(m.kernel, (dict, str)):
        return JumpKernel.from_json(m.kernel)
    raise ValueError("kernel must be 'nearest_neighbor' or {dim, entries}")


def _b(m: Model) -> CorrelationKernel:
    if m.b is None:
        return CorrelationKernel.delta(m.dim)
    return CorrelationKernel.from_json(m.b)


def _V(m: Model) -> Potential:
    if m.V is None:
        return Potential.delta(m.dim)
    return Potential.from_json(m.V)


def _library_versions() -> dict:
    return {"python": sys.version.split()[0], "numpy": np.__version__, "scipy": scipy.__version__}


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# --------------------------------------------------------------------------
# experiments: each returns (csv_text or None, json_obj or None, stdout text)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def _t_grid(n: Numerics):
    if n.t_grid is not None:
        return [float(t) for t in n.t_grid]
    return [float(t) for t in np.linspace(0.0, n.t_max, 11)[1:]]


def _exp_simulate(cfg):
    from .spde import SpdeConfig, run_ensemble

    m, n = cfg.model, cfg.numerics
    dom = BoxDomain(m.dim, n.L or {1: 64, 2: 32}.get(m.dim, 8), "periodic")
    sc = SpdeConfig(_kernel(m), _b(m), m.kappa, dom, n.dt, n.scheme)
    rec = _t_grid(n) if n.t_grid is not None else None
    t_max = rec[-1] if rec else n.t_max
    stats = run_ensemble(sc, t_max, n.n_members, m.p, cfg.seed, record_times=rec)
    z = np.abs(stats.estimates[:, 0] - 1.0) / np.maximum(stats.stderrs[:, 0], 1e-300)
    summary = {"n_members": stats.n_members, "max_m1_zscore": float(np.max(z[1:])) if len(z) > 1 else 0.0}
    return stats.to_csv(), summary, ""


def _exp_moments(cfg):
    from .moments import solve_m2
    from .walks import fk_moment_curve

    m, n = cfg.model, cfg.numerics
    kernel, B = _kernel(m), correlator_from_b(_b(m))
    tg = _t_grid(n)
    rows = []
    if m.p == 2:
        dom = BoxDomain(m.dim, n.L or {1: 64, 2: 32}.get(m.dim, 12), "periodic")
        ser = solve_m2(kernel, m.kappa, B, tg, dom)
        rows += [("ode", 2, m.kappa, t, math.log(v), 0.0, 0) for t, v in zip(tg, ser.at_origin())]
    if n.n_paths:
        for e in fk_moment_curve(kernel, m.p, m.kappa, B, tg, n.n_paths, cfg.seed):
            rows.append(("fk", e.p, e.kappa, e.t, e.log_estimate, e.stderr_log, e.n_paths))
    header = ["source", "p", "kappa", "t", "estimate_log", "stderr_log", "n_paths"]
    return _csv(header, rows), None, ""


def _exp_lyapunov(cfg):
    from .moments import build_lyapunov_table, p0_estimate

    m, n = cfg.model, cfg.numerics
    kernel, B = _kernel(m), correlator_from_b(_b(m))
    tg = _t_grid(n) if n.n_paths else None
    table = build_lyapunov_table(kernel, m.kappa, B, range(n.p_min, n.p_max + 1), tg,
                                 n.n_paths, cfg.seed)
    out = json.loads(table.to_json())
    out["p0_bounds"] = p0_estimate(kernel, m.kappa, B, "bounds")
    return table.to_csv(), out, ""


def _spectral_op(cfg, default_radius):
    from .spectral import SchrodingerOp

    m, n = cfg.model, cfg.numerics
    dom = BoxDomain(m.dim, n.L or default_radius, "killed")
    return SchrodingerOp(_kernel(m), _V(m), m.sigma, m.diffusion_scale, dom)


def _exp_spectrum(cfg):
    from .spectral import top_eigenvalue

    n = cfg.numerics
    op = _spectral_op(cfg, {1: 50, 2: 16, 3: 10}.get(cfg.model.dim, 4))
    max_radius = op.domain.radius if not n.doubling else n.max_radius
    rep = top_eigenvalue(op, max_radius=max_radius, tol=n.tol)
    L = rep.box_trace[-1][0]
    csv_text = _csv(["L", "lambda_top", "residual", "positive_eigenvalue_found", "status"],
                    [(L, rep.lambda_top, rep.residual, rep.positive_eigenvalue_found, rep.status)])
    out = json.loads(rep.to_json())
    out["status"] = rep.status
    if n.dump_eigenvector:
        out["_eigenvector_csv"] = rep.eigenvector_csv()
    if not rep.converged:
        raise NumericFailure(f"eigensolver did not converge; best iterate {rep.lambda_top!r}")
    return csv_text, out, ""


def _exp_sigma_cr(cfg):
    from .spectral import sigma_cr

    m, n = cfg.model, cfg.numerics
    res = sigma_cr(_kernel(m), _V(m), n.sigma_max, n.tol, n.method or "birman_schwinger",
                   n.grid_n, n.L or 8)
    out = {"sigma_cr": res.sigma_cr if res.found else "none below sigma_max",
           "bracket": list(res.bracket), "method": res.method, "green_origin": res.green_origin}
    row = (res.sigma_cr if res.found else "none", res.bracket[0], res.bracket[1], res.method)
    return _csv(["sigma_cr", "bracket_lo", "bracket_hi", "method"], [row]), out, ""


def _exp_bargmann(cfg):
    from .spectral import bargmann_quantities

    m, n = cfg.model, cfg.numerics
    s_raw, s_simple = bargmann_quantities(_kernel(m), _V(m), m.sigma, m.alpha, n.grid_n)
    out = {"sigma": m.sigma, "S_raw": s_raw, "S_simplified": s_simple}
    return _csv(["sigma", "S_raw", "S_simplified"], [(m.sigma, s_raw, s_simple)]), out, ""


def _exp_sigma0(cfg):
    from .spectral import sigma0_uniqueness_bound

    m, n = cfg.model, cfg.numerics
    s0 = sigma0_uniqueness_bound(_kernel(m), _V(m), n.grid_n)
    val = "infinite" if math.isinf(s0) else s0
    return _csv(["sigma0"], [(val,)]), {"sigma0": val}, ""


def _exp_classify(cfg):
    from .spectral import SymbolFamily, classify_recurrence, recurrence_diagnostic

    m = cfg.model
    label = classify_recurrence(SymbolFamily(m.dim, m.alpha)) if m.alpha <= 2 else None
    if label is None:
        raise ConfigError("model.alpha: must lie in (0, 2] for classify")
    out = {"d": m.dim, "alpha": m.alpha, "label": label}
    if m.alpha == 2:
        out["kernel_diagnostic"] = recurrence_diagnostic(_kernel(m))
    return _csv(["d", "alpha", "label"], [(m.dim, float(m.alpha), label)]), out, label


def _exp_partition(cfg):
    from .partition import build_partition, verify_partition

    p = cfg.model.p
    if p < 2:
        raise ConfigError("model.p: must be >= 2 for partition")
    s = build_partition(p)
    rep = verify_partition(s)
    rows = [(k, i, j) for k, g in enumerate(s.groups, start=1) for i, j in g]
    out = {"p": p, "valid": rep.valid, "n_pairs": rep.n_pairs, "n_groups": rep.n_groups,
           "display": s.display()}
    if not rep.valid:
        raise NumericFailure(f"invalid partition: {rep.violation}")
    return _csv(["group", "i", "j"], rows), out, s.display()


def _exp_zero_mean(cfg):
    from .lattice import Potential as _P
    from .zero_mean import confirm_positive_eigenvalue, zero_mean_1d_construct

    m = cfg.model
    V = _V(m) if m.V is not None else _P.from_entries(1, {(0,): 2.0, (1,): -1.0, (-1,): -1.0})
    rep = zero_mean_1d_construct(V, m.sigma)
    out = rep.summary()
    count, lam = confirm_positive_eigenvalue(V, m.sigma, 2 * rep.m)
    out.update(dense_count=count, dense_lambda_top=lam, box_radius=2 * rep.m)
    header = list(out)
    return _csv(header, [[out[k] for k in header]]), out, ""


def _exp_scaling(cfg):
    from .moments import scaling_check, spectral_scaling_residual

    m, n = cfg.model, cfg.numerics
    kernel, B = _kernel(m), correlator_from_b(_b(m))
    p = max(m.p, 2)
    res = scaling_check(kernel, m.kappa, m.alpha, p, B, n.t_max, None, n.n_paths or 20_000,
                        cfg.seed)
    out = {"p": p, "alpha": m.alpha, "kappa": m.kappa, "t": n.t_max, "residual": res}
    if p == 2:
        out["spectral_residual"] = spectral_scaling_residual(kernel, m.kappa, m.alpha, B,
                                                             n.L or 200)
    header = list(out)
    return _csv(header, [[out[k] for k in header]]), out, ""


class NumericFailure(RuntimeError):
    pass


DISPATCH = {"simulate": _exp_simulate, "moments": _exp_moments, "lyapunov": _exp_lyapunov,
            "spectrum": _exp_spectrum, "sigma-cr": _exp_sigma_cr, "bargmann": _exp_bargmann,
            "sigma0": _exp_sigma0, "classify": _exp_classify, "partition": _exp_partition,
            "zero-mean-1d": _exp_zero_mean, "scaling-check": _exp_scaling}


def execute(cfg: RunConfig) -> tuple[str | None, dict | None, str]:
    """Run the experiment in memory; numeric problems surface as :class:`NumericFailure`."""
    try:
        return DISPATCH[cfg.experiment](cfg)
    except (ConfigError, NumericFailure):
        raise
    except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        raise NumericFailure(f"{type(exc).__name__}: {exc}") from exc


def run(cfg: RunConfig, out_dir: Path | None = None) -> int:
    out_dir = Path(out_dir or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    csv_text, obj, stdout = execute(cfg)
    if csv_text is not None:
        with open(out_dir / "results.csv", "w", newline="") as fh:
            fh.write(csv_text)
    if obj is not None:
        vec = obj.pop("_eigenvector_csv", None)
        if vec is not None:
            (out_dir / "eigenvector.csv").write_text(vec)
        (out_dir / "results.json").write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    manifest = {"config": cfg.to_dict(), "config_hash": config_hash(cfg), "seed": cfg.seed,
                "version": __version__, "libraries": _library_versions(), "wall_time_s": time.perf_counter() - start}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if stdout:
        print(stdout)
    return 0


# --------------------------------------------------------------------------
# sweeps


def _set_path(tree: dict, dotted: str, value):
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def _get_path(tree: dict, dotted: str):
    node = tree
    for k in dotted.split("."):
        node = node[k]
    return node


def _sweep_one(args):
    data, param, value = args
    try:
        cfg = parse_config(data)
        csv_text, _, _ = execute(cfg)
        return value, csv_text, None
    except (ConfigError, NumericFailure) as exc:
        return value, None, str(exc)


def sweep(template: dict, param: str, values: list, workers: int = 1) -> str:
    """Run the template once per value and stack the CSVs, keyed by the swept value."""
    pieces = []
    for v in values:
        data = copy.deepcopy(template)
        _set_path(data, param, v)
        pieces.append((data, param, v))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_sweep_one, pieces))
    else:
        results = [_sweep_one(p) for p in pieces]
    header = None
    rows = []
    for value, text, err in results:
        if text is None:
            rows.append((value, None, err))
            continue
        lines = list(csv.reader(io.StringIO(text)))
        header = header or lines[0]
        rows.extend((value, r, None) for r in lines[1:])
    header = header or []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([param, *header, "error"])
    for value, r, err in rows:
        cells = r if r is not None else [""] * len(header)
        w.writerow([repr(value) if isinstance(value, float) else value, *cells, err or ""])
    return buf.getvalue()


def _parse_values(text: str) -> list:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        try:
            out.append(int(tok))
        except ValueError:
            out.append(float(tok))
    return out


# --------------------------------------------------------------------------
# entry point


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="pamlab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    pr = sub.add_parser("run", help="run one experiment")
    pr.add_argument("config")
    pr.add_argument("--seed", type=int, default=None, help="override the config seed")
    pr.add_argument("--output-dir", default=None)
    ps = sub.add_parser("sweep", help="run an experiment over a list of parameter values")
    ps.add_argument("config")
    ps.add_argument("--param", required=True, help="dotted name, e.g. model.sigma")
    ps.add_argument("--values", required=True, help="comma separated")
    ps.add_argument("--seed", type=int, default=None)
    ps.add_argument("--output-dir", default=None)
    ps.add_argument("--workers", type=int, default=None)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        data = load_config(args.config)
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        if args.seed is not None:
            data["seed"] = args.seed
        if args.output_dir is not None:
            data["output_dir"] = args.output_dir
        cfg = parse_config(data)
        if args.command == "sweep":
            template = cfg.to_dict()
            try:
                _get_path(template, args.param)
            except (KeyError, TypeError):
                raise ConfigError(f"--param: {args.param} is not a config field") from None
            cur = _get_path(template, args.param)
            if cur is not None and not _is_num(cur):
                raise ConfigError(f"--param: {args.param} is not numeric")
            values = _parse_values(args.values)
            workers = args.workers or cfg.numerics.workers
            out_dir = Path(cfg.output_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            start = time.perf_counter()
            text = sweep(template, args.param, values, workers)
            with open(out_dir / "results.csv", "w", newline="") as fh:
                fh.write(text)
            manifest = {"config": template, "config_hash": config_hash(cfg), "seed": cfg.seed,
                        "version": __version__, "libraries": _library_versions(), "sweep": {"param": args.param, "values": values},
                        "wall_time_s": time.perf_counter() - start}
            (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
            return 0
        return run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
