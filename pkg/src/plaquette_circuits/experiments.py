"""Experiment drivers shared by the CLI: ensembles, sweeps and artifact output.

Every ensemble member ``i`` draws its randomness from
``trajectory_seed(seed, i)``, so any single member can be re-run alone.
Members are dispatched to a process pool when the ``PLAQUETTE_WORKERS``
environment variable asks for more than one worker; results are always
merged in index order.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .circuit import CSV_COLUMNS, CircuitConfig, fit_log_slope, run, trajectory_seed
from .config import ExperimentConfig
from .errors import ConfigError
from .kmc import QuenchTrace, collapse_transform, detect_plateaus, run_quench
from .kw import dual_partition_log, finite_beta_renyi2, partition_log_bruteforce, redundancy_basis
from .plaquette import DisorderGrid, boundary_quotient_generators, build_parity_checks, support_statistics, symmetry_basis
from .replica import build_H2, build_H4, gamma_estimate, half_boundary, renyi2_via_groups, renyi2_via_replicas

__all__ = [
    "PlotManifest",
    "ManifestEntry",
    "run_experiment",
    "sweep",
    "worker_count",
    "map_members",
    "write_csv",
    "renyi_report",
    "kw_report",
]

WORKERS_ENV = "PLAQUETTE_WORKERS"
GRID_KINDS = ("mipt-sweep", "finite-beta-sweep", "support-stats", "collapse")


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV}: expected an integer, got {raw!r}") from exc
    return max(1, n)


def map_members(fn: Callable, args: Sequence) -> list:
    """``[fn(a) for a in args]``, possibly on a process pool; order preserved."""
    n = worker_count()
    if n == 1 or len(args) < 2:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, args))


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    path.write_text(buf.getvalue())
    return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    if isinstance(v, np.integer):
        return int(v)
    return v


def _json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o))


def _mean_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


# ---------------------------------------------------------------------------
# manifest


@dataclass
class ManifestEntry:
    file: str
    x: str
    y: str
    x_scale: str = "linear"
    y_scale: str = "linear"
    series: str = ""
    reference: str = ""


@dataclass
class PlotManifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def add(self, **kw) -> None:
        self.entries.append(ManifestEntry(**kw))

    def write(self, directory: Path) -> Path:
        for e in self.entries:
            if not (directory / e.file).exists():
                raise FileNotFoundError(f"manifest references missing file {e.file}")
        return _json(directory / "manifest.json", {"plots": [asdict(e) for e in self.entries]})


# ---------------------------------------------------------------------------
# single-item reports used by the CLI and by experiments


def _grid(L: int, T: int, p: float, seed: int, index: int) -> DisorderGrid:
    return DisorderGrid.random(L, T, p, trajectory_seed(seed, index))


def renyi_report(grid: DisorderGrid, initial: str | None, cells: int | None = None, method: str = "both") -> dict:
    sys = build_parity_checks(grid, initial)
    A = half_boundary(sys, cells)
    out: dict = {"L": grid.L, "T": grid.T, "region_cells": sys.L // 2 if cells is None else cells}
    if method in ("replica", "both"):
        k2 = build_H2(sys).nullity
        k4 = build_H4(sys, A).nullity
        out.update(k2=k2, k4=k4, S2_replica=2 * k2 - k4)
    if method in ("groups", "both"):
        out["S2_groups"] = renyi2_via_groups(sys, A)
    if method == "both":
        out["methods_agree"] = out["S2_replica"] == out["S2_groups"]
    out["S2"] = out.get("S2_replica", out.get("S2_groups"))
    return out


def kw_report(grid: DisorderGrid, initial: str | None, beta: float, replicas: int = 1) -> dict:
    if replicas not in (1, 2):
        raise ConfigError("replicas must be 1 or 2")
    sys = build_parity_checks(grid, initial)
    H = sys.H if replicas == 1 else build_H2(sys).H_rep
    basis = redundancy_basis(H)
    log_dual = H.cols * math.log(2) + H.rows * math.log(math.cosh(beta)) + dual_partition_log(basis, math.tanh(beta))
    log_brute = partition_log_bruteforce(H, beta)
    return {"N": H.cols, "M": H.rows, "Q": basis.Q, "beta": beta, "logZ_dual": log_dual,
            "logZ_brute": log_brute, "residual": abs(log_dual - log_brute)}


# ---------------------------------------------------------------------------
# members (module level so they pickle)


def _circuit_member(args):
    cfg, = args
    rec, _ = run(cfg)
    return rec


def _s2_member(args):
    L, T, p, seed, index, initial = args
    sys = build_parity_checks(_grid(L, T, p, seed, index), initial)
    return renyi2_via_groups(sys, half_boundary(sys))


def _support_member(args):
    L, T, p, seed, index, initial, measure = args
    sys = build_parity_checks(_grid(L, T, p, seed, index), initial)
    rep = boundary_quotient_generators(sys, symmetry_basis(sys))
    return support_statistics(rep, measure)["extensive_fraction"]


def _finite_beta_member(args):
    L, T, p, seed, index, initial, betas = args
    sys = build_parity_checks(_grid(L, T, p, seed, index), initial)
    A = half_boundary(sys)
    return [finite_beta_renyi2(sys, A, b) for b in betas], renyi2_via_replicas(sys, A)


def _quench_member(args):
    L, p, beta, t_max, seed, samples, t_min = args
    return run_quench(L, p, beta, t_max, seed, samples, t_min)


def mean_trace(traces: list[QuenchTrace]) -> QuenchTrace:
    eps = np.mean([tr.epsilon for tr in traces], axis=0)
    meta = dict(traces[0].metadata)
    meta["seeds"] = [tr.metadata["seed"] for tr in traces]
    meta.pop("seed", None)
    return QuenchTrace(traces[0].t.copy(), eps, meta)


# ---------------------------------------------------------------------------
# experiments


def _circuit(cfg: ExperimentConfig, out: Path, man: PlotManifest) -> dict:
    P = cfg.params
    base = CircuitConfig(P["L"], P["t_max"], P["p"], P["init"], P["perturbation"], 0, P["record"])
    members = [base.with_seed(trajectory_seed(P["seed"], i)) for i in range(P["ensemble"])]
    recs = map_members(_circuit_member, [(m,) for m in members])
    for i, rec in enumerate(recs):
        (out / f"trajectory_{i:03d}.csv").write_text(rec.to_csv())
    cols = {c: np.mean([r.columns()[c] for r in recs], axis=0) for c in CSV_COLUMNS}
    write_csv(out / "trajectory_mean.csv", CSV_COLUMNS, list(zip(*(cols[c] for c in CSV_COLUMNS))))
    lo = P["fit_t_min"] or P["L"]
    hi = P["fit_t_max"] or P["t_max"]
    summary = {"members": len(recs), "seeds": [m.seed for m in members],
               "pe_bound_violations": sum(r.pe_bound_violations() for r in recs)}
    try:
        a, c, se = fit_log_slope(cols["t"], cols["S_half"], lo, hi)
        az, cz, sez = fit_log_slope(cols["t"], cols["N_Z"], lo, hi)
        summary.update(fit_window=[lo, hi], slope_S_half=a, offset_S_half=c, slope_S_half_stderr=se,
                       slope_N_Z=az, slope_N_Z_stderr=sez)
    except ValueError:
        summary["fit_window"] = None
    for y in ("S_half", "N_Z", "PE_Z"):
        man.add(file="trajectory_mean.csv", x="t", y=y, x_scale="log", series=f"p={P['p']}",
                reference="expected log10 slope about 3.7 for S_half and N_Z" if y != "PE_Z" else "")
    return summary


def _mipt(cfg: ExperimentConfig, out: Path, man: PlotManifest) -> dict:
    P = cfg.params
    rows, gammas = [], {}
    for p in P["p_grid"]:
        per_L = {}
        for L in P["L_grid"]:
            T = P["T"] or 2 * L
            vals = map_members(_s2_member, [(L, T, p, P["seed"], i, P["initial"]) for i in range(P["ensemble"])])
            m, se = _mean_stderr(vals)
            rows.append((p, L, T, m, se, len(vals)))
            per_L[L] = vals
        if len(per_L) >= 3:
            g, gse = gamma_estimate(per_L)
            gammas[str(p)] = {"gamma": g, "stderr": gse}
    write_csv(out / "summary.csv", ("p", "L", "T", "S2_half_mean", "S2_half_stderr", "n"), rows)
    man.add(file="summary.csv", x="L", y="S2_half_mean", series="p", reference="volume law below p_c near 0.25")
    return {"gamma": gammas}


def _support(cfg: ExperimentConfig, out: Path, man: PlotManifest) -> dict:
    P = cfg.params
    rows = []
    for p in P["p_grid"]:
        vals = map_members(_support_member, [(P["L"], P["T"], p, P["seed"], i, P["initial"], P["measure"])
                                             for i in range(P["ensemble"])])
        m, se = _mean_stderr(vals)
        rows.append((p, m, se, len(vals)))
    write_csv(out / "summary.csv", ("p", "extensive_fraction_mean", "extensive_fraction_stderr", "n"), rows)
    man.add(file="summary.csv", x="p", y="extensive_fraction_mean", reference="crossover near p_c about 0.25")
    return {"measure": P["measure"]}


def _finite_beta(cfg: ExperimentConfig, out: Path, man: PlotManifest) -> dict:
    P = cfg.params
    res = map_members(_finite_beta_member, [(P["L"], P["T"], P["p"], P["seed"], i, P["initial"], P["beta_grid"])
                                            for i in range(P["ensemble"])])
    rows = []
    for j, b in enumerate(P["beta_grid"]):
        m, se = _mean_stderr([r[0][j] for r in res])
        rows.append((b, m, se, len(res)))
    write_csv(out / "summary.csv", ("beta", "S2_nats_mean", "S2_nats_stderr", "n"), rows)
    man.add(file="summary.csv", x="beta", y="S2_nats_mean", reference="entropy falls as temperature rises")
    return {"S2_beta_inf_nats": [r[1] * math.log(2) for r in res]}


def _mcmc(cfg: ExperimentConfig, out: Path, man: PlotManifest) -> dict:
    P = cfg.params
    traces = map_members(_quench_member, [(P["L"], P["p"], P["beta"], P["t_max"], trajectory_seed(P["seed"], i),
                                           P["samples"], P["t_min"]) for i in range(P["ensemble"])])
    for i, tr in enumerate(traces):
        (out / f"trace_{i:03d}.csv").write_text(tr.to_csv())
    mt = mean_trace(traces)
    (out / "trace_mean.csv").write_text(mt.to_csv())
    man.add(file="trace_mean.csv", x="t", y="epsilon", x_scale="log", series=f"beta={P['beta']}",
            reference="sequence of energy plateaus")
    return {"plateaus": detect_plateaus(mt.t, mt.epsilon), "metadata": mt.metadata}


def _collapse(cfg: ExperimentConfig, out: Path, man: PlotManifest) -> dict:
    P = cfg.params
    means = []
    for b in P["beta_grid"]:
        traces = map_members(_quench_member, [(P["L"], P["p"], b, P["t_max"], trajectory_seed(P["seed"], i),
                                               P["samples"], P["t_min"]) for i in range(P["ensemble"])])
        mt = mean_trace(traces)
        (out / f"trace_beta{b:g}.csv").write_text(mt.to_csv())
        means.append(mt)
    col = collapse_transform(means, t_min=P["collapse_t_min"])
    header = ["log10_x"] + [f"epsilon_beta{b:g}" for b in P["beta_grid"]]
    write_csv(out / "collapse.csv", header, list(zip(col["log10_x"], *col["curves"])))
    man.add(file="collapse.csv", x="log10_x", y=header[1], series="beta", reference="curves collapse against t^(1/beta)")
    return {"score": col["score"], "raw_score": col["raw_score"], "improvement": col["improvement"],
            "plateaus": {f"{b:g}": detect_plateaus(m.t, m.epsilon) for b, m in zip(P["beta_grid"], means)}}


def _renyi(cfg: ExperimentConfig, out: Path, man: PlotManifest) -> dict:
    P = cfg.params
    cells = None if P["region_cells"] < 0 else P["region_cells"]
    reps = [renyi_report(_grid(P["L"], P["T"], P["p"], P["seed"], i), P["initial"], cells, P["method"])
            for i in range(P["ensemble"])]
    return {"instances": reps, "methods_agree": all(r.get("methods_agree", True) for r in reps)}


def _kw(cfg: ExperimentConfig, out: Path, man: PlotManifest) -> dict:
    P = cfg.params
    reps = [kw_report(_grid(P["L"], P["T"], P["p"], P["seed"], i), P["initial"], P["beta"], P["replicas"])
            for i in range(P["ensemble"])]
    return {"instances": reps, "max_residual": max(r["residual"] for r in reps)}


RUNNERS = {
    "circuit-trajectory": _circuit,
    "mipt-sweep": _mipt,
    "support-stats": _support,
    "finite-beta-sweep": _finite_beta,
    "mcmc-quench": _mcmc,
    "collapse": _collapse,
    "renyi-classical": _renyi,
    "kw-check": _kw,
}


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> Path:
    """Run ``cfg`` and write CSV/JSON results, ``manifest.json`` and ``config.txt``."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    man = PlotManifest()
    summary = RUNNERS[cfg.kind](cfg, out, man)
    _json(out / "summary.json", {"kind": cfg.kind, **summary})
    man.write(out)
    return out


def sweep(cfg: ExperimentConfig, out_dir=None) -> Path:
    """Grid experiment; returns the path of its aggregated ``summary.csv``."""
    if cfg.kind not in GRID_KINDS:
        raise ConfigError(f"kind: {cfg.kind!r} has no parameter grid; use one of {GRID_KINDS}")
    out = run_experiment(cfg, out_dir)
    path = out / ("collapse.csv" if cfg.kind == "collapse" else "summary.csv")
    return path
