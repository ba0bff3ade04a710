"""Command-line entry point (``plaquette``).

Exit codes: 0 success, 2 configuration error, 3 capacity error,
4 runtime invariant violation.  Set ``PLAQUETTE_WORKERS`` to run ensemble
members on a process pool.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import CSV_COLUMNS, CircuitConfig, fit_log_slope, run, trajectory_seed
from .config import load_config
from .errors import CapacityError, ConfigError, InvariantViolation
from .experiments import kw_report, mean_trace, renyi_report, run_experiment, sweep, write_csv
from .kmc import QuenchTrace, collapse_transform, detect_plateaus, run_quench
from .kw import finite_beta_renyi2
from .plaquette import DisorderGrid, boundary_quotient_generators, build_parity_checks, support_statistics, symmetry_basis
from .replica import half_boundary

EXIT_CODES = ((ConfigError, 2), (CapacityError, 3), (InvariantViolation, 4))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _sidecar(path: Path, meta: dict) -> None:
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=_plain) + "\n")


def _plain(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _emit_json(obj: dict, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=_plain) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _overrides(pairs) -> dict[str, str]:
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _grid_from_args(a) -> DisorderGrid:
    if a.grid:
        return DisorderGrid.load(a.grid)
    if a.L is None or a.T is None:
        raise ConfigError("give --grid FILE or both --L and --T")
    return DisorderGrid.random(a.L, a.T, a.p, trajectory_seed(a.seed, 0))


def _add_grid_args(sp) -> None:
    sp.add_argument("--grid", help="DisorderGrid text file")
    sp.add_argument("--L", type=int)
    sp.add_argument("--T", type=int)
    sp.add_argument("--p", type=float, default=0.1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--initial", choices=("fixed-zero", "free"), default=None,
                    help="initial rows; defaults to the grid file's setting, else fixed-zero")
    sp.add_argument("--out", help="JSON output file (default: stdout)")


# ---------------------------------------------------------------------------
# subcommands


def cmd_circuit(a) -> None:
    base = CircuitConfig(a.L, a.t_max, a.p, a.init, a.perturb, 0, a.record)
    seeds = [trajectory_seed(a.seed, i) for i in range(a.trajectories)]
    recs = [run(base.with_seed(s))[0] for s in seeds]
    out = Path(a.out)
    if len(recs) == 1:
        out.write_text(recs[0].to_csv())
    else:
        for i, r in enumerate(recs):
            out.with_name(f"{out.stem}_{i:03d}{out.suffix}").write_text(r.to_csv())
        cols = {c: np.mean([r.columns()[c] for r in recs], axis=0) for c in CSV_COLUMNS}
        write_csv(out, CSV_COLUMNS, list(zip(*(cols[c] for c in CSV_COLUMNS))))
    meta = {"command": "circuit", "version": __version__, "L": a.L, "t_max": a.t_max, "p": a.p,
            "init": a.init, "perturbation": a.perturb, "seed": a.seed, "member_seeds": seeds,
            "record": a.record, "pe_bound_violations": sum(r.pe_bound_violations() for r in recs)}
    t = np.asarray(recs[0].t, dtype=float)
    s = np.mean([r.S_half for r in recs], axis=0)
    try:
        slope, offset, se = fit_log_slope(t, s, a.L, a.t_max)
        meta.update(slope_S_half=slope, offset_S_half=offset, slope_stderr=se)
    except ValueError:
        pass
    _sidecar(out, meta)


def cmd_renyi(a) -> None:
    rep = renyi_report(_grid_from_args(a), a.initial, a.cells, a.method)
    _emit_json(rep, a.out)


def cmd_kw_check(a) -> None:
    _emit_json(kw_report(_grid_from_args(a), a.initial, a.beta, a.replicas), a.out)


def cmd_renyi_finite_beta(a) -> None:
    sys_ = build_parity_checks(_grid_from_args(a), a.initial)
    beta = math.inf if a.beta == "inf" else float(a.beta)
    s = finite_beta_renyi2(sys_, half_boundary(sys_, a.cells), beta)
    _emit_json({"beta": a.beta if beta == math.inf else beta, "S2_nats": s}, a.out)


def cmd_support_stats(a) -> None:
    sys_ = build_parity_checks(_grid_from_args(a), a.initial)
    rep = boundary_quotient_generators(sys_, symmetry_basis(sys_))
    st = support_statistics(rep, a.measure)
    st["histogram"] = {str(k): v for k, v in st["histogram"].items()}
    _emit_json(st, a.out)


def cmd_mcmc(a) -> None:
    traces = [run_quench(a.L, a.p, a.beta, a.t_max, trajectory_seed(a.seed, i), a.samples, a.t_min)
              for i in range(a.trajectories)]
    tr = traces[0] if len(traces) == 1 else mean_trace(traces)
    out = Path(a.out)
    out.write_text(tr.to_csv())
    meta = {"command": "mcmc", "version": __version__, "master_seed": a.seed, **tr.metadata}
    meta["plateaus"] = detect_plateaus(tr.t, tr.epsilon)
    _sidecar(out, meta)


def _load_trace(spec: str) -> QuenchTrace:
    path, _, beta = spec.partition("@")
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read trace {path}: {exc}") from exc
    meta_path = Path(str(p) + ".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    if beta:
        meta["beta"] = float(beta)
    if "beta" not in meta:
        raise ConfigError(f"trace {path}: no beta (append @BETA or keep the .meta.json sidecar)")
    return QuenchTrace.from_csv(text, meta)


def cmd_collapse(a) -> None:
    traces = [_load_trace(s) for s in a.traces]
    col = collapse_transform(traces, t_min=a.t_min)
    header = ["log10_x"] + [f"epsilon_beta{b:g}" for b in col["betas"]]
    write_csv(Path(a.out), header, list(zip(col["log10_x"], *col["curves"])))
    score = {k: col[k] for k in ("score", "raw_score", "improvement", "betas", "t_min")}
    score["plateaus"] = {f"{tr.metadata['beta']:g}": detect_plateaus(tr.t, tr.epsilon) for tr in traces}
    _emit_json(score, a.score)


def cmd_run(a) -> None:
    cfg = load_config(a.config, _overrides(a.set))
    print(run_experiment(cfg, a.out_dir))


def cmd_sweep(a) -> None:
    cfg = load_config(a.config, _overrides(a.set))
    print(sweep(cfg, a.out_dir))


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="plaquette", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("circuit", help="simulate measurement-circuit trajectories")
    sp.add_argument("--L", type=int, required=True)
    sp.add_argument("--t-max", dest="t_max", type=int, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--init", default="x", help="x, z, staggered or random:pX")
    sp.add_argument("--perturb", default="none", help="none, flipped-cnot:f or cz-substitution:f")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--trajectories", type=int, default=1)
    sp.add_argument("--record", default="all", help="all or log:n")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_circuit)

    sp = sub.add_parser("renyi", help="Renyi-2 entropy of the classical model at zero temperature")
    _add_grid_args(sp)
    sp.add_argument("--cells", type=int, default=None, help="top-boundary cells in A (default L/2)")
    sp.add_argument("--method", choices=("replica", "groups", "both"), default="both")
    sp.set_defaults(fn=cmd_renyi)

    sp = sub.add_parser("kw-check", help="compare the direct and dual partition functions")
    _add_grid_args(sp)
    sp.add_argument("--beta", type=float, default=1.0)
    sp.add_argument("--replicas", type=int, choices=(1, 2), default=1)
    sp.set_defaults(fn=cmd_kw_check)

    sp = sub.add_parser("renyi-finite-beta", help="Renyi-2 entropy at finite inverse temperature")
    _add_grid_args(sp)
    sp.add_argument("--beta", required=True, help="inverse temperature or 'inf'")
    sp.add_argument("--cells", type=int, default=None)
    sp.set_defaults(fn=cmd_renyi_finite_beta)

    sp = sub.add_parser("support-stats", help="support sizes of boundary symmetry generators")
    _add_grid_args(sp)
    sp.add_argument("--measure", choices=("support", "localization"), default="support")
    sp.set_defaults(fn=cmd_support_stats)

    sp = sub.add_parser("mcmc", help="kinetic Monte Carlo quench")
    sp.add_argument("--L", type=int, required=True)
    sp.add_argument("--p", type=float, default=0.0)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--t-max", dest="t_max", type=float, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--samples", type=int, default=50)
    sp.add_argument("--t-min", dest="t_min", type=float, default=0.1)
    sp.add_argument("--trajectories", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_mcmc)

    sp = sub.add_parser("collapse", help="rescale quench traces by t^(1/beta) and score the overlap")
    sp.add_argument("traces", nargs="+", metavar="TRACE[@BETA]")
    sp.add_argument("--t-min", dest="t_min", type=float, default=1.0)
    sp.add_argument("--out", required=True, help="rescaled CSV")
    sp.add_argument("--score", default=None, help="score JSON (default: stdout)")
    sp.set_defaults(fn=cmd_collapse)

    for name, fn, text in (("run", cmd_run, "run an experiment config"),
                           ("sweep", cmd_sweep, "run a grid experiment and print its summary CSV")):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("config")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE")
        sp.add_argument("--out-dir", dest="out_dir", default=None)
        sp.set_defaults(fn=fn)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.fn(args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:
        for cls, code in EXIT_CODES:
            if isinstance(exc, cls):
                print(f"plaquette: error: {exc}", file=sys.stderr)
                return code
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
