"""Command-line entry point: ``isotns <subcommand> ...``.

Every subcommand prints a JSON summary on stdout that embeds its full
configuration and a sha256 over the configuration and all written data.
Exit codes: 0 success, 1 a check failed, 2 resource or input error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .errors import IsoTNSError, ResourceError
from .lattice import BoundaryState, LatticeSpec

CONFIG_SCHEMA = "isotns.config/1"


class CheckFailed(Exception):
    pass


def _lattice(text: str) -> LatticeSpec:
    nx, ny = text.lower().split("x")
    return LatticeSpec(int(nx), int(ny))


def _pair(text: str) -> tuple[int, int]:
    x, y = text.split(",")
    return int(x), int(y)


def _grid(text: str) -> list[float]:
    """``a:b:step`` (inclusive) or a comma list."""
    if ":" in text:
        a, b, step = (float(t) for t in text.split(":"))
        n = int(round((b - a) / step))
        return [round(a + k * step, 12) for k in range(n + 1)]
    return [float(t) for t in text.split(",")]


def _boundary(text: str, lattice: LatticeSpec | None = None) -> BoundaryState:
    if text == "zeros":
        return BoundaryState.zeros()
    if text == "plus":
        return BoundaryState.plus()
    if lattice is None:
        raise ValueError("bitstring boundary needs a lattice")
    return BoundaryState.from_bits(lattice, [int(c) for c in text])


class Output:
    """Collects written files so the summary hash covers them."""

    def __init__(self, config: dict):
        self.config = config
        self.files: dict[str, str] = {}

    def write(self, path: str | None, text: str, key: str) -> None:
        if path:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            Path(path).write_text(text)
            self.files[key] = path
        self._digest_parts = getattr(self, "_digest_parts", []) + [key, text]

    def summary(self, **results) -> dict:
        h = hashlib.sha256(json.dumps(self.config, sort_keys=True).encode())
        for part in getattr(self, "_digest_parts", []):
            h.update(part.encode())
        return {
            "schema": CONFIG_SCHEMA,
            "version": __version__,
            "config": self.config,
            "files": self.files,
            "results": results,
            "sha256": h.hexdigest(),
        }


def _config(args: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func",) and not callable(v)}
    return json.loads(json.dumps(cfg, default=str))


# subcommands


def cmd_path_check(args) -> dict:
    from .diagnostics import pull_through_check, symmetry_q
    from .tensors import WMatrix, check_isometry, doubleline_path, mps_w_path_1d, w_set_path, weight_matrix

    out = Output(_config(args))
    rows = ["path,g,max_row_deviation,support_count,pull_through"]
    ok = True
    if args.w:
        w = WMatrix.from_json(Path(args.w).read_text())
        rep = check_isometry(w, args.tol)
        ok = rep.ok
        rows.append(f"user,,{rep.max_deviation!r},{weight_matrix(w).support_count()},")
    else:
        for g in _grid(args.g_grid):
            w = w_set_path(g)
            rep = check_isometry(w, args.tol)
            pt = pull_through_check(w, symmetry_q(g))
            sc = weight_matrix(w).support_count()
            expected = 6 if g == 0 else 8
            ok &= rep.ok and pt < args.tol and sc == expected
            rows.append(f"set,{g!r},{rep.max_deviation!r},{sc},{pt!r}")
            m = mps_w_path_1d(g)
            dev1 = float(np.max(np.abs(np.sum(np.abs(m.entries) ** 2, axis=1) - 1)))
            dl = doubleline_path(g)
            dev2 = dl.sum_rule_deviation()
            ok &= dev1 < args.tol and dev2 < args.tol
            rows.append(f"mps1d,{g!r},{dev1!r},,")
            rows.append(f"doubleline,{g!r},{dev2!r},,")
    out.write(args.out, "\n".join(rows) + "\n", "csv")
    summary = out.summary(passed=bool(ok), rows=len(rows) - 1)
    if not ok:
        raise CheckFailed(summary)
    return summary


def cmd_circuit(args) -> dict:
    from .circuit import decompose_program, export_program, holographic_program, insert_defect, sequential_program

    lat = _lattice(args.lattice)
    boundary = _boundary(args.boundary, lat)
    defects = [_pair(d) for d in args.defect]
    if args.variant == "holographic":
        prog = holographic_program(lat, args.g, boundary, args.bases, defects, decompose=args.decompose)
    else:
        prog = sequential_program(lat, args.g, boundary)
        for d in defects:
            prog = insert_defect(prog, d)
        if args.decompose:
            prog = decompose_program(prog)
    out = Output(_config(args))
    text = export_program(prog, args.format)
    out.write(args.out, text, args.format)
    if args.out is None:
        sys.stderr.write(text)
    counts = {k: prog.count(k) for k in ("unitary", "xflip", "measure", "reset")}
    return out.summary(n_qubits=prog.n_qubits, events=len(prog.events), counts=counts)


def cmd_simulate(args) -> dict:
    from .circuit import insert_defect, sequential_program
    from .statevector import born_sample, run, samples_to_csv

    lat = _lattice(args.lattice)
    prog = sequential_program(lat, args.g, _boundary(args.boundary, lat))
    for d in args.defect:
        prog = insert_defect(prog, _pair(d))
    state = run(prog, seed=args.seed, max_qubits=args.max_qubits)
    out = Output(_config(args))
    samples = born_sample(state, args.bases, args.shots, args.seed)
    out.write(args.out, samples_to_csv(samples), "csv")
    return out.summary(n_qubits=state.n_qubits, norm=state.norm(), shots=args.shots)


def cmd_holo_sample(args) -> dict:
    from .holographic import holo_sample, records_to_csv, records_to_jsonl

    lat = _lattice(args.lattice)
    recs = holo_sample(
        lat, args.g, _boundary(args.boundary, lat), args.bases, args.shots, args.seed, args.mode, args.chi,
        [_pair(d) for d in args.defect],
    )
    out = Output(_config(args))
    text = records_to_jsonl(recs) if args.format == "jsonl" else records_to_csv(recs, lat.n_qubits)
    out.write(args.out, text, args.format)
    disc = max((r.discarded_weight for r in recs), default=0.0)
    return out.summary(shots=len(recs), max_discarded_weight=disc, warnings=sum(len(r.warnings) for r in recs))


def _mc_run(g, lx, lt, boundary, direction, samples, seed, r_max, workers):
    from .dynamics import correlate
    from .tensors import w_set_path

    return correlate(w_set_path(g), lx, lt, boundary, direction, samples, seed, r_max=r_max, workers=workers)


def cmd_mc_correlate(args) -> dict:
    from .dynamics import estimates_to_csv, fit_exponential, fit_power_law

    est = _mc_run(args.g, args.lx, args.lt, args.boundary, args.direction, args.samples, args.seed, args.r_max, args.workers)
    out = Output(_config(args))
    out.write(args.out, estimates_to_csv(est), "csv")
    res: dict = {"points": len(est)}
    try:
        if args.fit == "power":
            f = fit_power_law(est, 4, args.lt // 4)
        elif args.fit == "exp":
            f = fit_exponential(est)
        else:
            f = None
        if f is not None:
            res.update(slope=f.slope, slope_stderr=f.slope_stderr, fit_r=list(f.r_values))
    except IsoTNSError as exc:
        res["fit_error"] = str(exc)
    return out.summary(**res)


def cmd_diagnostics(args) -> dict:
    from .diagnostics import diagnostics_sweep, sweep_to_csv

    rows = diagnostics_sweep(_grid(args.g_grid), _lattice(args.lattice), _pair(args.defect), args.radius, args.ring)
    out = Output(_config(args))
    out.write(args.out, sweep_to_csv(rows), "csv")
    pos = [r.membrane for r in rows if r.g >= 0.5]
    neg = [r.membrane for r in rows if r.g <= -0.5]
    sep = min(pos) - max(neg) if pos and neg else None
    return out.summary(separation=sep, max_eta_deviation=max(abs(r.eta_abs - 1) for r in rows))


def _spectra(g_grid, geometry: str, k: int):
    from .spectra import build_parent_h_1d, build_parent_h_2d, spectrum

    kind, _, size = geometry.partition(":")
    out = []
    for g in g_grid:
        if kind in ("torus", "open"):
            nx, ny = (int(t) for t in size.split("x"))
            h = build_parent_h_2d(g, nx, ny, kind)
        elif kind == "chain":
            h = build_parent_h_1d(g, int(size), "open")
        elif kind == "ring":
            h = build_parent_h_1d(g, int(size), "periodic")
        else:
            raise ValueError(f"unknown geometry {geometry!r}")
        out.append((g, spectrum(h, k)))
    return out


def cmd_ed_spectrum(args) -> dict:
    from .spectra import spectrum_to_csv

    rows = _spectra(_grid(args.g_grid), args.geometry, args.k)
    out = Output(_config(args))
    out.write(args.out, spectrum_to_csv(rows), "csv")
    levels = {repr(g): [[e, d] for e, d in s.levels] for g, s in rows}
    return out.summary(levels=levels)


# figures

FIGURE_DEFAULTS = {
    "fig3b-proxy": {"g_grid": "-1:1:0.1", "lattice": "5x5", "defect": "2,2", "radius": 1},
    "fig4b": {"g": 0.0, "lx": 64, "lt": 64, "samples": 200000, "seed": 1, "r_max": 16, "workers": 1},
    "fig8": {"g": 0.0, "lx": 42, "lt": 42, "samples": 150000, "seed": 1, "r_max": 14, "workers": 1},
    "fig9": {"g_grid": "-1:1:0.1", "geometry": "torus:4x2", "k": 48},
}


def _fig_config(args) -> dict:
    cfg = dict(FIGURE_DEFAULTS[args.name])
    if args.config:
        cfg.update(json.loads(Path(args.config).read_text()))
    unknown = set(cfg) - set(FIGURE_DEFAULTS[args.name])
    if unknown:
        raise ValueError(f"unknown config keys for {args.name}: {sorted(unknown)}")
    return cfg


def cmd_figure(args) -> dict:
    from .dynamics import estimates_to_csv, family_z_threshold, fit_exponential, fit_power_law

    cfg = _fig_config(args)
    out = Output({"figure": args.name, **cfg})
    base = Path(args.out_dir) / args.name.replace("-", "_")
    ok = True
    if args.name == "fig3b-proxy":
        from .diagnostics import build_defect_membrane, membrane_order
        from .plumbed import PlumbedState
        from .tensors import w_set_path

        lat = _lattice(cfg["lattice"])
        defect = _pair(cfg["defect"])
        spec = build_defect_membrane(lat, defect, cfg["radius"])
        rows = [(g, membrane_order(PlumbedState(lat, w_set_path(g), defects=[defect]), spec)) for g in _grid(cfg["g_grid"])]
        out.write(f"{base}.csv", "g,membrane\n" + "".join(f"{g!r},{m!r}\n" for g, m in rows), "csv")
        sep = min(m for g, m in rows if g >= 0.5) - max(m for g, m in rows if g <= -0.5)
        ok = sep >= 0.25
        res = {"separation": sep, "passed": ok}
    elif args.name in ("fig4b", "fig8"):
        common = (cfg["g"], cfg["lx"], cfg["lt"], "plus")
        if args.name == "fig4b":
            est = _mc_run(*common, "t", cfg["samples"], cfg["seed"], cfg["r_max"], cfg["workers"])
            fit = fit_power_law(est, 4, cfg["lt"] // 4)
            out.write(f"{base}.csv", estimates_to_csv(est), "csv")
            ok = -0.6 <= fit.slope <= -0.4
            res = {"exponent": fit.slope, "exponent_stderr": fit.slope_stderr, "passed": ok}
        else:
            est = _mc_run(*common, "diag45", cfg["samples"], cfg["seed"], cfg["r_max"], cfg["workers"])
            estx = _mc_run(*common, "x", cfg["samples"], cfg["seed"] + 1, min(cfg["r_max"], cfg["lx"] // 2), cfg["workers"])
            fit = fit_exponential(est)
            out.write(f"{base}.csv", estimates_to_csv(est + estx), "csv")
            zscore = max(abs(e.mean) / e.stderr for e in estx)
            z_crit = family_z_threshold(len(estx))
            ok = abs(fit.slope + 0.68) <= 0.15 and zscore <= z_crit
            res = {
                "slope": fit.slope, "slope_stderr": fit.slope_stderr,
                "x_max_abs_z": zscore, "x_z_threshold": z_crit, "passed": ok,
            }
    else:
        from .spectra import spectrum_to_csv

        rows = _spectra(_grid(cfg["g_grid"]), cfg["geometry"], cfg["k"])
        out.write(f"{base}.csv", spectrum_to_csv(rows), "csv")
        gaps = {repr(g): (s.gap if len(s.levels) > 1 else None) for g, s in rows}
        ends = [s.gap for g, s in rows if abs(abs(g) - 1) < 1e-12 and len(s.levels) > 1]
        ok = bool(ends) and all(abs(x - 2.0) < 1e-8 for x in ends)
        res = {"gaps": gaps, "passed": ok}
    summary = out.summary(**res)
    Path(f"{base}.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if not ok:
        raise CheckFailed(summary)
    return summary


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isotns", description="isometric tensor-network path laboratory")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name: str, func: Callable, help: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(func=func)
        return sp

    s = add("path-check", cmd_path_check, "isometry, support and pull-through checks along the paths")
    s.add_argument("--g-grid", default="-1:1:0.05")
    s.add_argument("--w", help="JSON file with a user W-matrix to check instead")
    s.add_argument("--tol", type=float, default=1e-12)
    s.add_argument("--out")

    def lattice_args(sp, default="3x3"):
        sp.add_argument("--lattice", default=default, help="NXxNY vertices")
        sp.add_argument("--g", type=float, default=0.5)
        sp.add_argument("--boundary", default="zeros", help="zeros, plus or a bitstring along the boundary chain")
        sp.add_argument("--defect", action="append", default=[], help="x,y (repeatable)")

    s = add("circuit", cmd_circuit, "emit a gate program")
    lattice_args(s)
    s.add_argument("--variant", choices=["sequential", "holographic"], default="sequential")
    s.add_argument("--bases", default="Z")
    s.add_argument("--decompose", action="store_true")
    s.add_argument("--format", choices=["json", "qasm3"], default="json")
    s.add_argument("--out")

    s = add("simulate", cmd_simulate, "statevector run plus Born samples")
    lattice_args(s)
    s.add_argument("--bases", default="Z")
    s.add_argument("--shots", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-qubits", type=int, default=26)
    s.add_argument("--out")

    s = add("holo-sample", cmd_holo_sample, "measure-and-reset sampling")
    lattice_args(s)
    s.add_argument("--bases", default="Z")
    s.add_argument("--shots", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mode", choices=["dense", "mps"], default="dense")
    s.add_argument("--chi", type=int)
    s.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")
    s.add_argument("--out")

    s = add("mc-correlate", cmd_mc_correlate, "worldline Monte Carlo correlations")
    s.add_argument("--g", type=float, default=0.0)
    s.add_argument("--lx", type=int, default=64)
    s.add_argument("--lt", type=int, default=64)
    s.add_argument("--boundary", default="plus")
    s.add_argument("--direction", choices=["t", "x", "diag45"], default="t")
    s.add_argument("--samples", type=int, default=20000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--r-max", type=int)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--fit", choices=["power", "exp", "none"], default="none")
    s.add_argument("--out")

    s = add("diagnostics", cmd_diagnostics, "membrane order, V invariant and |eta| sweep")
    s.add_argument("--g-grid", default="-1:1:0.25")
    s.add_argument("--lattice", default="5x5")
    s.add_argument("--defect", default="2,2")
    s.add_argument("--radius", type=int, default=1)
    s.add_argument("--ring", type=int, default=4)
    s.add_argument("--out")

    s = add("ed-spectrum", cmd_ed_spectrum, "exact low-lying spectra of the parent Hamiltonians")
    s.add_argument("--g-grid", default="-1,-0.5,0,0.5,1")
    s.add_argument("--geometry", default="torus:4x2", help="torus:NXxNY, open:NXxNY, chain:N or ring:N")
    s.add_argument("--k", type=int, default=12)
    s.add_argument("--out")

    s = add("figure", cmd_figure, "regenerate a figure as CSV plus JSON summary")
    s.add_argument("name", choices=sorted(FIGURE_DEFAULTS))
    s.add_argument("--config", help="JSON file overriding the figure defaults")
    s.add_argument("--out-dir", default="figures")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        summary = args.func(args)
    except CheckFailed as exc:
        print(json.dumps(exc.args[0], indent=2, sort_keys=True))
        return 1
    except ResourceError as exc:
        print(json.dumps({"error": "resource", "message": str(exc)}), file=sys.stderr)
        return 2
    except (IsoTNSError, ValueError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
