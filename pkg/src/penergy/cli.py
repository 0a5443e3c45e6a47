"""Command-line front end: ``resist``, ``eigen``, ``sabot`` and ``harmonic``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import warnings
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from typing import Any

import numpy as np

from . import __version__
from .criteria import sabot_test, sg_closed_forms
from .errors import DegenerateFormError, DomainError, GuardError, SolverError, StructureError
from .forms import indicator_probes
from .fractal import PRESETS, PcfStructure, level_coordinates, load_structure, max_level, preset
from .renorm import (
    cell_oscillations,
    cell_word,
    eigen_solve,
    harmonic_on_level,
    iterate,
    separation_violation,
)
from .solver import SolverConfig, evaluate

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_GUARD = 0, 2, 3, 4


@dataclass(frozen=True)
class RunManifest:
    command: str
    input_path: str
    cfg: SolverConfig
    seed: int
    tool_version: str
    timestamp: str

    def to_dict(self) -> dict:
        out = asdict(self)
        out["cfg"] = asdict(self.cfg)
        return out


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return when.replace(microsecond=0).isoformat()


def _parse_r(text: str | None):
    if text is None:
        return None
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise DomainError(f"--r: expected a comma list of numbers, got {text!r}") from None


def _load(args) -> tuple[PcfStructure, float, str]:
    """Structure, p and input label; flags override the spec file, which overrides defaults."""
    if args.spec and args.preset:
        raise DomainError("give either a spec file or --preset, not both")
    r = _parse_r(args.r)
    if args.spec:
        st = load_structure(args.spec)
        p = args.p if args.p is not None else (st.p if st.p is not None else 2.0)
        source = str(args.spec)
    else:
        name = args.preset or "sg"
        p = args.p if args.p is not None else 2.0
        st = preset(name, p=p)
        source = f"preset:{name}"
    if not p > 1:
        raise DomainError(f"--p must exceed 1, got {p}")
    if r is not None:
        st = st.with_r(r)
    return st, float(p), source


def _config(args) -> SolverConfig:
    threads = args.threads
    if threads is None:
        env = os.environ.get("PENERGY_THREADS")
        threads = int(env) if env else 1
    kw: dict[str, Any] = {"seed": args.seed, "threads": threads}
    if args.max_iters is not None:
        kw["max_iters"] = args.max_iters
    if args.starts is not None:
        kw["ratio_starts"] = args.starts
    if args.tol is not None and args.command in ("resist", "harmonic"):
        kw["grad_inf_tol"] = args.tol
    return SolverConfig(**kw)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _emit(args, manifest: RunManifest, result: dict, rows: list[dict], table: list[tuple]) -> str:
    """Render one artifact; every format carries the manifest."""
    man = manifest.to_dict()
    if args.format == "json":
        return json.dumps({"manifest": man, "result": result}, indent=2, sort_keys=True, default=_jsonable) + "\n"
    if args.format == "csv":
        buf = io.StringIO()
        buf.write("# manifest: " + json.dumps(man, sort_keys=True) + "\n")
        if rows:
            writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: ("" if v is None else _fmt(v)) for k, v in row.items()})
        return buf.getvalue()
    lines = [f"# {manifest.command} {manifest.input_path} (penergy {manifest.tool_version}, seed {manifest.seed})"]
    width = max((len(k) for k, _ in table), default=0)
    for k, v in table:
        lines.append(f"{k.ljust(width)}  {v}")
    return "\n".join(lines) + "\n"


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not serializable: {type(x).__name__}")


def _clean(x: float):
    x = float(x)
    return None if not np.isfinite(x) else x


# -- subcommands ---------------------------------------------------------------


def cmd_resist(args, st: PcfStructure, p: float, cfg: SolverConfig):
    n = 0 if args.level is None else args.level
    E0 = st.default_form(p)
    states = iterate(E0, st, n, cfg)
    last = states[-1]
    rm = last.resistance
    pairs = [{"x": x, "y": y, "R": _clean(R)} for x, y, R in rm.to_list()]
    result = {
        "level": n,
        "p": p,
        "r": [float(v) for v in st.r],
        "resistances": pairs,
        "delta": last.delta,
        "M_n": last.M_n,
        "iterations": [s.to_record() for s in states],
    }
    rows = [dict(level=n, **row) for row in pairs]
    table = [(f"R({row['x']},{row['y']})", _fmt(row["R"])) for row in pairs]
    table += [("delta", _fmt(last.delta)), ("M_n", _fmt(last.M_n))]
    return result, rows, table


def cmd_eigen(args, st: PcfStructure, p: float, cfg: SolverConfig):
    n_max = max_level(st) if args.level is None else args.level
    tol = 1e-6 if args.tol is None else args.tol
    rep = eigen_solve(st.default_form(p), st, n_max, cfg, tol=tol)
    probes = indicator_probes(len(st.boundary))
    vals = evaluate(rep.eigenform, probes, cfg)
    result = rep.to_dict()
    result.update(p=p, r=[float(v) for v in st.r], n_max=n_max)
    result["eigenform_indicators"] = [
        {"set": [st.boundary.labels[i] for i in np.nonzero(f)[0]], "value": float(v)} for f, v in zip(probes, vals)
    ]
    rows = [{"n": n, "delta": d, "lambda_ratio": next((v for m, v in rep.lambda_history if m == n), None)}
            for n, d in rep.delta_history]
    table = [("lambda", _fmt(rep.lam)), ("residual", _fmt(rep.residual)), ("converged", str(rep.converged)),
             ("condition_A", str(rep.condition_A)), ("eigenform level", str(rep.eigenform_level))]
    return result, rows, table


def cmd_sabot(args, st: PcfStructure, p: float, cfg: SolverConfig):
    starts = 4 if args.starts is None else args.starts
    rep = sabot_test(st, p, cfg, starts=max(starts, 1))
    result = rep.to_dict()
    result["p"] = p
    result["r"] = [float(v) for v in st.r]
    if st.name == "sg" and len(st.boundary) == 3:
        cf = sg_closed_forms(p, st.r)
        result["closed_forms"] = {k: (list(map(float, v)) if isinstance(v, list) else v) for k, v in cf.items()}
    rows = [
        {
            "relation": str(r.relation),
            "rho_bar": r.rho_bar_J,
            "rho_under": r.rho_under_J,
            "rho_quotient": r.rho_under_quotient,
            "exact": r.exact,
            "verdict": rep.verdict,
        }
        for r in rep.records
    ]
    head = f"{'relation':<22} {'rho_bar':>12} {'rho_under':>12} {'rho_quot':>12} exact"
    table = [("", head)]
    for r in rep.records:
        table.append(("", f"{str(r.relation):<22} {r.rho_bar_J:12.6g} {r.rho_under_J:12.6g} "
                          f"{r.rho_under_quotient:12.6g} {r.exact}"))
    table.append(("verdict", rep.verdict))
    for note in rep.notes:
        table.append(("note", note))
    return result, rows, table


def _boundary_values(text: str | None, st: PcfStructure) -> np.ndarray:
    if text is None:
        raise DomainError("harmonic needs --values")
    text = text.strip()
    if text.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DomainError(f"--values: {exc.msg}") from None
        missing = [x for x in st.boundary.labels if x not in data]
        if missing:
            raise DomainError(f"--values: missing boundary labels {missing}")
        return np.array([float(data[x]) for x in st.boundary.labels])
    try:
        vals = np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise DomainError(f"--values: expected numbers, got {text!r}") from None
    if vals.size != len(st.boundary):
        raise DomainError(f"--values: expected {len(st.boundary)} numbers, got {vals.size}")
    if not np.all(np.isfinite(vals)):
        raise DomainError("--values must be finite")
    return vals


def cmd_harmonic(args, st: PcfStructure, p: float, cfg: SolverConfig):
    m = 1 if args.level is None else args.level
    f = _boundary_values(args.values, st)
    U = harmonic_on_level(st, st.default_form(p), m, f, cfg)[0]
    osc_f = float(f.max() - f.min())
    cells = cell_oscillations(st, U, m)[0]
    labels = st._combo.get(m)[0].labels
    coords = level_coordinates(st, m) if args.coords else None
    if coords is not None:
        coords = np.round(coords, 12) + 0.0  # drop float noise such as -1e-17
    bad = separation_violation(st, m) if m >= 1 else ("", 0)
    notes = []
    if bad is not None:
        eta = None
        notes.append(f"cell {bad[0]} meets V0 in {bad[1]} points; eta not reported" if bad[0] else "m = 0")
    else:
        eta = float(cells.max() / osc_f) if osc_f > 0 else 0.0
    if args.coords and coords is None:
        notes.append("structure has no geometry; coordinates omitted")
    words = ["".join(map(str, cell_word(w, st.N, m))) for w in range(len(cells))]
    vertices = []
    for k, lab in enumerate(labels):
        row = {"label": lab, "value": float(U[k])}
        if coords is not None:
            row["coords"] = [float(c) for c in coords[k]]
        vertices.append(row)
    result = {
        "level": m,
        "p": p,
        "boundary": dict(zip(st.boundary.labels, map(float, f))),
        "vertices": vertices,
        "cells": [{"word": w, "osc": float(o)} for w, o in zip(words, cells)],
        "eta": eta,
        "notes": notes,
    }
    dim = 0 if coords is None else coords.shape[1]
    rows = []
    for k, lab in enumerate(labels):
        row = {"kind": "vertex", "label": lab, "value": float(U[k]), "osc": None}
        for d in range(dim):
            row[f"x{d}"] = float(coords[k, d])
        rows.append(row)
    for w, o in zip(words, cells):
        row = {"kind": "cell", "label": w, "value": None, "osc": float(o)}
        for d in range(dim):
            row[f"x{d}"] = None
        rows.append(row)
    rows.append({"kind": "eta", "label": "", "value": eta, "osc": None, **{f"x{d}": None for d in range(dim)}})
    table = [(lab, _fmt(float(U[k]))) for k, lab in enumerate(labels)]
    table += [(f"osc[{w}]", _fmt(float(o))) for w, o in zip(words, cells)]
    table.append(("eta", _fmt(eta)))
    return result, rows, table


COMMANDS = {"resist": cmd_resist, "eigen": cmd_eigen, "sabot": cmd_sabot, "harmonic": cmd_harmonic}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="penergy", description="Discrete p-energies on p.c.f. self-similar sets")
    parser.add_argument("--version", action="version", version=f"penergy {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "resist": "boundary resistances of the level-n refined energy",
        "eigen": "eigenvalue and eigenform of the renormalization map",
        "sabot": "existence test from preserved relations",
        "harmonic": "p-harmonic extension of boundary values to level m",
    }
    for name, text in helps.items():
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("spec", nargs="?", default=None, help="fractal spec JSON")
        cmd.add_argument("--preset", choices=PRESETS, default=None)
        cmd.add_argument("--p", type=float, default=None)
        cmd.add_argument("--r", type=str, default=None, help="comma list of weights")
        cmd.add_argument("--level", type=int, default=None)
        cmd.add_argument("--tol", type=float, default=None)
        cmd.add_argument("--max-iters", type=int, default=None)
        cmd.add_argument("--seed", type=int, default=0)
        cmd.add_argument("--starts", type=int, default=None)
        cmd.add_argument("--format", choices=("json", "csv", "table"), default="json")
        cmd.add_argument("--threads", type=int, default=None)
        cmd.add_argument("--output", "-o", type=str, default=None, help="write here instead of stdout")
        if name == "harmonic":
            cmd.add_argument("--values", type=str, default=None, help="comma list in boundary order or JSON object")
            cmd.add_argument("--coords", action="store_true", help="append vertex coordinates")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        st, p, source = _load(args)
        cfg = _config(args)
        if args.level is not None and args.level < 0:
            raise DomainError("--level must be nonnegative")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            result, rows, table = COMMANDS[args.command](args, st, p, cfg)
        if caught:
            result["warnings"] = sorted({str(w.message) for w in caught})
        manifest = RunManifest(args.command, source, cfg, args.seed, __version__, _timestamp())
        text = _emit(args, manifest, result, rows, table)
    except GuardError as exc:
        print(f"penergy: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (SolverError, DegenerateFormError) as exc:
        print(f"penergy: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (StructureError, DomainError, ValueError) as exc:
        print(f"penergy: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
