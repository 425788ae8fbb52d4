"""Command-line interface: ``python -m shiftrom <command> ...``.

Every command takes ``--config`` (a preset name such as ``test1`` or a path
to a config file) and ``--set field=value`` overrides. Exit status is 0 on
success, 2 when some result is flagged unstable and 1 on errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bench
from .bench import VARIANTS, build_offline, load_case, load_offline, save_offline
from .fv import iterate_fom, run_fom, save_trajectory
from .rom import run_rom

EXIT_OK, EXIT_ERROR, EXIT_UNSTABLE = 0, 1, 2


def _override(text: str) -> tuple:
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected field=value, got {text!r}")
    return key.strip(), value.strip()


def _case(args):
    source = args.config
    stored = Path(args.offline) / "case.cfg" if getattr(args, "offline", None) else None
    if source is None:
        source = stored if stored is not None and stored.exists() else "test1"
    overrides = {}
    for key, value in args.set or []:
        if key not in bench.FIELD_PARSERS:
            raise bench.ConfigurationError(f"unknown case field {key!r}")
        overrides[key] = bench.FIELD_PARSERS[key](value)
    if getattr(args, "n", None) is not None:
        overrides["n"] = args.n
    return load_case(source).with_overrides(**overrides)


def _offline(args, case):
    if getattr(args, "offline", None) and (Path(args.offline) / "case.cfg").exists():
        return load_offline(args.offline, case)
    return build_offline(case)


def cmd_fom(args) -> int:
    case = _case(args)
    cfg = case.fom_config()
    times = args.times if args.times else None
    traj = run_fom(cfg, args.mu, times)
    save_trajectory(args.out, traj)
    print(f"wrote {len(traj)} fields to {args.out} (dt={traj.metadata['dt']:.6g}, steps={traj.metadata['steps']})")
    return EXIT_OK


def cmd_offline(args) -> int:
    case = _case(args)
    off = build_offline(case)
    save_offline(off, args.out)
    t = off.table
    print(f"offline artefacts in {args.out}: {len(off.store)} snapshots, z_ref={t.z_ref}, "
          f"additivity defect={t.additivity_defect}")
    if t.degenerate:
        print(f"warning: {len(t.degenerate)} calibrations fell back to a zero shift", file=sys.stderr)
    return EXIT_OK


def cmd_hyper_offline(args) -> int:
    case = _case(args)
    off = _offline(args, case)
    sizes = args.sizes or [case.n_reduced]
    out = args.offline or args.out
    if not out:
        raise bench.ConfigurationError("hyper-offline needs --offline or --out")
    save_offline(off, out, sizes)
    S = off.residuals(False)
    print(f"residual snapshots {S.shape[0]} x {S.shape[1]} ({'sparse' if S.sparse else 'dense'}), "
          f"E_off sizes {list(sizes)} written to {out}")
    return EXIT_OK


def cmd_rom(args) -> int:
    case = _case(args)
    off = _offline(args, case)
    if case.static:
        t = case.t_range[1] if args.t_end is None else args.t_end
        err, n = bench.static_error(off, args.variant, (t, args.mu), case.n_reduced)
        lines = [f"case = {case.label}", f"variant = {args.variant}", f"t = {t!r}", f"mu = {args.mu!r}",
                 f"n = {n}", f"E = {err!r}"]
        _write_lines(args.out, lines)
        return EXIT_UNSTABLE if not err <= bench.UNSTABLE_ERROR else EXIT_OK
    mode, kind = VARIANTS[args.variant]
    n = case.n_reduced if kind else case.N
    mesh = off.mesh(n, kind)
    run = run_rom(off.model, args.mu, t_end=args.t_end, mesh=mesh, mode=mode)
    errs = []
    for k, _, u in iterate_fom(off.model.config, args.mu):
        if k >= len(run.coeffs):
            errs.append(np.inf)
            break
        errs.append(bench.compute_error(u, run.coeffs[k].reconstruct()))
    E = float(np.max(errs))
    lines = [
        f"case = {case.label}",
        f"variant = {args.variant}",
        f"mu = {args.mu!r}",
        f"n = {n}",
        f"steps = {len(run.times) - 1}",
        f"t_end = {float(run.times[-1])!r}",
        f"E = {E!r}",
        f"final_error = {float(errs[-1])!r}",
        f"diverged = {run.diverged}",
    ] + [f"C_{key} = {float(v.sum())!r}" for key, v in run.timings.items()]
    _write_lines(args.out, lines)
    return EXIT_UNSTABLE if run.diverged or not E <= bench.UNSTABLE_ERROR else EXIT_OK


def _write_lines(path, lines):
    text = "\n".join(lines) + "\n"
    if path:
        Path(path).write_text(text)
    print(text, end="")


def _summarise(reports) -> int:
    for r in reports:
        row = r.row()
        flag = "  UNSTABLE" if row["unstable_flag"] else ""
        print(f"{row['case']:12s} {row['variant']:9s} n={row['n']:<7d} E={row['E']:.4g}  C={row['C']:.4g}s{flag}")
    return EXIT_UNSTABLE if any(r.error.unstable for r in reports) else EXIT_OK


def cmd_bench(args) -> int:
    case = _case(args)
    off = _offline(args, case)
    reports = bench.run_variants(case, args.variants, args.repeats, off)
    bench.emit_report(reports, args.out)
    return _summarise(reports)


def cmd_sweep(args) -> int:
    case = _case(args)
    off = _offline(args, case)
    reports = bench.mesh_sweep(case, args.sizes, args.variants or ("Adp-SS", "N-Adp-SS"), args.repeats, off)
    bench.emit_report(reports, args.out)
    return _summarise(reports)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shiftrom", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="preset name or config file path (default: the stored "
                       "config of --offline, else test1)")
        p.add_argument("--set", action="append", type=_override, metavar="FIELD=VALUE",
                       help="override a case field (repeatable)")
        return p

    p = common(sub.add_parser("fom", help="run the full-order model for one mu"))
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--times", type=float, nargs="*", help="record times (default: final time)")
    p.add_argument("--out", required=True, help="trajectory directory")
    p.set_defaults(func=cmd_fom)

    p = common(sub.add_parser("offline", help="snapshots and shift table"))
    p.add_argument("--out", required=True, help="artefact directory")
    p.set_defaults(func=cmd_offline)

    p = common(sub.add_parser("hyper-offline", help="residual snapshots and reduced meshes"))
    p.add_argument("--offline", help="artefact directory from `offline` (updated in place)")
    p.add_argument("--out", help="artefact directory when --offline is not given")
    p.add_argument("--sizes", type=int, nargs="*", help="reduced mesh sizes (default: case n)")
    p.set_defaults(func=cmd_hyper_offline)

    p = common(sub.add_parser("rom", help="one online run"))
    p.add_argument("--offline", help="artefact directory (built on the fly if absent)")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--variant", choices=list(VARIANTS), default="Adp-SS")
    p.add_argument("--n", type=int, default=None, help="reduced mesh size")
    p.add_argument("--out", help="key = value report file")
    p.set_defaults(func=cmd_rom)

    p = common(sub.add_parser("bench", help="all variants over the target set"))
    p.add_argument("--offline")
    p.add_argument("--variants", nargs="*", choices=list(VARIANTS))
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--out", required=True, help="CSV report path")
    p.set_defaults(func=cmd_bench)

    p = common(sub.add_parser("sweep", help="hyper-reduced variants versus reduced mesh size"))
    p.add_argument("--offline")
    p.add_argument("--sizes", type=int, nargs="*")
    p.add_argument("--variants", nargs="*", choices=list(VARIANTS))
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--out", required=True, help="CSV report path")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # reported, not raised: the exit code carries it
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
