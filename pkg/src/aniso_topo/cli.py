"""Command-line entry point.

Exit codes: 0 success, 1 configuration or parameter error, 2 solver error.
"""

from __future__ import annotations

import argparse
import logging
import os
import re
import sys
from concurrent.futures import FIRST_EXCEPTION, ProcessPoolExecutor, wait
from dataclasses import replace
from pathlib import Path

from .anisotropy import Anisotropy, sample_frank, sample_wulff, write_diagram_csv
from .config import load_config, parse_config, parse_document, build_config, print_config
from .driver import SCENARIOS, run, scenario
from .errors import SOLVER_ERRORS, AnisoTopoError, NonConvexUnsupported, ParseError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2

THREADS_ENV = "ANISO_TOPO_THREADS"

log = logging.getLogger("aniso_topo")


class UsageError(Exception):
    pass


def _run_and_report(cfg, out) -> int:
    res = run(cfg, out_dir=out)
    last = res.trace[-1] if res.trace else res.initial
    print(last.line())
    print(f"stopped: {res.stop_reason} after {len(res.trace)} steps; output in {out}", file=sys.stderr)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return _run_and_report(cfg, args.out)


def cmd_scenario(args) -> int:
    cfg = scenario(args.name)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.t_end is not None:
        changes["t_end"] = args.t_end
    if args.nx is not None:
        changes["mesh"] = replace(cfg.mesh, nx=args.nx, ny=args.nx)
    cfg = replace(cfg, **changes)
    if args.print:
        sys.stdout.write(print_config(cfg))
        return EXIT_OK
    if args.out is None:
        raise UsageError("--out is required unless --print is given")
    return _run_and_report(cfg, args.out)


def _diagram_aniso(args) -> Anisotropy:
    try:
        if args.lam is not None:
            if args.delta:
                raise UsageError("--delta and --lambda are mutually exclusive")
            return Anisotropy.nonconvex(args.alpha, args.lam)
        if args.delta:
            return Anisotropy.regularized(args.alpha, args.delta)
        return Anisotropy.convex(args.alpha)
    except ValueError as err:
        raise UsageError(str(err)) from None


def cmd_diagram(args) -> int:
    a = _diagram_aniso(args)
    if args.samples < 4:
        raise UsageError("--samples must be at least 4")
    sample = sample_frank(a, args.samples) if args.command == "frank" else sample_wulff(a, args.samples)
    write_diagram_csv(sample, args.out)
    print(f"{a}: {args.samples} points written to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    sys.stdout.write(print_config(cfg))
    return EXIT_OK


def _apply_sweep_value(text: str, key: str, value: str) -> str:
    """Config text with ``key`` set to ``value``.

    A scalar assigned to a vector entry rescales the vector to that
    magnitude, so ``loads.traction.pad`` sweeps the load strength.
    """
    doc = parse_document(text)
    section, _, name = key.partition(".")
    old = doc.get(section, name)
    if old is not None and old.value.startswith("(") and not value.startswith("("):
        from .config import _number, _vector

        vec = _vector(old.value, old.line)
        norm = sum(v * v for v in vec) ** 0.5
        if norm == 0.0:
            raise UsageError(f"cannot rescale the zero vector {key}")
        s = _number(value, 0) / norm
        value = "(" + ", ".join(repr(v * s) for v in vec) + ")"
    doc.set(key, value)
    cfg = build_config(doc)
    return print_config(cfg)


def _sweep_dir(out: Path, i: int, key: str, value: str) -> Path:
    tag = re.sub(r"[^A-Za-z0-9.+=-]+", "_", f"{key}={value}")
    return out / f"{i:02d}_{tag}"


def _sweep_worker(text: str, out: str) -> str:
    cfg = parse_config(text)
    res = run(cfg, out_dir=out)
    last = res.trace[-1] if res.trace else res.initial
    return last.line()


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def cmd_sweep(args) -> int:
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise UsageError("--values must list at least one value")
    with open(args.config, encoding="utf-8") as fh:
        text = fh.read()
    jobs = []
    out = Path(args.out)
    for i, v in enumerate(values):
        jobs.append((_apply_sweep_value(text, args.key, v), _sweep_dir(out, i, args.key, v), v))
    out.mkdir(parents=True, exist_ok=True)
    threads = min(_threads(), len(jobs))
    if threads == 1:
        for job_text, d, v in jobs:
            line = _sweep_worker(job_text, str(d))
            print(f"{args.key}={v}: {line}")
        return EXIT_OK
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = {pool.submit(_sweep_worker, t, str(d)): v for t, d, v in jobs}
        done, pending = wait(futures, return_when=FIRST_EXCEPTION)
        for f in pending:
            f.cancel()
        for f in futures:
            if f.cancelled():
                continue
            if f in done or f.done():
                err = f.exception()
                if err is not None:
                    raise err
                print(f"{args.key}={futures[f]}: {f.result()}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aniso-topo", description="Anisotropic phase-field topology optimisation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a configuration file")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("scenario", help="run a shipped scenario")
    s.add_argument("name", choices=sorted(SCENARIOS))
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.add_argument("--t-end", type=float)
    s.add_argument("--nx", type=int, help="cells per side")
    s.add_argument("--print", action="store_true", help="print the resolved configuration and exit")
    s.set_defaults(func=cmd_scenario)

    for name, what in (("frank", "Frank diagram"), ("wulff", "Wulff shape")):
        d = sub.add_parser(name, help=f"sample the {what} to CSV")
        d.add_argument("--alpha", type=float, required=True)
        d.add_argument("--delta", type=float, default=0.0)
        d.add_argument("--lambda", dest="lam", type=float)
        d.add_argument("--samples", type=int, default=720)
        d.add_argument("--out", required=True)
        d.set_defaults(func=cmd_diagram)

    w = sub.add_parser("sweep", help="run one simulation per value of a config key")
    w.add_argument("--config", required=True)
    w.add_argument("--key", required=True, help="section.key, e.g. anisotropy.alpha")
    w.add_argument("--values", required=True, help="comma separated")
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate", help="parse and validate a configuration without running")
    v.add_argument("--config", required=True)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except SOLVER_ERRORS as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except (ParseError, NonConvexUnsupported, UsageError, AnisoTopoError, ValueError, OSError) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
