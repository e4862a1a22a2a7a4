"""Command-line convergence runner.

Example::

    bforc --test 1 --element taylor-hood --levels 4,8,16,32 --out results

Exit codes: 0 success, 1 invalid arguments, 2 Picard non-convergence,
3 linear solver failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .femspace import ElementChoice
from .mms import convergence_table, custom_case, get_test_case, run_level
from .output import emit_plot, table_rows, write_table, write_vtk
from .solver import PicardNonConvergence, SolverError

logger = logging.getLogger("bforc")

EXIT_OK, EXIT_USAGE, EXIT_PICARD, EXIT_SOLVER = 0, 1, 2, 3
EMIT_CHOICES = ("csv", "svg", "vtk")
DEFAULT_LEVELS = {ElementChoice.TAYLOR_HOOD: (4, 8, 16, 32), ElementChoice.MINI: (8, 16, 32, 64)}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    test_id: int | str = 1
    element: ElementChoice = ElementChoice.TAYLOR_HOOD
    levels: tuple = DEFAULT_LEVELS[ElementChoice.TAYLOR_HOOD]
    tol: float = 1e-6
    max_iter: int = 100
    output_dir: Path = Path(".")
    emit: frozenset = field(default_factory=lambda: frozenset({"csv", "svg"}))
    s: float | None = None
    threads: int = 0
    verbose: bool = False

    def test_case(self):
        if self.test_id == "custom":
            return custom_case(self.s)
        return get_test_case(self.test_id)

    @property
    def stem(self) -> str:
        return f"test{self.test_id}_{self.element.value}"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bforc", description="Manufactured-solution convergence study for the "
                "thermally coupled convective Brinkman-Forchheimer solver.")
    p.add_argument("--test", default="1", help="test case 1-4, or 'custom' (needs --s)")
    p.add_argument("--element", default="taylor-hood", choices=[c.value for c in ElementChoice])
    p.add_argument("--levels", default=None,
                   help="comma-separated mesh sizes n (default 4,8,16,32 for taylor-hood, 8,16,32,64 for mini)")
    p.add_argument("--tol", type=float, default=1e-6, help="Picard increment tolerance")
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--emit", default=None, help="comma-separated subset of csv,svg,vtk (default csv,svg)")
    p.add_argument("--s", type=float, default=None, help="Forchheimer exponent in [3, 4] (custom mode only)")
    p.add_argument("--seed", type=int, default=None, help="reserved; runs are deterministic")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _threads_from_env() -> int:
    raw = os.environ.get("BFORC_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"BFORC_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise UsageError("BFORC_THREADS must be >= 0")
    return n


def config_from_args(argv=None) -> RunConfig:
    args = build_parser().parse_args(argv)
    element = ElementChoice(args.element)

    if args.test == "custom":
        if args.s is None:
            raise UsageError("--test custom requires --s")
        if not 3.0 <= args.s <= 4.0:
            raise UsageError(f"--s must lie in [3, 4], got {args.s}")
        test_id = "custom"
    else:
        if args.s is not None:
            raise UsageError("--s is only valid with --test custom")
        if args.test not in {"1", "2", "3", "4"}:
            raise UsageError(f"--test must be 1-4 or custom, got {args.test!r}")
        test_id = int(args.test)

    if args.levels is None:
        levels = DEFAULT_LEVELS[element]
    else:
        try:
            levels = tuple(int(v) for v in args.levels.split(","))
        except ValueError:
            raise UsageError(f"--levels must be comma-separated integers, got {args.levels!r}") from None
        if any(n < 1 for n in levels) or any(b <= a for a, b in zip(levels, levels[1:])):
            raise UsageError("--levels must be positive and strictly increasing")

    if args.emit is None:
        emit = {"csv", "svg"} if len(levels) > 1 else {"csv"}
    else:
        emit = {e.strip() for e in args.emit.split(",") if e.strip()}
        bad = emit - set(EMIT_CHOICES)
        if bad or not emit:
            raise UsageError(f"--emit takes a subset of {','.join(EMIT_CHOICES)}")
        if "svg" in emit and len(levels) < 2:
            raise UsageError("svg output needs at least two levels")

    if not args.tol > 0:
        raise UsageError("--tol must be positive")
    if args.max_iter < 1:
        raise UsageError("--max-iter must be at least 1")

    return RunConfig(test_id=test_id, element=element, levels=levels, tol=args.tol,
                     max_iter=args.max_iter, output_dir=Path(args.out), emit=frozenset(emit),
                     s=args.s, threads=_threads_from_env(), verbose=args.verbose)


def run_convergence(cfg: RunConfig) -> int:
    tc = cfg.test_case()
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    workers = cfg.threads or min(len(cfg.levels), os.cpu_count() or 1)
    keep = "vtk" in cfg.emit

    def one(n):
        logger.info("solving %s on n=%d", cfg.stem, n)
        return run_level(tc, cfg.element, n, cfg.tol, cfg.max_iter, keep_state=keep)

    try:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            # mms.convergence_table keeps row order regardless of completion order
            levels = convergence_table(tc, cfg.element, cfg.levels, map_fn=lambda f, xs: pool.map(one, xs))
    except PicardNonConvergence as exc:
        logger.error("%s", exc)
        return EXIT_PICARD
    except (SolverError, FloatingPointError) as exc:
        logger.error("solver failure: %s", exc)
        return EXIT_SOLVER

    meta = {"test": cfg.test_id, "element": cfg.element.value, "s": tc.s, "tol": cfg.tol,
            "levels": list(cfg.levels)}
    if "csv" in cfg.emit:
        write_table(levels, out / f"convergence_{cfg.stem}.csv", out / f"convergence_{cfg.stem}.json", meta)
    if "svg" in cfg.emit:
        guide = 1.0 if cfg.element is ElementChoice.TAYLOR_HOOD else 0.5
        emit_plot(table_rows(levels), out / f"convergence_{cfg.stem}.svg", guide,
                  title=f"Test {cfg.test_id}, {cfg.element.value}")
    if keep:
        for lv in levels:
            write_vtk(lv.spaces, lv.state, out / f"solution_{cfg.stem}_n{lv.n}.vtk",
                      title=f"{cfg.stem} n={lv.n}")

    for lv in levels:
        rates = "" if lv.rates is None else "  rates " + " ".join(f"{r:.3f}" for r in lv.rates)
        print(f"n={lv.n:4d} ndof={lv.ndof:7d} iters={lv.iterations:3d} errors "
              + " ".join(f"{e:.4e}" for e in lv.errors) + rates)
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = config_from_args(argv)
    except UsageError as exc:
        build_parser().print_usage(sys.stderr)
        print(f"bforc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if cfg.verbose:
        logger.setLevel(logging.INFO)
    return run_convergence(cfg)


if __name__ == "__main__":
    sys.exit(main())
