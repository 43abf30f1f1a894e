"""Command-line front end.

    fibergof test --model p1-constant --input data/examples/sampson18.edges --directed --seed 7
    fibergof fit --model independence --input data/examples/toy3x3.csv
    fibergof fiber --model independence --d1 3 --d2 3 --margins 1,1,1/1,1,1
    fibergof moves --model sbm-full --input g.edges --directed --blocks g.blocks --moves-out moves.json
    fibergof simulate --model p1-constant --input g.edges --directed --count 200

Exit codes: 0 ok, 1 incomplete enumeration or integer overflow, 2 nonconverged fit
(``--strict`` or ``simulate``), 64 usage, 66 input/output.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from fibergof.core.lattice import (
    Move,
    curated_moves,
    incomplete_moves_3x3,
    independence_basic_moves,
    integer_kernel,
    prune,
)
from fibergof.core.tables import DyadTable, GraphData, Mode, encode_graph
from fibergof.core.zoo import MODEL_NAMES, BlockPartition, ModelSpec
from fibergof.errors import (
    FiberGofError,
    InputFileError,
    NotConvergedError,
    TruncatedFiberError,
    UsageError,
)
from fibergof.services import filenames as fn
from fibergof.services import storage
from fibergof.services.gof import STAT_KINDS, exact_test, statistic
from fibergof.services.ipf import DEFAULT_MAX_ITER, DEFAULT_TOL, ipf_fit, mle_existence_heuristic
from fibergof.services.oracle import DEFAULT_CAP, connectivity_check, enumerate_fiber, exact_pvalue_small, table_from_margins
from fibergof.services.sampler import TARGETS, ChainConfig
from fibergof.services.simulate import simulate
from fibergof.services.utils import ensure_out_dir, is_valid_chain_params, parse_margins, resolve_seed

logger = logging.getLogger("fibergof")

MOVE_SETS = ("basis", "curated", "basic", "incomplete-3x3")

EXIT_OK = 0
EXIT_TRUNCATED = 1
EXIT_NOT_CONVERGED = 2
EXIT_USAGE = 64
EXIT_IO = 66


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with 64."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunSpec:
    command: str
    model: str
    input: Optional[str] = None
    directed: bool = False
    multigraph: bool = False
    blocks: Optional[str] = None
    d1: Optional[int] = None
    d2: Optional[int] = None
    margins: Optional[Tuple[List[int], List[int]]] = None
    trials: Optional[int] = None
    steps: int = 100_000
    burn_in: int = 10_000
    thin: int = 10
    seed: int = 0
    seed_source: str = "flag"
    chains: int = 1
    stat: Optional[str] = None
    proposal_mix: float = 0.8
    geometric_p: float = 0.5
    target: Optional[str] = None
    out: Optional[str] = None
    csv: Optional[str] = None
    xlsx: Optional[str] = None
    strict: bool = False
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    cap: int = DEFAULT_CAP
    dump: Optional[str] = None
    move_set: Optional[str] = None
    moves_in: Optional[str] = None
    prune: bool = False
    moves_out: Optional[str] = None
    count: int = 1
    out_dir: Optional[str] = None
    verbosity: int = 0

    @property
    def mode(self) -> Mode:
        return Mode.MULTIGRAPH if self.multigraph else Mode.SIMPLE

    def chain_config(self) -> ChainConfig:
        return ChainConfig(
            steps=self.steps,
            burn_in=self.burn_in,
            thin=self.thin,
            seed=self.seed,
            proposal_mix=self.proposal_mix,
            geometric_p=self.geometric_p,
            target=self.target,
            chains=self.chains,
        )


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, choices=MODEL_NAMES, help="Model family")
    p.add_argument("--input", help="Edge list (graph models) or count-table CSV (independence)")
    p.add_argument("--directed", action="store_true", help="Read the edge list as directed")
    p.add_argument("--multigraph", action="store_true", help="Multigraph tables (counts per dyad state)")
    p.add_argument("--blocks", help="Block file: one 'label block' line per node (sbm models)")
    p.add_argument("--trials", type=int, help="Observations per dyad for multigraph tables")
    p.add_argument("--d1", type=int, help="Rows of an independence table")
    p.add_argument("--d2", type=int, help="Columns of an independence table")
    p.add_argument("--margins", help="Independence margins, e.g. 1,1,1/1,1,1")
    p.add_argument("--seed", type=int, help="64-bit seed (fallback: FIBERGOF_SEED, then random)")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="IPF margin tolerance")
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER, help="IPF sweep limit")
    p.add_argument("-v", "--verbose", action="count", default=0, help="More logging (-v info, -vv debug)")
    p.add_argument("--quiet", action="store_true", help="Only log errors")


def _add_chain_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--steps", type=int, default=100_000, help="Proposals per chain, burn-in included")
    p.add_argument("--burn-in", type=int, default=10_000)
    p.add_argument("--thin", type=int, default=10)
    p.add_argument("--chains", type=int, default=1, help="Independent chains, pooled in order")
    p.add_argument("--proposal-mix", type=float, default=0.8, help="Probability of a single-move proposal")
    p.add_argument("--geometric-p", type=float, default=0.5)
    p.add_argument("--target", choices=TARGETS, help="Stationary law (default by mode)")


def _build_parser() -> _Parser:
    p = _Parser(prog="fibergof", description="Exact conditional goodness-of-fit tests for network models")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", help="Fit the model by iterative proportional scaling")
    _add_model_flags(fit)
    fit.add_argument("--out", help="JSON fit report")
    fit.add_argument("--csv", help="CSV of observed and fitted cell means")
    fit.add_argument("--strict", action="store_true", help="Exit 2 when the fit does not converge")

    test = sub.add_parser("test", help="Run the exact conditional test")
    _add_model_flags(test)
    _add_chain_flags(test)
    test.add_argument("--stat", choices=STAT_KINDS, default="chi2")
    test.add_argument("--out", help="JSON report (default: a run file in the output directory)")
    test.add_argument("--csv", help="CSV of the statistic stream")
    test.add_argument("--xlsx", help="Excel workbook with summary, stream and fit sheets")
    test.add_argument("--out-dir", help="Output directory (default: FIBERGOF_OUT_DIR or data/runs)")
    test.add_argument("--strict", action="store_true", help="Exit 2 when the fit does not converge")

    fiber = sub.add_parser("fiber", help="Enumerate a small fiber exhaustively")
    _add_model_flags(fiber)
    fiber.add_argument("--cap", type=int, default=DEFAULT_CAP, help="Stop after this many members")
    fiber.add_argument("--dump", help="CSV of all fiber members")
    fiber.add_argument("--move-set", choices=MOVE_SETS, help="Check connectivity under this move set")
    fiber.add_argument("--moves-in", help="Check connectivity under moves read from JSON")
    fiber.add_argument("--stat", choices=STAT_KINDS, help="Also compute the exact p-value")
    fiber.add_argument("--target", choices=TARGETS, help="Fiber weights for the exact p-value")
    fiber.add_argument("--out", help="JSON fiber summary")

    moves = sub.add_parser("moves", help="Build, prune and export a move set")
    _add_model_flags(moves)
    moves.add_argument("--move-set", choices=MOVE_SETS, help="Move family (default: lattice basis)")
    moves.add_argument("--moves-in", help="Read moves from JSON instead of building them")
    moves.add_argument("--prune", action="store_true", help="Keep moves applicable at the observed table")
    moves.add_argument("--moves-out", help="JSON file of [cell, increment] pairs per move")

    sim = sub.add_parser("simulate", help="Draw replicate tables from the fitted model")
    _add_model_flags(sim)
    sim.add_argument("--count", type=int, default=1, help="Number of replicates")
    sim.add_argument("--out", help="CSV of replicates (default: a run file in the output directory)")
    sim.add_argument("--out-dir", help="Output directory (default: FIBERGOF_OUT_DIR or data/runs)")
    return p


def _validate(p: argparse.ArgumentParser, ns: argparse.Namespace) -> None:
    family = ns.model.partition("-")[0]
    if family == "sbm" and not ns.blocks:
        p.error(f"--model {ns.model} requires --blocks")
    if family in ("p1", "sbm") and not ns.directed:
        p.error(f"--model {ns.model} requires --directed")
    if family == "beta" and ns.directed:
        p.error("--model beta reads undirected graphs; drop --directed")
    if family == "independence":
        if ns.directed or ns.blocks or ns.trials is not None:
            p.error("--directed, --blocks and --trials do not apply to independence tables")
        if not ns.input and not ns.margins:
            if ns.command != "moves" or ns.d1 is None or ns.d2 is None:
                p.error("independence needs --input or --margins")
        if ns.input and ns.margins:
            p.error("--input and --margins are mutually exclusive")
    else:
        if not ns.input:
            p.error(f"--model {ns.model} requires --input")
        if ns.margins or ns.d1 is not None or ns.d2 is not None:
            p.error("--margins, --d1 and --d2 apply to independence tables only")
        if ns.trials is not None and not ns.multigraph:
            p.error("--trials requires --multigraph")
    if ns.trials is not None and ns.trials < 1:
        p.error(f"--trials must be positive, got {ns.trials}")
    if ns.tol <= 0 or ns.max_iter < 1:
        p.error("--tol must be positive and --max-iter at least 1")
    if ns.seed is not None and not 0 <= ns.seed < 2**64:
        p.error(f"--seed must be a 64-bit unsigned integer, got {ns.seed}")
    if ns.command == "test":
        if not is_valid_chain_params(ns.steps, ns.burn_in, ns.thin):
            p.error(f"invalid chain length: steps={ns.steps}, burn-in={ns.burn_in}, thin={ns.thin}")
        if ns.chains < 1:
            p.error(f"--chains must be positive, got {ns.chains}")
        if not 0.0 <= ns.proposal_mix <= 1.0:
            p.error(f"--proposal-mix must be in [0, 1], got {ns.proposal_mix}")
        if not 0.0 < ns.geometric_p < 1.0:
            p.error(f"--geometric-p must be in (0, 1), got {ns.geometric_p}")
    if ns.command == "fiber" and ns.cap < 1:
        p.error(f"--cap must be positive, got {ns.cap}")
    if ns.command in ("fiber", "moves") and ns.move_set and ns.moves_in:
        p.error("--move-set and --moves-in are mutually exclusive")
    if ns.command == "simulate" and ns.count < 1:
        p.error(f"--count must be positive, got {ns.count}")


def parse_args(argv: Optional[Sequence[str]] = None) -> RunSpec:
    """Parse and validate the command line; usage errors exit with 64."""
    p = _build_parser()
    ns = p.parse_args(argv)
    _validate(p, ns)
    margins = None
    if ns.margins:
        try:
            margins = parse_margins(ns.margins)
        except ValueError as e:
            p.error(str(e))
    try:
        seed, source = resolve_seed(ns.seed)
    except UsageError as e:
        p.error(str(e))
    return RunSpec(
        command=ns.command,
        model=ns.model,
        input=ns.input,
        directed=ns.directed,
        multigraph=ns.multigraph,
        blocks=ns.blocks,
        d1=ns.d1,
        d2=ns.d2,
        margins=margins,
        trials=ns.trials,
        steps=getattr(ns, "steps", 100_000),
        burn_in=getattr(ns, "burn_in", 10_000),
        thin=getattr(ns, "thin", 10),
        seed=seed,
        seed_source=source,
        chains=getattr(ns, "chains", 1),
        stat=getattr(ns, "stat", None),
        proposal_mix=getattr(ns, "proposal_mix", 0.8),
        geometric_p=getattr(ns, "geometric_p", 0.5),
        target=getattr(ns, "target", None),
        out=getattr(ns, "out", None),
        csv=getattr(ns, "csv", None),
        xlsx=getattr(ns, "xlsx", None),
        strict=getattr(ns, "strict", False),
        tol=ns.tol,
        max_iter=ns.max_iter,
        cap=getattr(ns, "cap", DEFAULT_CAP),
        dump=getattr(ns, "dump", None),
        move_set=getattr(ns, "move_set", None),
        moves_in=getattr(ns, "moves_in", None),
        prune=getattr(ns, "prune", False),
        moves_out=getattr(ns, "moves_out", None),
        count=getattr(ns, "count", 1),
        out_dir=getattr(ns, "out_dir", None),
        verbosity=-1 if ns.quiet else ns.verbose,
    )


def _configure_logging(verbosity: int) -> None:
    level = {-1: logging.ERROR, 0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)


def load_data(run: RunSpec) -> Tuple[ModelSpec, Union[GraphData, DyadTable]]:
    """Read the run's input and build its model.

    Raises:
        InputFileError: If an input file cannot be read
        UsageError: If the input does not fit the requested model
    """
    family = run.model.partition("-")[0]
    if family == "independence":
        if run.input:
            table = storage.read_count_table(run.input)
            if table.shape is None or len(table.shape) != 2:
                raise InputFileError(f"Failed to read count table: {run.input} is not two-way")
            d1, d2 = table.shape
        elif run.margins:
            rows, cols = run.margins
            table = table_from_margins(rows, cols)
            d1, d2 = len(rows), len(cols)
        else:
            d1, d2 = run.d1, run.d2
            table = DyadTable.from_counts(np.zeros((d1, d2), dtype=np.int64))
        if (run.d1 is not None and run.d1 != d1) or (run.d2 is not None and run.d2 != d2):
            raise UsageError(f"table is {d1}x{d2}, but --d1/--d2 say {run.d1}x{run.d2}")
        return ModelSpec.from_name(run.model, d1=d1, d2=d2), table

    block_of = storage.read_blocks(run.blocks) if run.blocks else {}
    g = storage.read_edge_list(run.input, directed=run.directed, extra_labels=list(block_of), trials=run.trials)
    partition = BlockPartition.from_labels(g.labels, block_of) if family == "sbm" else None
    return ModelSpec.from_name(run.model, n=g.n, partition=partition, mode=run.mode), g


def _table(spec: ModelSpec, data: Union[GraphData, DyadTable]) -> DyadTable:
    if isinstance(data, DyadTable):
        return data
    spec.check_graph(data)
    return encode_graph(data, spec.mode)


def _run_path(run: RunSpec, explicit: Optional[str], ext: str) -> str:
    if explicit:
        return explicit
    base = run.out_dir or ensure_out_dir()
    return os.path.join(base, fn.format_run_name(run.command, run.model, run.seed) + ext)


def _move_set(run: RunSpec, spec: ModelSpec) -> List[Move]:
    A = spec.design()
    if run.moves_in:
        return storage.read_moves_json(run.moves_in, A.n_cols)
    name = run.move_set or "basis"
    if name == "basis":
        return list(integer_kernel(A).moves)
    if name == "curated":
        return curated_moves(spec, A)
    if spec.family != "independence":
        raise UsageError(f"--move-set {name} applies to independence tables only")
    if name == "basic":
        return independence_basic_moves(spec.d1, spec.d2)
    if (spec.d1, spec.d2) != (3, 3):
        raise UsageError("--move-set incomplete-3x3 needs a 3x3 table")
    return incomplete_moves_3x3()


def _cmd_fit(run: RunSpec) -> int:
    spec, data = load_data(run)
    t = _table(spec, data)
    A = spec.design()
    fit = ipf_fit(A, t, tol=run.tol, max_iter=run.max_iter)
    mle = mle_existence_heuristic(fit)
    print(f"Model: {spec.name}  cells: {A.n_cols}  rows: {A.n_rows}")
    print(f"Converged: {fit.converged} after {fit.iterations} sweeps (max margin gap {fit.max_margin_gap:.3g})")
    print(f"MLE: {mle.status}")
    for reason in mle.reasons:
        print(f"  - {reason}")
    print(f"Seed: {run.seed} ({run.seed_source})")
    if run.out:
        report = {
            "model": spec.to_dict(),
            "fit": fit.summary(),
            "mle": {"status": mle.status, "reasons": mle.reasons},
            "fitted_means": [float(x) for x in fit.fitted_means],
            "seed": run.seed,
        }
        print(f"Wrote: {storage.write_json(report, run.out)}")
    if run.csv:
        print(f"Wrote: {storage.write_fitted_means(A.col_labels, t.cells, fit.fitted_means, run.csv)}")
    if run.strict and not fit.converged:
        print("error: fit did not converge (--strict)", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _cmd_test(run: RunSpec) -> int:
    spec, data = load_data(run)
    report = exact_test(data, spec, run.chain_config(), stat_kind=run.stat, tol=run.tol, max_iter=run.max_iter)
    out = _run_path(run, run.out, ".json")
    storage.write_json(report.to_dict(), out)
    diag = report.chain_diagnostics
    print(f"Model: {spec.name}  stat: {report.stat_kind}")
    print(f"Observed statistic: {report.observed_stat:.4f}")
    print(f"p-value: {report.p_value:.4f}  (MC s.e. {report.se:.4f})")
    print(f"Kept samples: {diag['samples_kept']}  acceptance: {diag['acceptance_rate']:.3f}")
    print(f"Fit converged: {report.fit['converged']}  MLE: {report.mle['status']}")
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"Seed: {run.seed} ({run.seed_source})")
    print(f"Wrote: {out}")

    chain = report.chain
    lengths = [c.samples_kept for c in chain.chains] if chain.chains else [chain.samples_kept]
    if run.csv:
        print(f"Wrote: {storage.write_stat_stream(chain.stat_stream, run.csv, lengths)}")
    if run.xlsx:
        fit = report.fit_result
        stream_df = storage.stream_frame(chain.stat_stream, lengths)
        fit_df = storage.fitted_frame(spec.design().col_labels, fit.observed, fit.fitted_means)
        print(f"Wrote: {storage.write_excel_report(report.to_dict(), stream_df, fit_df, run.xlsx)}")
    if run.strict and not report.fit["converged"]:
        print("error: fit did not converge (--strict)", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _cmd_fiber(run: RunSpec) -> int:
    spec, data = load_data(run)
    t = _table(spec, data)
    A = spec.design()
    fiber = enumerate_fiber(A, t, cap=run.cap)
    print(f"Model: {spec.name}  fiber size: {fiber.size}{' (truncated)' if fiber.truncated else ''}")
    summary = {"model": spec.to_dict(), "fiber_size": fiber.size, "truncated": fiber.truncated}
    if run.dump:
        print(f"Wrote: {storage.write_tables(fiber.members, A.col_labels, run.dump)}")
    if fiber.truncated and (run.move_set or run.moves_in or run.stat):
        raise TruncatedFiberError(f"fiber has more than {run.cap} members; raise --cap")
    if run.move_set or run.moves_in:
        moves = _move_set(run, spec)
        report = connectivity_check(moves, fiber)
        print(f"Moves: {len(moves)}  components: {report.components}  sizes: {report.component_sizes}")
        summary.update(moves=len(moves), components=report.components, component_sizes=report.component_sizes)
        if report.witness:
            a, b = report.witness
            print(f"  unreachable: {list(a.cells)} -> {list(b.cells)}")
            summary["witness"] = [[int(x) for x in a.cells], [int(x) for x in b.cells]]
    if run.stat:
        fit = ipf_fit(A, t, tol=run.tol, max_iter=run.max_iter)
        p = exact_pvalue_small(A, t, statistic(run.stat, fit.fitted_means), target=run.target, fiber=fiber)
        print(f"Exact p-value ({run.stat}): {p:.6f}")
        summary.update(stat_kind=run.stat, exact_p_value=p)
    if run.out:
        print(f"Wrote: {storage.write_json(summary, run.out)}")
    return EXIT_TRUNCATED if fiber.truncated else EXIT_OK


def _cmd_moves(run: RunSpec) -> int:
    spec, data = load_data(run)
    moves = _move_set(run, spec)
    print(f"Model: {spec.name}  moves: {len(moves)}  max degree: {max((m.degree for m in moves), default=0)}")
    if run.prune:
        moves = prune(moves, _table(spec, data))
        print(f"Applicable at the observed table: {len(moves)}")
    if run.moves_out:
        print(f"Wrote: {storage.write_moves_json(moves, run.moves_out)}")
    return EXIT_OK


def _cmd_simulate(run: RunSpec) -> int:
    spec, data = load_data(run)
    t = _table(spec, data)
    A = spec.design()
    fit = ipf_fit(A, t, tol=run.tol, max_iter=run.max_iter)
    tables = simulate(spec, fit, run.count, run.seed)
    out = _run_path(run, run.out, ".csv")
    storage.write_tables(tables, A.col_labels, out)
    print(f"Model: {spec.name}  replicates: {len(tables)}")
    print(f"Seed: {run.seed} ({run.seed_source})")
    print(f"Wrote: {out}")
    return EXIT_OK


_COMMANDS = {
    "fit": _cmd_fit,
    "test": _cmd_test,
    "fiber": _cmd_fiber,
    "moves": _cmd_moves,
    "simulate": _cmd_simulate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        run = parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    _configure_logging(run.verbosity)
    logger.info("seed %d (%s)", run.seed, run.seed_source)
    try:
        return _COMMANDS[run.command](run)
    except InputFileError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except NotConvergedError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except TruncatedFiberError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_TRUNCATED
    except OverflowError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (UsageError, FiberGofError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
