"""Command-line entry point.

Exit status: 0 success, 1 usage error, 2 data error, 3 solve budget exhausted.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from typing import List, Optional

from . import fileio
from .baselines import KMM_BOX_CAP, LANDMARK_CUTOFF, coral_transform, kmm_weights, landmark_select
from .evaluation import PRESETS, SynthSpec, evaluate_pipeline, sweep_mmd_accuracy, synth_domain_pair
from .exceptions import AdaPruneError, InstanceTooLargeError
from .kernel import DEFAULT_BANDWIDTHS, KernelModel
from .lpformat import export_qp_text
from .solver import (
    BUDGET_EXHAUSTED,
    DEFAULT_NODE_BUDGET,
    build_problem,
    solve_branch_bound,
    solve_brute_force,
    solve_greedy_swap,
    solve_relax_round,
    subset_size_for_ratio,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BUDGET = 0, 1, 2, 3

COMMANDS = ("prune", "kmm", "landmarks", "coral", "eval", "sweep", "synth", "export-qp")
SOLVERS = ("bb", "greedy", "relax", "brute")
SWEEP_NODE_BUDGET = 25

log = logging.getLogger("adaprune")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    source_path: Optional[str] = None
    target_path: Optional[str] = None
    output_path: Optional[str] = None
    bandwidths: tuple = DEFAULT_BANDWIDTHS
    ratio: float = 0.5
    solver: str = "bb"
    seed: int = 0
    k: int = 1
    box_cap: float = KMM_BOX_CAP
    sum_tolerance: Optional[float] = None
    ridge: float = 1.0
    threshold: float = LANDMARK_CUTOFF
    node_budget: Optional[int] = None
    threads: int = 0
    method: str = "adaprune"
    preset: str = "irrelevant-cluster"
    spec_path: Optional[str] = None
    ratios: List[float] = field(default_factory=lambda: [0.20, 0.35, 0.50, 0.65, 0.80, 0.99])
    seeds: List[int] = field(default_factory=lambda: list(range(10)))

    def validate(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if not 0 < self.ratio <= 1:
            raise UsageError("--ratio must lie in (0, 1]")
        if self.node_budget is not None and self.node_budget < 1:
            raise UsageError("--node-budget must be at least 1")
        if self.solver not in SOLVERS:
            raise UsageError(f"--solver must be one of {', '.join(SOLVERS)}")
        try:
            KernelModel(self.bandwidths)
        except AdaPruneError as exc:
            raise UsageError(f"--bandwidths: {exc}") from None
        need = {
            "prune": ("source_path", "target_path", "output_path"),
            "kmm": ("source_path", "target_path", "output_path"),
            "landmarks": ("source_path", "target_path", "output_path"),
            "coral": ("source_path", "target_path", "output_path"),
            "eval": ("source_path", "target_path", "output_path"),
            "export-qp": ("source_path", "target_path", "output_path"),
            "sweep": ("output_path",),
            "synth": ("source_path", "target_path"),
        }[self.command]
        for attr in need:
            if not getattr(self, attr):
                raise UsageError(f"--{attr.replace('_path', '')} is required for {self.command}")
        return self


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text):
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    """Comma-separated integers; ``a-b`` expands to the inclusive range."""
    out = []
    try:
        for tok in filter(None, (t.strip() for t in text.split(","))):
            lo, sep, hi = tok.partition("-")
            out.extend(range(int(lo), int(hi) + 1) if sep else [int(tok)])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers or ranges, got {text!r}")
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adaprune", description="MMD-based source data pruning for domain adaptation.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--source", dest="source_path", help="source embedding CSV")
    parser.add_argument("--target", dest="target_path", help="target embedding CSV")
    parser.add_argument("--output", dest="output_path", help="output file")
    parser.add_argument("--bandwidths", type=_floats, default=list(DEFAULT_BANDWIDTHS),
                        help="comma-separated RBF bandwidths")
    parser.add_argument("--ratio", type=float, default=0.5, help="fraction of source rows to keep")
    parser.add_argument("--solver", default="bb", help="bb, greedy, relax or brute")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--k", type=int, default=1, help="neighbours for k-NN scoring")
    parser.add_argument("--box-cap", type=float, default=KMM_BOX_CAP)
    parser.add_argument("--sum-tolerance", type=float, default=None,
                        help="KMM sum band; default (sqrt(N)-1)/sqrt(N)")
    parser.add_argument("--ridge", type=float, default=1.0, help="CORAL covariance ridge")
    parser.add_argument("--threshold", type=float, default=LANDMARK_CUTOFF,
                        help="landmark cutoff on relaxed values")
    parser.add_argument("--node-budget", type=int, default=None,
                        help=f"branch-and-bound node cap (prune: {DEFAULT_NODE_BUDGET}, "
                             f"sweep: {SWEEP_NODE_BUDGET})")
    parser.add_argument("--threads", type=int, default=0, help="worker cap, 0 = auto")
    parser.add_argument("--method", default="adaprune",
                        choices=("adaprune", "kmm", "landmarks", "coral", "none"))
    parser.add_argument("--preset", default="irrelevant-cluster", choices=sorted(PRESETS))
    parser.add_argument("--spec", dest="spec_path", help="JSON file with synthetic spec fields")
    parser.add_argument("--ratios", type=_floats, default=[0.20, 0.35, 0.50, 0.65, 0.80, 0.99])
    parser.add_argument("--seeds", type=_ints, default=list(range(10)))
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def parse_config(argv) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    ns.pop("verbose", None)
    ns["bandwidths"] = tuple(ns["bandwidths"])
    return RunConfig(**ns).validate()


def _synth_spec(config: RunConfig) -> SynthSpec:
    if config.spec_path:
        with open(config.spec_path, encoding="utf-8") as fh:
            fields = json.load(fh)
        fields.setdefault("seed", config.seed)
        return SynthSpec(**fields).validate()
    return PRESETS[config.preset](seed=config.seed)


def _solve(problem, config: RunConfig):
    if config.solver == "brute":
        return solve_brute_force(problem)
    if config.solver == "relax":
        return solve_relax_round(problem)
    if config.solver == "greedy":
        return solve_greedy_swap(problem, solve_relax_round(problem).mask)
    # the incumbent carried out of an exhausted search is the greedy-improved fallback
    return solve_branch_bound(problem, config.node_budget or DEFAULT_NODE_BUDGET)


def run_command(config: RunConfig, stdout=None) -> int:
    stdout = stdout or sys.stdout
    model = KernelModel(config.bandwidths)
    cmd = config.command

    if cmd == "synth":
        source, target = synth_domain_pair(_synth_spec(config))
        fileio.write_embeddings(config.source_path, source)
        fileio.write_embeddings(config.target_path, target)
        return EXIT_OK

    if cmd == "sweep":
        threads = config.threads if config.threads > 0 else -1
        table = sweep_mmd_accuracy(_synth_spec(config), config.ratios, config.seeds, config.k,
                                   model, node_budget=config.node_budget or SWEEP_NODE_BUDGET,
                                   n_jobs=threads)
        fileio.write_sweep(config.output_path, table)
        print(f"r={table.r:.6g} p={table.p:.6g} n={table.n}", file=stdout)
        return EXIT_OK

    source = fileio.load_embeddings(config.source_path)
    target = fileio.load_embeddings(config.target_path)

    if cmd == "eval":
        report = evaluate_pipeline(source, target, model, config.method, {
            "ratio": config.ratio, "k": config.k, "box_cap": config.box_cap,
            "sum_tolerance": config.sum_tolerance, "ridge": config.ridge,
            "threshold": config.ratio, "cutoff": config.threshold,
            "node_budget": config.node_budget or DEFAULT_NODE_BUDGET,
        })
        fileio.write_report(config.output_path, report)
        return EXIT_OK

    # label hygiene: nothing below sees target labels
    src_x, tgt_x = source.unlabelled(), target.unlabelled()

    if cmd in ("prune", "export-qp"):
        size = subset_size_for_ratio(config.ratio, source.n)
        problem = build_problem(src_x, tgt_x, model, size)
        if cmd == "export-qp":
            with fileio.atomic_write(config.output_path) as fh:
                export_qp_text(problem, fh)
            return EXIT_OK
        result = _solve(problem, config)
        fileio.write_mask(config.output_path, result.mask, source.n)
        print(f"N_ss={size} objective={fileio.fmt(result.objective)} "
              f"mmd={fileio.fmt(result.mmd)} status={result.status}", file=stdout)
        return EXIT_BUDGET if result.status == BUDGET_EXHAUSTED else EXIT_OK

    if cmd == "kmm":
        weights = kmm_weights(src_x, tgt_x, model, config.box_cap, config.sum_tolerance)
        fileio.write_weights(config.output_path, weights)
        return EXIT_OK

    if cmd == "landmarks":
        if not 0 < config.ratio < 1:
            raise UsageError("landmarks needs --ratio strictly inside (0, 1)")
        mask = landmark_select(src_x, tgt_x, model, config.ratio, config.threshold)
        fileio.write_mask(config.output_path, mask, source.n)
        return EXIT_OK

    _, moved = coral_transform(source, tgt_x, config.ridge)
    fileio.write_embeddings(config.output_path, moved)
    return EXIT_OK


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    logging.basicConfig(level=logging.DEBUG if "-v" in argv or "--verbose" in argv else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        config = parse_config(argv)
        return run_command(config)
    except UsageError as exc:
        print(parser.format_usage().rstrip(), file=sys.stderr)
        print(f"adaprune: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AdaPruneError, InstanceTooLargeError, OSError, json.JSONDecodeError, TypeError) as exc:
        print(f"adaprune: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
