"""Command-line front end: ``sagin-match generate | run | compare``.

Every CSV written here starts with ``#`` comment lines giving the tool
version, the seed and a short hash of the scenario or config text, so a result
file can always be traced back to its inputs.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import hashlib
import os
import sys
from dataclasses import dataclass
from typing import Sequence

from . import __version__
from .baselines import distance_association, greedy_association
from .channel import rate_matrices
from .msa import MsaConfig, RunTrace, run_msa
from .scenario import (
    ScenarioConfig,
    ScenarioError,
    config_to_text,
    generate_scenario,
    load_config,
    load_scenario,
    default_config,
    save_scenario,
    scenario_to_text,
)
from .valuation import total_value, users_in_complete_chains, write_association_csv

__all__ = ["ALGOS", "CellResult", "compare", "main", "run_algorithm"]

ALGOS = ("distance", "greedy", "msa")

EXIT_OK, EXIT_USAGE, EXIT_NONCONVERGED = 0, 2, 3

COLUMNS_HELP = """\
output files (CSV, preceded by '#' header lines):
  trace.csv       iter, pair, event, total_value
                  one row per encounter for msa (event is match, evict-match,
                  decrement or no-op; total_value is the end-to-end value in
                  bits/s after the event); baselines write one 'final' row
  matching.csv    layer_pair, downstream_id, upstream_id, pair_value
  comparison.csv  n_users, seed, algo, total_value, iterations,
                  all_users_connected, converged, error
                  per-cell rows first, then one 'mean' row per (n_users, algo)
                  whose all_users_connected is the connected fraction

exit status: 0 success, 2 usage or config error, 3 msa did not converge
environment: SAGIN_MATCH_THREADS caps the number of parallel compare cells
"""


class UsageError(Exception):
    pass


def text_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def file_header(seed, digest: str, kind: str) -> str:
    return f"# sagin-match {__version__} {kind}\n# seed={seed} config_sha256={digest}\n"


def _int_list(text: str) -> list[int]:
    try:
        out = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _read_config(path: str | None) -> ScenarioConfig:
    if path is None:
        return default_config()
    if not os.path.isfile(path):
        raise UsageError(f"config file not found: {path}")
    return load_config(path)


def _msa_config(args) -> MsaConfig:
    kw = {"seed": getattr(args, "seed", 0)}
    if args.epsilon is not None:
        kw["epsilon"] = args.epsilon
    if args.delta is not None:
        kw["delta"] = args.delta
    if args.sweeps is not None:
        kw["sweep_repeats"] = args.sweeps
    if args.max_iters is not None:
        kw["max_iters_per_pair"] = args.max_iters
    kw["eviction"] = args.eviction
    try:
        return MsaConfig(**kw)
    except ValueError as exc:
        raise UsageError(str(exc))


# -- algorithms -------------------------------------------------------------------


@dataclass
class AlgoResult:
    matching: object
    total: float
    trace: RunTrace
    iterations: int
    converged: bool


def run_algorithm(scenario, algo: str, msa_config: MsaConfig | None = None) -> AlgoResult:
    """Run one association scheme; baselines get a one-row trace."""
    rates = rate_matrices(scenario)
    if algo == "msa":
        res = run_msa(scenario, msa_config or MsaConfig(), rates)
        return AlgoResult(res.matching, res.total, res.trace, res.iterations, res.converged)
    if algo == "greedy":
        matching = greedy_association(scenario, rates)
    elif algo == "distance":
        matching = distance_association(scenario, rates)
    else:
        raise ValueError(f"unknown algorithm {algo!r}")
    return AlgoResult(matching, total_value(matching, scenario, rates), RunTrace(), 0, True)


def write_trace(path, result: AlgoResult, header: str) -> None:
    if len(result.trace):
        result.trace.to_csv(path, header)
        return
    with open(path, "w", newline="") as fh:
        fh.write(header)
        w = csv.writer(fh)
        w.writerow(["iter", "pair", "event", "total_value"])
        w.writerow([0, "all", "final", repr(result.total)])


# -- compare ----------------------------------------------------------------------


@dataclass
class CellResult:
    n_users: int
    seed: int
    algo: str
    total_value: float
    iterations: int
    all_users_connected: bool
    converged: bool
    error: str = ""


def _cell(config: ScenarioConfig, n_users: int, seed: int, msa_kw: dict) -> list[CellResult]:
    """All algorithms on the scenario generated for (n_users, seed)."""
    try:
        scenario = generate_scenario(config.with_layer(0, count=n_users), seed)
    except Exception as exc:  # recorded per row; the sweep goes on
        return [CellResult(n_users, seed, a, float("nan"), 0, False, False, f"{type(exc).__name__}: {exc}")
                for a in ALGOS]
    out = []
    for algo in ALGOS:
        try:
            res = run_algorithm(scenario, algo, MsaConfig(seed=seed, **msa_kw))
            full = len(users_in_complete_chains(res.matching, scenario)) == n_users
            out.append(CellResult(n_users, seed, algo, res.total, res.iterations, full, res.converged))
        except Exception as exc:
            out.append(CellResult(n_users, seed, algo, float("nan"), 0, False, False,
                                  f"{type(exc).__name__}: {exc}"))
    return out


def _workers() -> int:
    env = os.environ.get("SAGIN_MATCH_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"SAGIN_MATCH_THREADS must be an integer, got {env!r}")
        if n < 1:
            raise UsageError("SAGIN_MATCH_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def compare(config: ScenarioConfig, users: Sequence[int], seeds: Sequence[int], msa_kw: dict | None = None,
            workers: int = 1) -> list[CellResult]:
    """Result rows for every (n_users, seed, algo), sorted in that order."""
    msa_kw = msa_kw or {}
    cells = [(n, s) for n in users for s in seeds]
    rows: list[CellResult] = []
    if workers <= 1 or len(cells) <= 1:
        for n, s in cells:
            rows.extend(_cell(config, n, s, msa_kw))
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=min(workers, len(cells))) as pool:
            futures = [pool.submit(_cell, config, n, s, msa_kw) for n, s in cells]
            for f in futures:
                rows.extend(f.result())
    rows.sort(key=lambda r: (r.n_users, r.seed, r.algo))
    return rows


def mean_rows(rows: Sequence[CellResult]) -> list[tuple]:
    groups: dict[tuple[int, str], list[CellResult]] = {}
    for r in rows:
        groups.setdefault((r.n_users, r.algo), []).append(r)
    out = []
    for (n, algo), rs in sorted(groups.items()):
        ok = [r for r in rs if not r.error]
        mean = sum(r.total_value for r in ok) / len(ok) if ok else float("nan")
        iters = sum(r.iterations for r in ok) / len(ok) if ok else float("nan")
        frac = sum(r.all_users_connected for r in rs) / len(rs)
        conv = all(r.converged for r in rs)
        out.append((n, "mean", algo, repr(mean), repr(iters), repr(frac), int(conv), ""))
    return out


def write_comparison(path, rows: Sequence[CellResult], header: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(header)
        w = csv.writer(fh)
        w.writerow(["n_users", "seed", "algo", "total_value", "iterations", "all_users_connected", "converged",
                    "error"])
        for r in rows:
            w.writerow([r.n_users, r.seed, r.algo, repr(r.total_value), r.iterations, int(r.all_users_connected),
                        int(r.converged), r.error])
        w.writerows(mean_rows(rows))


# -- commands ---------------------------------------------------------------------


def cmd_generate(args) -> int:
    config = _read_config(args.config)
    seed = config.seed if args.seed is None else args.seed
    scenario = generate_scenario(config, seed)
    out = args.out or "scenario.ini"
    save_scenario(scenario, out)
    counts = " ".join(f"{name}={n}" for name, n in zip(scenario.layer_names, scenario.counts()))
    print(f"wrote {out}: {counts} (seed {seed})")
    return EXIT_OK


def cmd_run(args) -> int:
    if not os.path.isfile(args.scenario):
        raise UsageError(f"scenario file not found: {args.scenario}")
    scenario = load_scenario(args.scenario)
    msa_config = _msa_config(args)
    result = run_algorithm(scenario, args.algo, msa_config)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    digest = text_hash(scenario_to_text(scenario))
    seed = args.seed if args.algo == "msa" else scenario.seed
    write_trace(os.path.join(out, "trace.csv"), result, file_header(seed, digest, f"trace algo={args.algo}"))
    write_association_csv(os.path.join(out, "matching.csv"), result.matching, scenario,
                          header=file_header(seed, digest, f"matching algo={args.algo}"))
    connected = len(users_in_complete_chains(result.matching, scenario))
    status = "converged" if result.converged else "NOT converged"
    print(f"algo={args.algo} total_value={result.total!r} bits/s users_connected={connected}/"
          f"{len(scenario.ids(0))} iterations={result.iterations} {status}")
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


def cmd_compare(args) -> int:
    config = _read_config(args.config)
    users = args.users or [config.layers[0].count]
    seeds = args.seeds or [config.seed]
    msa = _msa_config(args)
    msa_kw = {"epsilon": msa.epsilon, "delta": msa.delta, "sweep_repeats": msa.sweep_repeats,
              "max_iters_per_pair": msa.max_iters_per_pair, "eviction": msa.eviction}
    rows = compare(config, users, seeds, msa_kw, _workers())
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    digest = text_hash(config_to_text(config))
    seed_text = ",".join(map(str, seeds))
    path = os.path.join(out, "comparison.csv")
    write_comparison(path, rows, file_header(seed_text, digest, "comparison"))
    for n, _, algo, mean, *_ in mean_rows(rows):
        print(f"n_users={n} algo={algo} mean_total_value={float(mean):.6g}")
    failed = [r for r in rows if r.error]
    if failed:
        print(f"{len(failed)} cell(s) failed, see the error column of {path}", file=sys.stderr)
    return EXIT_OK if all(r.converged or r.error for r in rows) else EXIT_NONCONVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sagin-match",
        description="Layer-by-layer user association in space-air-ground networks.",
        epilog=COLUMNS_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def msa_flags(p, seed=True):
        if seed:
            p.add_argument("--seed", type=int, default=0, help="seed of the matching dynamic (default 0)")
        p.add_argument("--epsilon", type=float, help="absolute epsilon in bits/s (default: 1%% of mean value)")
        p.add_argument("--delta", type=float, help="aspiration decrement in bits/s (default: epsilon/2)")
        p.add_argument("--sweeps", type=int, help="bottom-up sweeps (default 3)")
        p.add_argument("--max-iters", type=int, help="encounter cap per layer pair (default 1000000)")
        p.add_argument("--eviction", choices=("value", "payoff"), default="value",
                       help="which partner a full upstream node gives up (default: smallest pair value)")

    g = sub.add_parser("generate", help="draw a scenario from a config", epilog=COLUMNS_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    g.add_argument("--config", help="config file (default: built-in 30-8-3-2 setup)")
    g.add_argument("--seed", type=int, help="placement seed (default: the config's seed)")
    g.add_argument("--out", help="output scenario file (default scenario.ini)")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="associate one scenario", epilog=COLUMNS_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    r.add_argument("--scenario", required=True, help="scenario file")
    r.add_argument("--algo", choices=ALGOS, default="msa")
    r.add_argument("--out", help="output directory (default: current)")
    msa_flags(r)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="all algorithms over user counts and seeds", epilog=COLUMNS_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    c.add_argument("--config", help="config file (default: built-in 30-8-3-2 setup)")
    c.add_argument("--users", type=_int_list, help="comma list of user counts (default: the config's)")
    c.add_argument("--seeds", type=_int_list, help="comma list of seeds (default: the config's)")
    c.add_argument("--out", help="output directory (default: current)")
    msa_flags(c, seed=False)  # each cell's seed drives both placement and dynamic
    c.set_defaults(func=cmd_compare)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on bad usage
    try:
        return args.func(args)
    except (UsageError, ScenarioError, OSError) as exc:
        print(f"sagin-match: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
