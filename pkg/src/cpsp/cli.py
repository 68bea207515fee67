"""Command-line frontend.

Exit codes: 0 attack found (or check passed), 1 no attack after an
exhaustive search (or a failed check), 2 limits reached without a verdict,
3 usage, input or solver errors.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import shutil
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .completeness import NonCompliantBundle, canonicalize, scenario_trial
from .lang import DuplicateAgent, ParseError, Scenario, UnknownRole, format_scenario, parse_scenario
from .search import LimitExceeded, SearchConfig, search
from .strands import SchemaMismatch, json_to_dot, node_label, to_dot, to_json
from .timealg.smtlib import MalformedSolverReply, SolverUnavailable
from .timealg.store import Oracle

EXIT_ATTACK, EXIT_SAFE, EXIT_LIMIT, EXIT_ERROR = 0, 1, 2, 3


class CliError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    scenario_path: str
    scenario_name: str | None = None
    backend: str = "auto"
    solver_path: str | None = None
    max_depth: int = 64
    max_states: int = 100_000
    workers: int = 1
    seed: int = 0
    emit: str = "none"
    output_dir: str = "."

    def search_config(self) -> SearchConfig:
        return SearchConfig(max_depth=self.max_depth, max_states=self.max_states,
                            backend=self.backend, solver_path=self.solver_path,
                            workers=self.workers, seed=self.seed)


# --- corpus ----------------------------------------------------------------

def corpus_files() -> list[str]:
    root = resources.files("cpsp") / "corpus"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".cpsp"))


def read_scenario_text(path: str) -> str:
    """Read a scenario file; `corpus/NAME` falls back to the bundled corpus."""
    p = Path(path)
    if p.is_file():
        return p.read_text()
    if path.startswith("corpus/"):
        name = path.removeprefix("corpus/")
        if not name.endswith(".cpsp"):
            name += ".cpsp"
        res = resources.files("cpsp") / "corpus" / name
        if res.is_file():
            return res.read_text()
    raise CliError(f"cannot read scenario {path!r}")


def load(path: str, name: str | None = None) -> Scenario:
    return parse_scenario(read_scenario_text(path), name)


# --- configuration ---------------------------------------------------------

def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"{name} must be an integer, got {raw!r}") from None


def resolve_backend(backend: str, solver_path: str | None) -> tuple[str, str | None]:
    """Check that smt/auto can reach a solver; auto degrades to builtin."""
    if backend == "builtin":
        return backend, solver_path
    path = solver_path or "z3"
    if shutil.which(path) is None:
        if backend == "smt":
            raise CliError(f"solver executable {path!r} not found")
        print(f"warning: solver {path!r} not found, using the builtin backend only",
              file=sys.stderr)
        return "builtin", solver_path
    return backend, solver_path


def run_config(args: argparse.Namespace) -> RunConfig:
    solver = args.solver_path or os.environ.get("CPSP_SOLVER")
    workers = args.workers if args.workers is not None else _env_int("CPSP_WORKERS", 1)
    backend, solver = resolve_backend(args.backend, solver)
    return RunConfig(args.scenario, args.name, backend, solver, args.max_depth,
                     args.max_states, max(1, workers), args.seed, args.emit, args.out)


# --- subcommands -----------------------------------------------------------

def _table(rows: list[tuple[str, object]]) -> str:
    w = max(len(k) for k, _ in rows)
    return "\n".join(f"  {k:<{w}}  {v}" for k, v in rows)


def cmd_verify(cfg: RunConfig) -> int:
    sc = load(cfg.scenario_path, cfg.scenario_name)
    out = search(sc, cfg.search_config())
    match out.exit_code:
        case 0:
            print(f"{sc.name}: ATTACK FOUND")
        case 1:
            print(f"{sc.name}: no attack (search exhaustive)")
        case _:
            print(f"{sc.name}: inconclusive (search limits reached)")
    st = out.stats
    print(_table([("states", st.states), ("solver calls", st.solver_calls),
                  ("smt calls", st.smt_calls), ("max depth", st.max_depth),
                  ("passes", st.passes),
                  ("undecided", st.unknown), ("wall ms", f"{st.wall_ms:.1f}")]))
    if out.attack is not None:
        a = out.attack
        b = a.bundle
        print("trace:")
        for n in b.nodes:
            v = a.model.get(n.tvar)
            print(f"  {b.strand(n.strand).role.name:<10} {node_label(b, n)}"
                  + ("" if v is None else f"  t={v}"))
        if cfg.emit != "none":
            _emit(sc, out, cfg)
    return out.exit_code


def _emit(sc: Scenario, out, cfg: RunConfig) -> None:
    a = out.attack
    d = Path(cfg.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    if cfg.emit in ("json", "both"):
        data = to_json(a.bundle, a.topology, a.model, out.stats.as_dict(),
                       goal=sc.name)
        (d / f"{sc.name}.json").write_text(json.dumps(data, indent=2) + "\n")
        print(f"wrote {d / (sc.name + '.json')}")
    if cfg.emit in ("dot", "both"):
        (d / f"{sc.name}.dot").write_text(to_dot(a.bundle, a.topology))
        print(f"wrote {d / (sc.name + '.dot')}")


def cmd_export(path: str, fmt: str, out: str | None) -> int:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read trace {path!r}: {exc}") from exc
    if fmt != "dot":
        raise CliError(f"unsupported format {fmt!r}")
    text = json_to_dot(data)
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)
    return 0


def cmd_check_completeness(path: str, name: str | None, trials: int, seed: int,
                           backend: str, solver: str | None, canon=canonicalize) -> int:
    sc = load(path, name)
    if not sc.intruders:
        print(f"{sc.name}: no explicit intruders, nothing to check (vacuous pass)")
        return 0
    rng = random.Random(seed)
    oracle = Oracle(backend, solver)
    failed = vacuous = 0
    for i in range(1, trials + 1):
        r = scenario_trial(sc, rng, canon, oracle)
        if r is None:
            vacuous += 1
            print(f"trial {i:3d}: skipped (no satisfiable execution or topology)")
            continue
        verdict = "pass" if r.passed else "FAIL"
        failed += not r.passed
        print(f"trial {i:3d}: {verdict}  equivalent={r.equivalent} "
              f"sat={r.sat_scattered}->{r.sat_canonical} extends={r.model_extends}")
    print(f"{sc.name}: {trials - failed - vacuous} passed, {failed} failed, "
          f"{vacuous} skipped")
    return 1 if failed else 0


def cmd_corpus_list() -> int:
    for name in corpus_files():
        text = (resources.files("cpsp") / "corpus" / name).read_text()
        sc = parse_scenario(text)
        print(f"corpus/{name:<32} {sc.name}")
    return 0


def cmd_corpus_show(name: str) -> int:
    print(format_scenario(load(f"corpus/{name}")), end="")
    return 0


# --- argument parsing ------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cpsp", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    def solver_flags(p):
        p.add_argument("--backend", choices=("builtin", "smt", "auto"), default="auto")
        p.add_argument("--solver-path", default=None,
                       help="SMT solver executable (default: $CPSP_SOLVER or z3)")

    v = sub.add_parser("verify", help="search a scenario for an attack")
    v.add_argument("scenario", help="scenario file, or corpus/NAME")
    v.add_argument("--name", default=None, help="scenario block to run")
    solver_flags(v)
    v.add_argument("--max-depth", type=int, default=64)
    v.add_argument("--max-states", type=int, default=100_000)
    v.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: $CPSP_WORKERS or 1)")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--emit", choices=("none", "json", "dot", "both"), default="none")
    v.add_argument("--out", default=".", help="directory for emitted traces")

    e = sub.add_parser("export", help="render a trace JSON file")
    e.add_argument("trace")
    e.add_argument("--format", default="dot", choices=("dot",))
    e.add_argument("--out", default=None, help="output file (default: stdout)")

    c = sub.add_parser("check-completeness",
                       help="move scattered intruders next to participants and compare")
    c.add_argument("scenario")
    c.add_argument("--name", default=None)
    c.add_argument("--trials", type=int, default=50)
    c.add_argument("--seed", type=int, default=0)
    solver_flags(c)

    k = sub.add_parser("corpus", help="bundled example scenarios")
    ksub = k.add_subparsers(dest="corpus_cmd", required=True)
    ksub.add_parser("list")
    show = ksub.add_parser("show")
    show.add_argument("name")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        match args.cmd:
            case "verify":
                return cmd_verify(run_config(args))
            case "export":
                return cmd_export(args.trace, args.format, args.out)
            case "check-completeness":
                solver = args.solver_path or os.environ.get("CPSP_SOLVER")
                backend, solver = resolve_backend(args.backend, solver)
                return cmd_check_completeness(args.scenario, args.name, args.trials,
                                              args.seed, backend, solver)
            case "corpus":
                if args.corpus_cmd == "list":
                    return cmd_corpus_list()
                return cmd_corpus_show(args.name)
    except (CliError, ParseError, UnknownRole, DuplicateAgent, SchemaMismatch,
            SolverUnavailable, MalformedSolverReply, NonCompliantBundle, LimitExceeded, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
