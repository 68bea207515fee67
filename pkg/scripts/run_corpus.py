"""Search every bundled scenario and print a verdict table."""

import argparse

from cpsp.cli import corpus_files, load, resolve_backend
from cpsp.search import SearchConfig, search

VERDICT = {0: "attack", 1: "safe", 2: "inconclusive"}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--backend", choices=("builtin", "smt", "auto"), default="auto")
    ap.add_argument("--no-prune", action="store_true", help="skip satisfiability pruning")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    backend, solver = resolve_backend(args.backend, None)
    cfg = SearchConfig(backend=backend, solver_path=solver, prune=not args.no_prune,
                       workers=args.workers)
    print(f"{'scenario':<28} {'verdict':<13} {'states':>7} {'solver':>7} {'smt':>5} {'ms':>9}")
    for name in corpus_files():
        sc = load(f"corpus/{name}")
        out = search(sc, cfg)
        st = out.stats
        print(f"{name.removesuffix('.cpsp'):<28} {VERDICT[out.exit_code]:<13} "
              f"{st.states:>7} {st.solver_calls:>7} {st.smt_calls:>5} {st.wall_ms:>9.1f}")


if __name__ == "__main__":
    main()
