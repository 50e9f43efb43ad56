"""Run one preset experiment and print the final regret of each policy.

Thin wrapper over the library for quick interactive use:

    python3 scripts/run_preset.py --shape d20-k20 --dist laplace --T 1000
"""

import argparse
import time

from greedybandit.harness import (PRESET_DISTS, PRESET_SHAPES, preset_config,
                                  run_experiment, write_outputs)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--shape", choices=sorted(PRESET_SHAPES), default="d20-k20")
    ap.add_argument("--dist", choices=PRESET_DISTS, default="gaussian")
    ap.add_argument("--T", type=int, default=1000)
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--sigma", type=float, default=0.5)
    ap.add_argument("--out", default=None)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--diagnostics", action="store_true")
    args = ap.parse_args()

    out = args.out or f"out/{args.shape}-{args.dist}"
    cfg = preset_config(args.shape, args.dist, T=args.T, reps=args.reps,
                        seed=args.seed, sigma=args.sigma, output_dir=out,
                        diagnostics=args.diagnostics, jobs=args.jobs)
    t0 = time.time()
    table = run_experiment(cfg)
    paths = write_outputs(table)
    print(f"{args.shape} / {args.dist}: T={args.T}, reps={args.reps}, "
          f"{time.time() - t0:.1f}s")
    for name in table.policy_names:
        M = table.cum_regret_matrix(name)
        print(f"  {name:8s} final regret {M[:, -1].mean():8.2f} "
              f"(std {M[:, -1].std(ddof=1) if cfg.reps > 1 else 0.0:.2f})")
    for label, p in paths.items():
        print(f"  {label}: {p}")


if __name__ == "__main__":
    main()
