#!/usr/bin/env python3
"""Reproduce the negative-index slab experiment (k = 2 pi^2, Gaussian beam).

Pass --dump-fields to write the solutions in the grid text format for
plotting the negative-refraction pattern.
"""

import argparse

from signms import app


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results/nim_slab")
    parser.add_argument("--n-coarse", default="[20,40,80]")
    parser.add_argument("--m", default="[1,2,3,4]")
    parser.add_argument("--dump-fields", action="store_true")
    parser.add_argument("--parallel", action="store_true")
    args = parser.parse_args()

    config, provenance = app.parse_config(None, {
        "experiment": "nim_slab",
        "n_coarse": args.n_coarse,
        "m": args.m,
        "output_dir": args.out,
        "dump_fields": "true" if args.dump_fields else "false",
    })
    reports = app.run_experiment(config, provenance, parallel=args.parallel)
    for r in reports:
        status = f"FAILED ({r.error})" if r.error else (
            f"energy {r.energy_rel:.3e} l2 {r.l2_rel:.3e}"
        )
        print(f"H=1/{r.n_coarse} m={r.m}: {status}")
    print(f"tables written to {args.out}")


if __name__ == "__main__":
    main()
