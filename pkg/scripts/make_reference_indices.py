#!/usr/bin/env python3
"""Freeze the pick-and-freeze reference Sobol' indices for the closed-form model.

Runs a large Saltelli/Jansen estimate of the first-order and total indices
of xi -> P(tau_bar) over the +-10% hyper-parameter box, using the exact
probability (no subset simulation), and writes the result to
tests/data/reference_total_indices.json.  The test suite treats that file
as a frozen oracle; rerun this script only to regenerate it deliberately.

Usage: python scripts/make_reference_indices.py [--n-base 1000000] [--seed 2024]
"""

import argparse
import json
from pathlib import Path

import numpy as np

from tailsense import analytic
from tailsense.mc import saltelli_sobol
from tailsense.sampling import RandomStream

ROOT = Path(__file__).resolve().parent.parent


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n-base", type=int, default=1_000_000)
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--tau", type=float, default=3.0)
    parser.add_argument("--perturbation", type=float, default=0.10)
    parser.add_argument("--out", default=str(ROOT / "tests" / "data" / "reference_total_indices.json"))
    args = parser.parse_args()

    hyper = analytic.nominal_hyper()
    box = analytic.hyper_box(hyper, args.perturbation)

    def p_of_xi(xi: np.ndarray) -> np.ndarray:
        return analytic.probability_from_xi(xi, args.tau)

    report = saltelli_sobol(p_of_xi, box, args.n_base, RandomStream(args.seed))
    labels = [f"mu_{i}" for i in range(1, hyper.d + 1)] + \
             [f"var_{i}" for i in range(1, hyper.d + 1)]
    record = {
        "model": "analytic",
        "tau_bar": args.tau,
        "perturbation": args.perturbation,
        "n_base": args.n_base,
        "seed": args.seed,
        "n_evals": report.n_evals,
        "labels": labels,
        "first_order": report.first_order.tolist(),
        "total": report.total.tolist(),
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(record, indent=1) + "\n")
    order = np.argsort(report.total)[::-1]
    print(f"wrote {out}")
    for i in order:
        print(f"  T_{labels[i]:<6} = {report.total[i]:.6f}   (S = {report.first_order[i]:.6f})")


if __name__ == "__main__":
    main()
