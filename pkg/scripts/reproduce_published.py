"""Full-scale reproduction check. Not part of the test suite: it needs the real
image collection, pretrained weights and several CPU/GPU hours.

    python3 scripts/reproduce_published.py configs/full_scale.yaml --root /data/marrow
"""

import argparse
import sys

from marrowcell.config import load_run_config
from marrowcell.pipeline import run_training
from marrowcell.reporting import PUBLISHED_RESULTS, render_report

TOLERANCE = 0.015  # absolute, on validation accuracy


def main(argv=None) -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("config")
    parser.add_argument("--root", help="override dataset.root")
    parser.add_argument("--run-dir")
    args = parser.parse_args(argv)

    cfg = load_run_config(args.config)
    if args.root:
        cfg = cfg.model_copy(update={"dataset": cfg.dataset.model_copy(update={"root": args.root})})
    result = run_training(cfg, args.run_dir)

    print(render_report(result.reports), end="")
    print("published:")
    print(render_report(PUBLISHED_RESULTS), end="")
    got = result.reports[-1].accuracy
    want = PUBLISHED_RESULTS[-1].accuracy
    ok = abs(got - want) <= TOLERANCE
    print(f"{'PASS' if ok else 'FAIL'}  validation accuracy {got:.4f} vs {want:.4f} (tol {TOLERANCE})")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
