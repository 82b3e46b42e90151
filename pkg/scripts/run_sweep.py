"""Run an eps-sweep and print the per-eps table and verdicts."""
import argparse
import logging
from pathlib import Path

from lc_homog.config import load_config, validate
from lc_homog.harness import run_sweep
from lc_homog.io import REPORT_COLUMNS, write_report


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="sweep JSON config (defaults when omitted)")
    ap.add_argument("--out", default="sweep_out")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    rec = load_config(args.config, "sweep") if args.config else validate({}, "sweep")
    report = run_sweep(rec.sweep_config(args.threads))
    write_report(report, Path(args.out))
    print("  ".join(f"{c:>12.12}" for c in REPORT_COLUMNS))
    for r in report.records:
        print("  ".join(f"{r[c]:>12.5g}" for c in REPORT_COLUMNS))
    for k, v in report.verdicts.items():
        print(f"{k:<28} {v}")
    print(f"runtime {report.runtime:.0f}s")


if __name__ == "__main__":
    main()
