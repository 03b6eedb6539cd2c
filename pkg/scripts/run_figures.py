#!/usr/bin/env python
"""Run the figure configs (variational run plus exact oracle) and aggregate plot data.

    python scripts/run_figures.py --out results            # everything
    python scripts/run_figures.py --out results fig2a fig3b  # selected figures
"""
from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

from lindblad_vqa.experiments import load_config, plot_data, run, run_oracle

CONFIGS = Path(__file__).parent / "configs"


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("figures", nargs="*", help="figure prefixes to run, e.g. fig2a (default: all)")
    p.add_argument("--out", default="results")
    p.add_argument("--no-oracle", action="store_true", help="skip the exact reference trajectories")
    args = p.parse_args(argv)

    paths = sorted(CONFIGS.glob("*.json"))
    if args.figures:
        paths = [q for q in paths if any(q.stem.startswith(f) for f in args.figures)]
    for path in paths:
        cfg = load_config(path)
        cfg.outputs.directory = args.out
        t0 = time.perf_counter()
        traj = run(cfg)
        if not args.no_oracle:
            run_oracle(cfg)
        last = traj.records[-1]
        print(json.dumps({"config": path.stem, "seconds": round(time.perf_counter() - t0, 1),
                          "t_final": last.t, "metrics": last.metrics}))
    panels = plot_data(args.out)
    print(f"wrote {Path(args.out) / 'plot_data.json'} with {len(panels)} panels")


if __name__ == "__main__":
    main()
