"""Expert, trained agent and baselines on the bundled 300-chunk scenario.

Writes one row per policy to stdout and, with --csv, to a file.
"""

import argparse
import csv
import time

from vastream.experiment import (
    agent_metrics,
    demo_train_config,
    expert_metrics,
    fixed_metrics,
    profiling_metrics,
    train_on_scenario,
)
from vastream.scenarios import load_demo


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv")
    args = ap.parse_args()

    sc = load_demo()
    rows = {
        "expert": expert_metrics(sc),
        "profiling": profiling_metrics(sc),
        "fixed-golden": fixed_metrics(sc, 0),
        "fixed-cheapest": fixed_metrics(sc, len(sc.space) - 1),
    }
    t0 = time.perf_counter()
    snap, _ = train_on_scenario(sc, demo_train_config(epochs=args.epochs, seed=args.seed))
    rows["agent"] = agent_metrics(sc, snap)
    print(f"agent trained in {time.perf_counter() - t0:.0f} s (kept epoch {snap.epoch})")

    table = [(name, m.mean_accuracy, m.mean_lag, float(m.lags.max())) for name, m in rows.items()]
    print(f"{'policy':<15} {'accuracy':>9} {'mean lag':>9} {'max lag':>9}")
    for name, acc, lag, mx in table:
        print(f"{name:<15} {acc:9.3f} {lag:9.2f} {mx:9.2f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["policy", "mean_accuracy", "mean_lag", "max_lag"])
            w.writerows(table)


if __name__ == "__main__":
    main()
