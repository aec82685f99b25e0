"""Train on the 4-configuration toy scenario and compare with the expert on the held-out shift."""

import argparse
import time

from vastream.experiment import run_toy, toy_train_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--verbose", action="store_true")
    args = ap.parse_args()
    t0 = time.perf_counter()
    run = run_toy(toy_train_config(epochs=args.epochs, seed=args.seed), verbose=args.verbose)
    e, a = run["expert"], run["agent"]
    print(f"trained in {time.perf_counter() - t0:.0f} s, kept epoch {run['snapshot'].epoch}")
    print(f"expert  acc {e.mean_accuracy:.3f}  lag {e.mean_lag:.3f} s")
    print(f"agent   acc {a.mean_accuracy:.3f}  lag {a.mean_lag:.3f} s")


if __name__ == "__main__":
    main()
