"""Imitation reward against the hand-written accuracy/lag reward, several seeds."""

import argparse

from vastream.experiment import agent_metrics, demo_train_config, train_on_scenario
from vastream.scenarios import load_demo


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=300)
    args = ap.parse_args()

    sc = load_demo()
    demos = None
    wins = 0
    for seed in args.seeds:
        res = {}
        for reward in ("gail", "fixed"):
            cfg = demo_train_config(epochs=args.epochs, seed=seed, reward=reward)
            snap, d = train_on_scenario(sc, cfg, demos=demos if reward == "gail" else None)
            if reward == "gail":
                demos = d
            res[reward] = agent_metrics(sc, snap)
        g, f = res["gail"], res["fixed"]
        dom = g.mean_accuracy >= f.mean_accuracy and g.mean_lag <= f.mean_lag
        wins += dom
        print(f"seed {seed}: gail {g.mean_accuracy:.3f}/{g.mean_lag:.2f}  "
              f"fixed {f.mean_accuracy:.3f}/{f.mean_lag:.2f}  {'dominates' if dom else '-'}")
    print(f"gail dominates in {wins}/{len(args.seeds)} seeds")


if __name__ == "__main__":
    main()
