"""Learned first-period trade size under downward and upward drift."""

import argparse

import numpy as np

from execq.evaluation import twap_schedule
from execq.experiments import SyntheticSetup, run_synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--mu", type=float, default=5e-4, help="absolute per-second drift")
    ap.add_argument("--episodes", type=int, default=600)
    args = ap.parse_args()

    setup = SyntheticSetup()
    print("TWAP schedule:", twap_schedule(setup.q0, setup.periods))
    for mu in (-args.mu, args.mu):
        firsts = []
        for seed in range(args.seeds):
            run = run_synthetic(SyntheticSetup(model="drift", mu=mu, episodes=args.episodes), seed)
            firsts.append(run.actions[:, 0].mean())
            print(f"mu={mu:+g} seed {seed}: mean actions {np.round(run.actions.mean(axis=0), 2)}")
        print(f"mu={mu:+g}: mean first-period action {np.mean(firsts):.2f}")


if __name__ == "__main__":
    main()
