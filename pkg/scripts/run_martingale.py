"""Train on martingale windows and compare the learned schedule with TWAP."""

import argparse

import numpy as np

from execq.experiments import (SyntheticSetup, delta_pnl_summary, grid_for, monotone_fraction,
                               run_synthetic, terminal_liquidation_fraction, twap_deviation)
from execq.evaluation import twap_schedule


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--episodes", type=int, default=SyntheticSetup.episodes)
    args = ap.parse_args()

    setup = SyntheticSetup(model="martingale", episodes=args.episodes)
    print("TWAP schedule:", twap_schedule(setup.q0, setup.periods))
    for seed in args.seeds:
        run = run_synthetic(setup, seed)
        stats = delta_pnl_summary(run)
        grid = grid_for(run.agent)
        print(f"seed {seed}: mean actions {np.round(run.actions.mean(axis=0), 2)}, "
              f"MAD {twap_deviation(run.actions, setup.q0, setup.periods):.3f}, "
              f"dP&L mean {stats.mean:.3g} bps (std {stats.std:.3g}, n {stats.n}), "
              f"monotone {monotone_fraction(grid):.1%}, "
              f"terminal liquidation {terminal_liquidation_fraction(grid):.0%}")


if __name__ == "__main__":
    main()
