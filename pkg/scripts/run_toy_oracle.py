"""Train on the two-level toy market and compare with tabular Q-learning and exact DP.

The reference implementations live in ``tests/oracles.py``; run from the
repository root.
"""

import argparse
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from execq.agent import select_greedy
from execq.experiments import ToySetup, train_toy_agent
from execq.features import assemble_inputs
from execq.nn import forward
from execq.replay import NextTag

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from oracles import TabularQ, two_level_dp  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--episodes", type=int, default=15_000)
    args = ap.parse_args()

    s = ToySetup()
    n, q0 = s.periods, s.q0
    agent = train_toy_agent(s, args.seed, args.episodes)

    def k_of(t):
        return int(round((t + 1) * (n - 1) / 2))

    stream = []
    for tr in agent.replay.items():
        done = tr.tag == NextTag.TERMINAL or tr.next_q == 0
        nxt = (0, 0, 0) if done else (k_of(tr.next_state[0]), tr.next_q, int(tr.next_state[1] > 0))
        stream.append((k_of(tr.state[0]), tr.q, int(tr.state[1] > 0), tr.action, tr.reward,
                       *nxt, done))
    oracle = TabularQ(n - 1, s.gamma).fit(stream)
    visits = Counter(e[:4] for e in stream)
    exact, _ = two_level_dp(s.delta, s.switch, s.penalty_a, s.gamma, n, s.seconds_per_period,
                            q0, s.mid)

    print(" k q lvl  ddqn oracle dp   Q(ddqn) | Q(oracle) | Q(dp) | visits")
    for k in range(n):
        for q in range(1, q0 + 1):
            if k == 0 and q != q0:
                continue
            for j in (0, 1):
                acts = oracle.actions(k, q)
                feats = (2.0 * k / (n - 1) - 1.0, 2.0 * j - 1.0, 0.0)
                qn = forward(agent.main, assemble_inputs(*feats, q, acts, q0, "TIP"))
                qo = [oracle.Q[(k, q, j, x)] for x in acts]
                qd = [exact[(k, q, j, x)] for x in acts]
                print(f"{k:2d}{q:2d}{j:4d}  {select_greedy(agent.main, feats, q, acts, q0, 'TIP'):4d}"
                      f"{oracle.greedy(k, q, j):6d}{acts[int(np.argmax(qd))]:4d}   "
                      f"{np.round(qn, 2)} | {np.round(qo, 2)} | {np.round(qd, 2)} | "
                      f"{[visits[(k, q, j, x)] for x in acts]}")


if __name__ == "__main__":
    main()
