"""Generate the synthetic replay logs shipped in this directory.

The logs are synthetic.  Bids cluster on a few round amounts (mass points),
so sweeping a reserve over them moves revenue and impressions in steps.
Run from the repository root: ``python data/make_synthetic_logs.py``.
"""
import csv
from pathlib import Path

import numpy as np

MASS_POINTS = np.array([0.25, 0.5, 1.0, 2.0])


def make_log(path, n_auctions, bidders_range, seed):
    rng = np.random.default_rng(seed)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["auction_id", "bidder_id", "bid", "weight"])
        for a in range(n_auctions):
            k = rng.integers(*bidders_range, endpoint=True)
            ids = rng.choice(40, size=k, replace=False)
            for i in ids:
                if rng.random() < 0.6:
                    bid = float(rng.choice(MASS_POINTS))
                else:
                    bid = float(np.round(rng.lognormal(-0.3, 0.6), 2))
                weight = float(np.round(rng.uniform(0.2, 1.0), 3))
                w.writerow([f"a{a:05d}", f"adv{i:02d}", bid, weight])


if __name__ == "__main__":
    here = Path(__file__).parent
    make_log(here / "replay_thin.csv", 2000, (1, 3), seed=11)
    make_log(here / "replay_thick.csv", 2000, (6, 12), seed=12)
