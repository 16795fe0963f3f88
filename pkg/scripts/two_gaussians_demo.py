"""End-to-end CLI run on two 2-D Gaussian classes: nas, then report.

    python scripts/two_gaussians_demo.py --out runs/demo
"""

import argparse
import json
from pathlib import Path

import numpy as np

from cascademl.cli import main as cli
from cascademl.datatools import write_csv


def sample(n, separation, rng):
    y = np.arange(n) % 2
    return y[:, None] * separation + rng.normal(size=(n, 2)), y


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/two_gaussians")
    ap.add_argument("--separation", type=float, default=3.0)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    names = np.array(["neg", "pos"])
    for split, n in (("train", 400), ("val", 100)):
        X, y = sample(n, args.separation, rng)
        write_csv(out / f"{split}.csv", X, ["x0", "x1"], names[y], "label")

    config = {
        "schema_version": 1,
        "seed": args.seed,
        "search": {"layers": 2, "pca_variance": [0.99, 0.95], "activation": "tanh"},
        "train": {"epochs": 40, "learn_rate": 0.01, "es_patience": 8},
    }
    (out / "config.json").write_text(json.dumps(config, indent=1))
    cli(["nas", "--train", str(out / "train.csv"), "--val", str(out / "val.csv"), "--label", "label",
         "--config", str(out / "config.json"), "--out-model", str(out / "model.cmnet"),
         "--report-dir", str(out / "nas")])
    cli(["report", "--model", str(out / "model.cmnet"), "--data", str(out / "val.csv"), "--label", "label",
         "--out-dir", str(out / "report"), "--history", str(out / "nas" / "history.json")])


if __name__ == "__main__":
    main()
