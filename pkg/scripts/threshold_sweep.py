"""Stage-1 width versus variance threshold on data with a known number of latent directions.

    python scripts/threshold_sweep.py --latent 5 --dim 50
"""

import argparse

import numpy as np

from cascademl.numerics import fit_pca, n_components_for_variance
from cascademl.pccdnas import data_init


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--samples", type=int, default=500)
    ap.add_argument("--dim", type=int, default=50)
    ap.add_argument("--latent", type=int, default=5)
    ap.add_argument("--noise", type=float, default=1e-6)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    basis, _ = np.linalg.qr(rng.normal(size=(args.dim, args.latent)))
    X = rng.normal(size=(args.samples, args.latent)) @ basis.T
    X += args.noise * rng.normal(size=X.shape)
    prepared = data_init(X, np.zeros(args.samples)).X_train
    model = fit_pca(prepared)

    print("threshold\twidth")
    for t in (0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 1.0):
        print(f"{t}\t{n_components_for_variance(model, t)}")


if __name__ == "__main__":
    main()
