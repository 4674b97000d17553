"""desk_scale_ring.py

Train every hypersphere loss on the synthetic Gaussian ring and tabulate
AUC / G-mean per loss and seed.

Targets are standard-normal points in the plane, outliers sit on a ring of
radius 5. Each seed draws a fresh ring, splits it 50/50, normalises with the
training targets and trains one model per loss kind.

Outputs
-------
* TSV with one row per (loss, seed): auc, gmean, threshold, final_loss.

Example
-------
python desk_scale_ring.py \
    --seeds 0 1 2 \
    --losses lbl lblsig mse-ocl \
    --output ring_scores.tsv
"""

from __future__ import annotations
import argparse
from pathlib import Path
import pandas as pd
from tqdm import tqdm

from occ_barrier.config import LossConfig, LossKind, TrainConfig
from occ_barrier.data import make_occ_split, normalize, synth_gaussian_ring
from occ_barrier.trainer import evaluate, train


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        description="Compare one-class losses on the synthetic Gaussian ring."
    )
    parser.add_argument(
        "--seeds", nargs="+", type=int, default=[0, 1, 2], help="Dataset / training seeds"
    )
    parser.add_argument(
        "--losses",
        nargs="+",
        default=["lbl", "lblsig", "mse-ocl", "sbl", "hrn"],
        choices=[k.value for k in LossKind],
        help="Loss kinds to train",
    )
    parser.add_argument("--n", type=int, default=500, help="Targets and outliers per ring")
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument(
        "--output",
        default="ring_scores.tsv",
        type=Path,
        help="Output TSV with one row per loss and seed.",
    )
    return parser.parse_args()


def run_one(kind: str, seed: int, n: int, epochs: int) -> dict:
    split = normalize(
        make_occ_split(synth_gaussian_ring(seed, n, n), "0", train_fraction=0.5, seed=seed)
    )
    cfg = TrainConfig(epochs=epochs, seed=seed, loss=LossConfig(kind=kind))
    model = train(split, cfg)
    report = evaluate(model, split)
    return {
        "loss": kind,
        "seed": seed,
        "auc": report.auc,
        "gmean": report.gmean,
        "threshold": report.threshold,
        "final_loss": model.loss_history[-1],
    }


def main() -> None:
    args = parse_args()
    jobs = [(kind, seed) for kind in args.losses for seed in args.seeds]
    rows = [run_one(kind, seed, args.n, args.epochs) for kind, seed in tqdm(jobs)]

    df = pd.DataFrame(rows)
    df.to_csv(args.output, sep="\t", index=False)
    summary = df.groupby("loss")[["auc", "gmean"]].agg(["mean", "std"])
    print(summary.to_string())
    print(f"Saved scores to {args.output.absolute()} (N = {len(df)} runs)")


if __name__ == "__main__":
    main()
