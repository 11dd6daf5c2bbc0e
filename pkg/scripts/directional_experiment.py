"""Baseline vs ContextMix macro F1 on the synthetic long-tailed set.

    python3 scripts/directional_experiment.py --seeds 1,2,3 [--policies none,cutmix,contextmix]
"""

import argparse
import time

import numpy as np

from contextmix.experiments import DeskSetup, build_dataset, directional_experiment, pooled_std
from contextmix.mixers import MixPolicy


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", default="1,2,3")
    ap.add_argument("--policies", default="none,contextmix")
    ap.add_argument("--epochs", type=int, default=DeskSetup.epochs)
    args = ap.parse_args()

    seeds = [int(s) for s in args.seeds.split(",")]
    setup = DeskSetup(epochs=args.epochs, lr_decay_epochs=(int(args.epochs * 0.75),))
    start = time.perf_counter()
    data = build_dataset(setup)
    print(f"classes={setup.n_classes} images={sum(data.counts)} mean_ir={data.mean_ir:.2f} counts={data.counts}")
    policies = {name: MixPolicy(name) for name in args.policies.split(",")}
    f1 = directional_experiment(data, setup, seeds, policies)
    for name, values in f1.items():
        print(f"{name:12s} mean={np.mean(values):.4f} per_seed={[round(v, 4) for v in values]}")
    if "none" in f1:
        for name, values in f1.items():
            if name != "none":
                sd = pooled_std(f1["none"], values)
                print(f"{name} - none = {np.mean(values) - np.mean(f1['none']):+.4f} (pooled sd {sd:.4f})")
    print(f"elapsed {time.perf_counter() - start:.0f}s")


if __name__ == "__main__":
    main()
