"""Text histogram of crop-box area fractions before and after clipping."""

import argparse

import numpy as np

from contextmix.sampling import RngStream, simulate_area_distribution


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=224)
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--samples", type=int, default=200_000)
    ap.add_argument("--bins", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    hist = simulate_area_distribution(args.size, args.size, args.alpha, args.samples, RngStream(args.seed, 0), keep_samples=True)
    edges = np.linspace(0.0, 1.0, args.bins + 1)
    pre, _ = np.histogram(hist.pre_clip_fractions, edges)
    post, _ = np.histogram(hist.post_clip_fractions, edges)
    width = 50 / max(pre.max(), post.max())
    for lo, hi, a, b in zip(edges, edges[1:], pre, post):
        print(f"[{lo:.2f},{hi:.2f})  pre {'#' * int(a * width):<50s} post {'#' * int(b * width)}")
    print(f"mean pre={hist.pre_clip_fractions.mean():.4f} post={hist.post_clip_fractions.mean():.4f}")


if __name__ == "__main__":
    main()
