"""Clean validation accuracy when the pasted side is blurred during training.

    python3 scripts/blur_robustness.py --sigmas 0,1,2,4 --seeds 1,2,3 [--target resized|occluded]
"""

import argparse

from contextmix.experiments import BLUR_SETUP, blur_protocol, build_dataset, degradation, is_non_increasing


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sigmas", default="0,1,2,4")
    ap.add_argument("--seeds", default="1,2,3")
    ap.add_argument("--target", choices=("resized", "occluded"), default="resized")
    args = ap.parse_args()

    sigmas = [float(s) for s in args.sigmas.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    data = build_dataset(BLUR_SETUP)
    table = blur_protocol(data, BLUR_SETUP, sigmas, seeds, target=args.target)
    print("kind\tsigma\t" + "\t".join(f"seed{s}" for s in seeds))
    for (kind, sigma), accs in table.items():
        print(f"{kind}\t{sigma:g}\t" + "\t".join(f"{a:.4f}" for a in accs))
    for kind in ("cutmix", "contextmix"):
        drops = [degradation(table, kind, sigmas, i) for i in range(len(seeds))]
        mono = sum(is_non_increasing([table[(kind, s)][i] for s in sigmas]) for i in range(len(seeds)))
        print(f"{kind}: drop sigma {sigmas[0]:g}->{sigmas[-1]:g} per seed {[round(d, 4) for d in drops]}, "
              f"monotone in {mono}/{len(seeds)} seeds")


if __name__ == "__main__":
    main()
