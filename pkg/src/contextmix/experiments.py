"""Desk-scale experiment harness shared by the scripts and the acceptance suite.

Builds the synthetic long-tailed dataset on disk, trains the small classifiers
under different mixing policies and collects final validation metrics.
"""

from __future__ import annotations

import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import dataio
from .metrics import mean_ir
from .mixers import FilterSpec, MixPolicy
from .trainer import EpochLog, TrainConfig, train_arrays

Arrays = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class DeskSetup:
    n_classes: int = 10
    total: int = 5000
    target_mean_ir: float = 12.0
    image_size: int = 32
    data_seed: int = 7
    valid_fraction: float = 0.2
    epochs: int = 40
    batch_size: int = 64
    lr: float = 0.05
    lr_decay_epochs: Tuple[int, ...] = (30,)
    hidden: int = 64

    def counts(self) -> List[int]:
        return dataio.long_tailed_counts(self.n_classes, self.total, self.target_mean_ir)

    def config(self, policy: MixPolicy, seed: int) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            lr_decay_epochs=self.lr_decay_epochs,
            policy=policy,
            seed=seed,
            arch="mlp",
            hidden=self.hidden,
        )


# smaller grid for protocols that need many runs
BLUR_SETUP = DeskSetup(total=2000, image_size=16, epochs=20, lr_decay_epochs=(15,))


@dataclass
class DeskData:
    train: Arrays
    valid: Arrays
    counts: List[int]

    @property
    def mean_ir(self) -> float:
        return mean_ir(self.counts)


def build_dataset(setup: DeskSetup, out_dir: Optional[Path] = None) -> DeskData:
    """Render the dataset to PPM files, split it, and load both halves back."""
    if out_dir is None:
        with tempfile.TemporaryDirectory() as tmp:
            return build_dataset(setup, Path(tmp))
    counts = setup.counts()
    spec = dataio.SynthSpec(counts, image_size=setup.image_size, seed=setup.data_seed)
    manifest = dataio.generate_synthetic(spec, out_dir)
    train_m, valid_m = dataio.split_manifest(manifest, setup.valid_fraction, setup.data_seed)
    return DeskData(train_m.load_arrays(), valid_m.load_arrays(), counts)


def run(data: DeskData, setup: DeskSetup, policy: MixPolicy, seed: int) -> List[EpochLog]:
    x, y = data.train
    _, log = train_arrays(x, y, setup.config(policy, seed), setup.n_classes, data.valid)
    return log


def pooled_std(a: Sequence[float], b: Sequence[float]) -> float:
    """sqrt of the mean of the two sample variances (ddof 1)."""
    return float(np.sqrt((np.var(a, ddof=1) + np.var(b, ddof=1)) / 2.0))


def directional_experiment(
    data: DeskData, setup: DeskSetup, seeds: Sequence[int], policies: Dict[str, MixPolicy]
) -> Dict[str, List[float]]:
    """Final validation macro F1 per policy and seed."""
    return {name: [run(data, setup, pol, s)[-1].macro_f1 for s in seeds] for name, pol in policies.items()}


def blur_protocol(
    data: DeskData,
    setup: DeskSetup,
    sigmas: Sequence[float],
    seeds: Sequence[int],
    kinds: Sequence[str] = ("cutmix", "contextmix"),
    target: str = "resized",
) -> Dict[Tuple[str, float], List[float]]:
    """Clean validation accuracy when training with blur on one side of the paste."""
    table = {}
    for kind in kinds:
        for sigma in sigmas:
            policy = MixPolicy(kind, filter=FilterSpec("blur", target=target, sigma=sigma))
            table[(kind, sigma)] = [1.0 - run(data, setup, policy, s)[-1].top1_error for s in seeds]
    return table


def traces_identical(data: DeskData, setup: DeskSetup, a: MixPolicy, b: MixPolicy, seed: int) -> bool:
    """True if two policies give byte-identical training logs and weights."""
    x, y = data.train
    pa, la = train_arrays(x, y, setup.config(a, seed), setup.n_classes, data.valid)
    pb, lb = train_arrays(x, y, setup.config(b, seed), setup.n_classes, data.valid)
    same_weights = all(pa.weights[k].tobytes() == pb.weights[k].tobytes() for k in pa.weights)
    return same_weights and [e.line() for e in la] == [e.line() for e in lb]


def degradation(table: Dict[Tuple[str, float], List[float]], kind: str, sigmas: Sequence[float], seed_index: int) -> float:
    """Accuracy lost between the smallest and largest sigma for one seed."""
    return table[(kind, sigmas[0])][seed_index] - table[(kind, sigmas[-1])][seed_index]


def is_non_increasing(values: Sequence[float], slack: float = 0.0) -> bool:
    return all(b <= a + slack for a, b in zip(values, values[1:]))

