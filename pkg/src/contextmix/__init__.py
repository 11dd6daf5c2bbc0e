"""ContextMix: resize-and-paste image mixing, its ablation family, and a desk-scale harness."""

from .imagecore import ResizeSpec, gaussian_blur, morphology, resize, unsharp
from .mixers import (
    FilterSpec,
    MixOutcome,
    MixPolicy,
    contextmix,
    contextmix_general,
    cutmix,
    cutout,
    mix_batch,
    mix_labels,
    mixup,
    one_hot,
)
from .sampling import CropBox, RngStream, sample_cropbox, sample_lambda, simulate_area_distribution

__version__ = "0.1.0"
