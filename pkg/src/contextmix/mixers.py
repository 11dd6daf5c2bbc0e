"""Image and label mixing policies.

ContextMix pastes the *whole* partner image, resized to the cut box, into the
occluded image. The generalised mixer resizes the partner to an arbitrary
area ratio ``epsilon_b`` first and crops a box-sized window out of it, which
spans CutMix (``epsilon_b = 1``) through ContextMix (``epsilon_b = w*h/(W*H)``).

Label weights follow the resize-ratio algebra::

    y = lambda_a * y_a + lambda_b * epsilon_b * y_b
    lambda_a  = 1 - w*h / (W*H)
    lambda_b  = w*h / (W'*H')
    epsilon_b = W'*H' / (W*H)

so ``lambda_a + lambda_b * epsilon_b == 1`` for every resize target.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .imagecore import ImageBuffer, ResizeSpec, gaussian_blur, morphology, resize, unsharp
from .sampling import CropBox, RngStream, cut_size, place_box, round_half_away, sample_cropbox, sample_lambda

LabelVector = np.ndarray
ImageFn = Callable[[ImageBuffer], ImageBuffer]

DEFAULT_SEED = 20231117

KINDS = ("none", "contextmix", "cutmix", "mixup", "cutout", "contextmix_variant")
VARIANTS = (
    "center_gaussian",
    "fixed_size",
    "one_hot",
    "complete_label",
    "scheduled_up",
    "scheduled_down",
    "square_region",
    "fixed_region",
)
FILTERS = ("unsharp", "erode", "dilate", "open", "close", "blur")
LABEL_SUM_TOL = 1e-9


def one_hot(index: int, n_classes: int) -> LabelVector:
    y = np.zeros(n_classes)
    y[index] = 1.0
    return y


@dataclass(frozen=True)
class FilterSpec:
    """An image filter applied to one side of a mix before pasting.

    ``target="occluded"`` filters the image that receives the paste;
    ``target="resized"`` filters the pasted patch.
    """

    name: str
    target: str = "resized"
    sigma: float = 1.0
    amount: float = 1.0
    radius: int = 1

    def __post_init__(self):
        if self.name not in FILTERS:
            raise ValueError(f"unknown filter {self.name!r}; expected one of {FILTERS}")
        if self.target not in ("occluded", "resized"):
            raise ValueError(f"filter target must be 'occluded' or 'resized', got {self.target!r}")

    def apply(self, img: ImageBuffer) -> ImageBuffer:
        if self.name == "blur":
            return gaussian_blur(img, self.sigma)
        if self.name == "unsharp":
            return unsharp(img, self.sigma, self.amount)
        return morphology(img, self.name, self.radius)


@dataclass(frozen=True)
class MixPolicy:
    """Which mixer to run and how.

    ``epsilon`` switches ContextMix to the generalised resize-ratio mixer
    (``None`` means "fit the box", i.e. plain ContextMix). ``fixed_lambda``
    pins the Beta draw, mostly for tests.
    """

    kind: str = "contextmix"
    alpha: float = 1.0
    variant: Optional[str] = None
    fixed_fraction: float = 0.75
    region_id: int = 5
    epsilon: Optional[float] = None
    filter: Optional[FilterSpec] = None
    per_image_boxes: bool = False
    fixed_lambda: Optional[float] = None
    cutout_fill: float = 0.0
    center_std_ratio: float = 0.25

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {KINDS}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        contextual = self.kind in ("contextmix", "contextmix_variant")
        if self.variant is not None:
            if not contextual:
                raise ValueError(f"variant is only valid for contextmix policies, not {self.kind!r}")
            if self.variant not in VARIANTS:
                raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.kind == "contextmix_variant" and self.variant is None:
            raise ValueError("kind 'contextmix_variant' requires a variant")
        if self.epsilon is not None:
            if not contextual:
                raise ValueError(f"epsilon is only valid for contextmix policies, not {self.kind!r}")
            if not 0 < self.epsilon <= 4:
                raise ValueError(f"epsilon must lie in (0, 4], got {self.epsilon}")
        if self.filter is not None and self.kind not in ("contextmix", "contextmix_variant", "cutmix"):
            raise ValueError(f"filters apply to box-pasting policies only, not {self.kind!r}")
        if self.variant == "fixed_region" and not 1 <= self.region_id <= 5:
            raise ValueError(f"region_id must be in 1..5, got {self.region_id}")
        if self.variant == "fixed_size" and not 0 < self.fixed_fraction < 1:
            raise ValueError(f"fixed_fraction must lie in (0, 1), got {self.fixed_fraction}")
        if self.fixed_lambda is not None and not 0 <= self.fixed_lambda <= 1:
            raise ValueError(f"fixed_lambda must lie in [0, 1], got {self.fixed_lambda}")

    @property
    def is_contextmix(self) -> bool:
        return self.kind in ("contextmix", "contextmix_variant")


@dataclass
class MixOutcome:
    image: ImageBuffer
    label: LabelVector
    box: Optional[CropBox]
    lambda_a: float
    lambda_b: float
    epsilon_b: float
    partner_index: int = -1
    stream_id: Tuple[int, ...] = ()

    @property
    def is_nomix(self) -> bool:
        return self.box is None and self.lambda_a == 1.0


def _check_pair(x_a: ImageBuffer, x_b: ImageBuffer):
    if np.shape(x_a) != np.shape(x_b):
        raise ValueError(f"image shapes differ: {np.shape(x_a)} vs {np.shape(x_b)}")


def _dims(x: ImageBuffer) -> Tuple[int, int]:
    return x.shape[-2], x.shape[-3]


def mix_labels(
    y_a: LabelVector, y_b: LabelVector, lambda_a: float, lambda_b: float, epsilon_b: float
) -> LabelVector:
    """``lambda_a * y_a + lambda_b * epsilon_b * y_b`` with a weight-sum check."""
    if min(lambda_a, lambda_b, epsilon_b) < 0:
        raise ValueError("mixing factors must be non-negative")
    share_b = lambda_b * epsilon_b
    if abs(lambda_a + share_b - 1.0) > LABEL_SUM_TOL:
        raise ValueError(
            f"label weights do not sum to 1: lambda_a={lambda_a} + lambda_b*epsilon_b={share_b}"
        )
    return lambda_a * np.asarray(y_a, dtype=np.float64) + share_b * np.asarray(y_b, dtype=np.float64)


def resize_ratio_terms(W: int, H: int, box: CropBox, epsilon_b: float):
    """Resize target and label factors for pasting at area ratio ``epsilon_b``.

    Returns ``(W', H', lambda_a, lambda_b, epsilon_b)`` where ``epsilon_b`` is
    the realised ratio after rounding ``W'`` and ``H'`` to whole pixels.
    """
    if not 0 < epsilon_b <= 4:
        raise ValueError(f"epsilon_b must lie in (0, 4], got {epsilon_b}")
    scale = math.sqrt(epsilon_b)
    tw, th = round_half_away(W * scale), round_half_away(H * scale)
    if tw < box.w or th < box.h:
        raise ValueError(
            f"epsilon_b={epsilon_b} resizes to {tw}x{th}, smaller than the {box.w}x{box.h} box"
        )
    area = box.w * box.h
    return tw, th, 1.0 - area / (W * H), area / (tw * th), (tw * th) / (W * H)


def fit_epsilon(W: int, H: int, box: CropBox) -> float:
    """Smallest ratio whose resize still covers ``box`` on both axes."""
    s = max(box.w / W, box.h / H)
    return s * s


def _paste(x_a: ImageBuffer, patch: ImageBuffer, box: CropBox) -> ImageBuffer:
    out = np.array(x_a, dtype=np.float64, copy=True)
    rows, cols = box.slices()
    out[..., rows, cols, :] = patch
    return out


def _general_patch(x_b: ImageBuffer, box: CropBox, tw: int, th: int, method: str) -> ImageBuffer:
    # works on single images and (N, H, W, C) stacks alike
    W, H = _dims(x_b)
    resized = resize(x_b, ResizeSpec(tw, th, method))
    if (tw, th) == (box.w, box.h):
        return resized
    ox = round_half_away(box.r_xs * (tw - box.w) / (W - box.w)) if W != box.w else 0
    oy = round_half_away(box.r_ys * (th - box.h) / (H - box.h)) if H != box.h else 0
    return resized[..., oy : oy + box.h, ox : ox + box.w, :]


def _apply(fn: Optional[ImageFn], img: ImageBuffer) -> ImageBuffer:
    return img if fn is None else fn(img)


def contextmix(
    x_a: ImageBuffer,
    x_b: ImageBuffer,
    y_a: LabelVector,
    y_b: LabelVector,
    box: CropBox,
    *,
    method: str = "bilinear",
    patch_filter: Optional[ImageFn] = None,
    base_filter: Optional[ImageFn] = None,
) -> MixOutcome:
    """Resize all of ``x_b`` to the box and paste it into ``x_a``."""
    _check_pair(x_a, x_b)
    W, H = _dims(x_a)
    box.validate(W, H)
    patch = resize(x_b, ResizeSpec(box.w, box.h, method))
    image = _paste(_apply(base_filter, x_a), _apply(patch_filter, patch), box)
    lambda_a = 1.0 - (box.w * box.h) / (W * H)
    epsilon_b = (box.w * box.h) / (W * H)
    label = mix_labels(y_a, y_b, lambda_a, 1.0, epsilon_b)
    return MixOutcome(image, label, box, lambda_a, 1.0, epsilon_b)


def contextmix_general(
    x_a: ImageBuffer,
    x_b: ImageBuffer,
    y_a: LabelVector,
    y_b: LabelVector,
    box: CropBox,
    epsilon_b: float,
    *,
    method: str = "bilinear",
    patch_filter: Optional[ImageFn] = None,
    base_filter: Optional[ImageFn] = None,
) -> MixOutcome:
    """Paste a box-sized window of ``x_b`` resized to area ratio ``epsilon_b``.

    ``x_b`` is resized to ``round(W*s) x round(H*s)`` with ``s = sqrt(epsilon_b)``.
    The window's top-left corner slides with the box position so that at
    ``s = 1`` it coincides with the box (CutMix) and at the fit ratio it is
    the whole resized image (ContextMix).
    """
    _check_pair(x_a, x_b)
    W, H = _dims(x_a)
    box.validate(W, H)
    tw, th, lambda_a, lambda_b, eps = resize_ratio_terms(W, H, box, epsilon_b)
    patch = _general_patch(x_b, box, tw, th, method)
    image = _paste(_apply(base_filter, x_a), _apply(patch_filter, patch), box)
    label = mix_labels(y_a, y_b, lambda_a, lambda_b, eps)
    return MixOutcome(image, label, box, lambda_a, lambda_b, eps)


def cutmix(
    x_a: ImageBuffer,
    x_b: ImageBuffer,
    y_a: LabelVector,
    y_b: LabelVector,
    box: CropBox,
    *,
    patch_filter: Optional[ImageFn] = None,
    base_filter: Optional[ImageFn] = None,
) -> MixOutcome:
    _check_pair(x_a, x_b)
    W, H = _dims(x_a)
    box.validate(W, H)
    rows, cols = box.slices()
    patch = np.asarray(x_b, dtype=np.float64)[..., rows, cols, :]
    image = _paste(_apply(base_filter, x_a), _apply(patch_filter, patch), box)
    lambda_a = 1.0 - (box.w * box.h) / (W * H)
    lambda_b = (box.w * box.h) / (W * H)
    label = mix_labels(y_a, y_b, lambda_a, lambda_b, 1.0)
    return MixOutcome(image, label, box, lambda_a, lambda_b, 1.0)


def mixup(x_a: ImageBuffer, x_b: ImageBuffer, y_a: LabelVector, y_b: LabelVector, lam: float) -> MixOutcome:
    _check_pair(x_a, x_b)
    if not 0 <= lam <= 1:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    x_a = np.asarray(x_a, dtype=np.float64)
    x_b = np.asarray(x_b, dtype=np.float64)
    image = np.clip(lam * x_a + (1.0 - lam) * x_b, 0.0, 1.0)
    label = mix_labels(y_a, y_b, lam, 1.0 - lam, 1.0)
    return MixOutcome(image, label, None, lam, 1.0 - lam, 1.0)


def cutout(x: ImageBuffer, box: Optional[CropBox], fill: float = 0.0) -> ImageBuffer:
    """Erase ``box`` to ``fill``. The label is the caller's business (unchanged)."""
    out = np.array(x, dtype=np.float64, copy=True)
    if box is None:
        return out
    rows, cols = box.slices()
    out[..., rows, cols, :] = fill
    return out


def passthrough(x: ImageBuffer, y: LabelVector) -> MixOutcome:
    return MixOutcome(np.array(x, dtype=np.float64, copy=True), np.asarray(y, dtype=np.float64).copy(), None, 1.0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# batch-level procedure


def grid_region_box(W: int, H: int, region_id: int) -> CropBox:
    """One cell of a 3x3 grid: ids 1-4 are the corners (TL, TR, BL, BR), 5 the centre."""
    xs = [round_half_away(W * k / 3) for k in range(4)]
    ys = [round_half_away(H * k / 3) for k in range(4)]
    row, col = {1: (0, 0), 2: (0, 2), 3: (2, 0), 4: (2, 2), 5: (1, 1)}[region_id]
    return CropBox(xs[col], ys[row], xs[col + 1], ys[row + 1])


def schedule_probability(variant: Optional[str], epoch: int, total_epochs: int) -> float:
    """Chance that a batch is mixed; linear ramp for the scheduled variants."""
    if variant not in ("scheduled_up", "scheduled_down"):
        return 1.0
    t = epoch / (total_epochs - 1) if total_epochs > 1 else 1.0
    t = min(max(t, 0.0), 1.0)
    return t if variant == "scheduled_up" else 1.0 - t


def draw_box(W: int, H: int, lam: float, gen: np.random.Generator, policy: MixPolicy) -> Optional[CropBox]:
    """Sample the crop region for ``policy``; ``None`` means no-mix."""
    variant = policy.variant
    if variant == "fixed_region":
        return grid_region_box(W, H, policy.region_id)
    if variant == "fixed_size":
        w0, h0 = cut_size(W, H, 1.0 - policy.fixed_fraction)
        xs, ys = int(gen.integers(W - w0 + 1)), int(gen.integers(H - h0 + 1))
        return CropBox(xs, ys, xs + w0, ys + h0)
    if variant == "center_gaussian":
        xs, ys = W // 2, H // 2
        w = min(max(round_half_away(abs(gen.normal(0.0, W * policy.center_std_ratio))), 1), W)
        h = min(max(round_half_away(abs(gen.normal(0.0, H * policy.center_std_ratio))), 1), H)
        return CropBox(xs, ys, min(xs + w, W), min(ys + h, H))
    if variant == "square_region":
        w0, h0 = cut_size(W, H, lam)
        side = round_half_away(math.sqrt(w0 * h0))
        cx, cy = int(gen.integers(W)), int(gen.integers(H))
        xs, ys, xe, ye = (int(v) for v in place_box(W, H, side, side, cx, cy))
        return CropBox(xs, ys, xe, ye) if xe > xs and ye > ys else None
    return sample_cropbox(W, H, lam, gen)


@dataclass
class _BatchPlan:
    mixed: bool
    partners: np.ndarray
    lam: float
    box: Optional[CropBox]


def _plan(n: int, W: int, H: int, policy: MixPolicy, gen: np.random.Generator, p_apply: float, partners) -> _BatchPlan:
    # fixed draw order: apply coin, permutation, lambda, box
    coin = gen.random()
    perm = gen.permutation(n)
    if partners is not None:
        perm = np.asarray(partners, dtype=np.intp)
    lam = sample_lambda(policy.alpha, gen)
    if policy.fixed_lambda is not None:
        lam = policy.fixed_lambda
    mixed = policy.kind != "none" and coin < p_apply
    box = None
    if mixed and policy.kind != "mixup" and not policy.per_image_boxes and 0.0 < lam < 1.0:
        box = draw_box(W, H, lam, gen, policy)
    return _BatchPlan(mixed, perm, lam, box)


def _mix_one(
    x_a: ImageBuffer,
    x_b: ImageBuffer,
    y_a: LabelVector,
    y_b: LabelVector,
    policy: MixPolicy,
    lam: float,
    box: Optional[CropBox],
    patch: Optional[ImageBuffer] = None,
    base: Optional[ImageBuffer] = None,
) -> MixOutcome:
    """Mix a single pair. ``patch``/``base`` are optional precomputed inputs."""
    kind = policy.kind
    if kind == "mixup":
        return mixup(x_a, x_b, y_a, y_b, lam)
    if box is None:
        return passthrough(x_a, y_a)
    if kind == "cutout":
        return MixOutcome(cutout(x_a, box, policy.cutout_fill), np.asarray(y_a, dtype=np.float64).copy(), box, 1.0, 0.0, 0.0)

    flt = policy.filter
    patch_fn = flt.apply if flt is not None and flt.target == "resized" else None
    base_fn = flt.apply if flt is not None and flt.target == "occluded" else None
    W, H = _dims(x_a)
    if patch is not None:
        # precomputed stack path; identical arithmetic to the per-pair mixers
        image = _paste(base if base is not None else x_a, patch, box)
        if kind == "cutmix":
            lambda_a, lambda_b, eps = 1.0 - box.area / (W * H), box.area / (W * H), 1.0
        elif policy.epsilon is None:
            lambda_a, lambda_b, eps = 1.0 - box.area / (W * H), 1.0, box.area / (W * H)
        else:
            _, _, lambda_a, lambda_b, eps = resize_ratio_terms(W, H, box, max(policy.epsilon, fit_epsilon(W, H, box)))
        out = MixOutcome(image, mix_labels(y_a, y_b, lambda_a, lambda_b, eps), box, lambda_a, lambda_b, eps)
    elif kind == "cutmix":
        out = cutmix(x_a, x_b, y_a, y_b, box, patch_filter=patch_fn, base_filter=base_fn)
    elif policy.epsilon is None:
        out = contextmix(x_a, x_b, y_a, y_b, box, patch_filter=patch_fn, base_filter=base_fn)
    else:
        eps = max(policy.epsilon, fit_epsilon(W, H, box))
        out = contextmix_general(x_a, x_b, y_a, y_b, box, eps, patch_filter=patch_fn, base_filter=base_fn)
    return _relabel(out, y_a, y_b, policy.variant)


def _relabel(out: MixOutcome, y_a: LabelVector, y_b: LabelVector, variant: Optional[str]) -> MixOutcome:
    if variant == "one_hot":
        # ties go to the occluded image
        winner = y_a if out.lambda_a >= 0.5 else y_b
        return replace(out, label=np.asarray(winner, dtype=np.float64).copy())
    if variant == "complete_label":
        return replace(out, label=0.5 * np.asarray(y_a, dtype=np.float64) + 0.5 * np.asarray(y_b, dtype=np.float64))
    return out


def _batch_patches(stack: np.ndarray, partners: np.ndarray, box: CropBox, policy: MixPolicy):
    """Patches and filtered bases for every image of a batch sharing one box."""
    W, H = _dims(stack)
    flt = policy.filter
    if policy.kind == "cutmix":
        rows, cols = box.slices()
        sources = stack[:, rows, cols, :]
    elif policy.epsilon is None:
        sources = resize(stack, ResizeSpec(box.w, box.h))
    else:
        tw, th, *_ = resize_ratio_terms(W, H, box, max(policy.epsilon, fit_epsilon(W, H, box)))
        sources = _general_patch(stack, box, tw, th, "bilinear")
    if flt is not None and flt.target == "resized":
        sources = flt.apply(sources)
    bases = flt.apply(stack) if flt is not None and flt.target == "occluded" else None
    return sources[partners], bases


def mix_batch(
    images: Sequence[ImageBuffer],
    labels: Sequence[LabelVector],
    policy: MixPolicy,
    epoch: int = 0,
    total_epochs: int = 1,
    master_seed: int = DEFAULT_SEED,
    batch_index: int = 0,
    workers: int = 1,
    partners: Optional[Sequence[int]] = None,
) -> List[MixOutcome]:
    """Mix one minibatch.

    Partners come from a seeded shuffle of the batch and, unless
    ``policy.per_image_boxes`` is set, a single lambda and crop region are
    shared by the whole batch. All randomness is derived from
    ``(master_seed, epoch, batch_index)`` (plus the image index for per-image
    boxes), so the result does not depend on ``workers``.
    """
    n = len(images)
    if n == 0:
        raise ValueError("empty batch")
    if len(labels) != n:
        raise ValueError(f"{n} images but {len(labels)} labels")
    stack = np.asarray(images, dtype=np.float64)
    if stack.ndim != 4:
        raise ValueError("all images in a batch must share the same (H, W, C) shape")
    labels = np.asarray(labels, dtype=np.float64)
    if n < 2:
        raise ValueError("mix_batch needs at least two images")
    if partners is not None and (len(partners) != n or not all(0 <= int(p) < n for p in partners)):
        raise ValueError("partners must give one in-range index per image")
    H, W = stack.shape[1], stack.shape[2]

    stream = RngStream(master_seed, (epoch, batch_index))
    plan = _plan(n, W, H, policy, stream.generator(), schedule_probability(policy.variant, epoch, total_epochs), partners)
    sid = (int(master_seed),) + stream.key()

    if not plan.mixed:
        return [replace(passthrough(stack[i], labels[i]), partner_index=int(plan.partners[i]), stream_id=sid) for i in range(n)]

    if policy.per_image_boxes and policy.kind != "mixup":

        def one(i: int) -> MixOutcome:
            istream = stream.child(i)
            gen = istream.generator()
            lam = sample_lambda(policy.alpha, gen) if policy.fixed_lambda is None else policy.fixed_lambda
            box = draw_box(W, H, lam, gen, policy) if 0.0 < lam < 1.0 else None
            j = int(plan.partners[i])
            out = _mix_one(stack[i], stack[j], labels[i], labels[j], policy, lam, box)
            return replace(out, partner_index=j, stream_id=(int(master_seed),) + istream.key())

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(one, range(n)))
        return [one(i) for i in range(n)]

    patches = bases = None
    if plan.box is not None and policy.kind in ("cutmix", "contextmix", "contextmix_variant"):
        patches, bases = _batch_patches(stack, plan.partners, plan.box, policy)

    def pair(i: int) -> MixOutcome:
        j = int(plan.partners[i])
        out = _mix_one(
            stack[i],
            stack[j],
            labels[i],
            labels[j],
            policy,
            plan.lam,
            plan.box,
            None if patches is None else patches[i],
            None if bases is None else bases[i],
        )
        return replace(out, partner_index=j, stream_id=sid)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(pair, range(n)))
    return [pair(i) for i in range(n)]


def stack_outcomes(outcomes: Sequence[MixOutcome]) -> Tuple[np.ndarray, np.ndarray]:
    """Images ``(N, H, W, C)`` and labels ``(N, K)`` from a list of outcomes."""
    return np.stack([o.image for o in outcomes]), np.stack([o.label for o in outcomes])
