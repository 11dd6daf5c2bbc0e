"""Crop-box sampling: Beta-distributed areas, uniform centres, clipping.

Randomness always flows through an :class:`RngStream`, a ``(seed, stream_id)``
pair mapped onto numpy's ``SeedSequence`` spawn keys. Two streams with the same
pair produce the same draws no matter which process or thread consumes them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

StreamId = Union[int, Tuple[int, ...]]


def round_half_away(x):
    """Round half away from zero (numpy's ``round`` is banker's rounding)."""
    if isinstance(x, (int, float)):
        return int(math.copysign(math.floor(abs(x) + 0.5), x))
    x = np.asarray(x, dtype=np.float64)
    out = np.sign(x) * np.floor(np.abs(x) + 0.5)
    return int(out) if out.ndim == 0 else out.astype(np.int64)


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: StreamId = 0

    def key(self) -> Tuple[int, ...]:
        sid = self.stream_id
        return tuple(int(s) for s in sid) if isinstance(sid, tuple) else (int(sid),)

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed) & (2**64 - 1), spawn_key=self.key())
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *ids: int) -> "RngStream":
        return RngStream(self.seed, self.key() + tuple(int(i) for i in ids))


@dataclass(frozen=True)
class CropBox:
    """Half-open pixel rectangle ``[r_xs, r_xe) x [r_ys, r_ye)``."""

    r_xs: int
    r_ys: int
    r_xe: int
    r_ye: int

    @property
    def w(self) -> int:
        return self.r_xe - self.r_xs

    @property
    def h(self) -> int:
        return self.r_ye - self.r_ys

    @property
    def area(self) -> int:
        return self.w * self.h

    def area_fraction(self, W: int, H: int) -> float:
        return (self.w * self.h) / (W * H)

    def lambda_a(self, W: int, H: int) -> float:
        """Share of the image left to the occluded side."""
        return 1.0 - (self.w * self.h) / (W * H)

    def validate(self, W: int, H: int) -> "CropBox":
        if not (0 <= self.r_xs < self.r_xe <= W and 0 <= self.r_ys < self.r_ye <= H):
            raise ValueError(f"{self} is not a valid box inside a {W}x{H} image")
        return self

    def slices(self):
        return slice(self.r_ys, self.r_ye), slice(self.r_xs, self.r_xe)

    @classmethod
    def whole(cls, W: int, H: int) -> "CropBox":
        return cls(0, 0, W, H)


def sample_lambda(alpha: float, rng: Union[RngStream, np.random.Generator]) -> float:
    """Draw from Beta(alpha, alpha), strictly inside (0, 1)."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    while True:
        lam = float(gen.beta(alpha, alpha))
        if 0.0 < lam < 1.0:
            return lam


def cut_size(W: int, H: int, lam):
    """Unclipped cut width and height for area ratio ``lam``."""
    ratio = np.sqrt(1.0 - np.asarray(lam, dtype=np.float64))
    return round_half_away(W * ratio), round_half_away(H * ratio)


def place_box(W: int, H: int, w0, h0, cx, cy):
    """Centre a ``w0 x h0`` cut on ``(cx, cy)`` and clip it to the image.

    The pre-clip box starts at ``c - size // 2`` and spans exactly ``size``
    pixels, so clipping can only shrink it. Works elementwise on arrays.
    """
    x0 = np.asarray(cx) - np.asarray(w0) // 2
    y0 = np.asarray(cy) - np.asarray(h0) // 2
    xs = np.clip(x0, 0, W)
    ys = np.clip(y0, 0, H)
    xe = np.clip(x0 + w0, 0, W)
    ye = np.clip(y0 + h0, 0, H)
    return xs, ys, xe, ye


def sample_cropbox(
    W: int,
    H: int,
    lam: float,
    rng: Union[RngStream, np.random.Generator],
    center: Optional[Tuple[int, int]] = None,
) -> Optional[CropBox]:
    """Sample a clipped crop box for area ratio ``lam``.

    Returns ``None`` (no-mix) when clipping or rounding leaves zero area; the
    caller should pass the sample through unmixed.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    w0, h0 = cut_size(W, H, lam)
    if center is None:
        gen = rng.generator() if isinstance(rng, RngStream) else rng
        cx, cy = int(gen.integers(W)), int(gen.integers(H))
    else:
        cx, cy = center
    xs, ys, xe, ye = (int(v) for v in place_box(W, H, w0, h0, cx, cy))
    if xe <= xs or ye <= ys:
        return None
    return CropBox(xs, ys, xe, ye)


@dataclass
class AreaHistogram:
    bin_edges: np.ndarray
    pre_clip_counts: np.ndarray
    post_clip_counts: np.ndarray
    pre_clip_fractions: Optional[np.ndarray] = field(default=None, repr=False)
    post_clip_fractions: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_samples(self) -> int:
        return int(self.pre_clip_counts.sum())

    def rows(self):
        for lo, hi, pre, post in zip(
            self.bin_edges[:-1], self.bin_edges[1:], self.pre_clip_counts, self.post_clip_counts
        ):
            yield float(lo), float(hi), int(pre), int(post)

    def to_text(self, sep: str = "\t") -> str:
        lines = [sep.join(("bin_lo", "bin_hi", "pre_count", "post_count"))]
        lines += [sep.join((f"{lo:.4f}", f"{hi:.4f}", str(pre), str(post))) for lo, hi, pre, post in self.rows()]
        return "\n".join(lines) + "\n"


def simulate_area_distribution(
    W: int,
    H: int,
    alpha: float,
    n_samples: int,
    rng: Union[RngStream, np.random.Generator],
    n_bins: int = 20,
    keep_samples: bool = False,
) -> AreaHistogram:
    """Histogram of box area fractions before and after clipping.

    Vectorised over samples but uses the same size and placement arithmetic as
    :func:`sample_cropbox`. Degenerate (no-mix) boxes count as area 0.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    lam = gen.beta(alpha, alpha, size=n_samples)
    # redraw the measure-zero endpoints so every lambda is inside (0, 1)
    bad = (lam <= 0.0) | (lam >= 1.0)
    while bad.any():
        lam[bad] = gen.beta(alpha, alpha, size=int(bad.sum()))
        bad = (lam <= 0.0) | (lam >= 1.0)
    cx = gen.integers(W, size=n_samples)
    cy = gen.integers(H, size=n_samples)
    w0, h0 = cut_size(W, H, lam)
    xs, ys, xe, ye = place_box(W, H, w0, h0, cx, cy)
    pre = 1.0 - lam
    post = (xe - xs) * (ye - ys) / (W * H)

    edges = np.linspace(0.0, 1.0, n_bins + 1)
    pre_counts, _ = np.histogram(pre, bins=edges)
    post_counts, _ = np.histogram(post, bins=edges)
    return AreaHistogram(
        edges,
        pre_counts,
        post_counts,
        pre if keep_samples else None,
        post if keep_samples else None,
    )
