"""Dataset manifests, PPM images, the synthetic inspection dataset and mix records."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .imagecore import ImageBuffer, as_image
from .sampling import RngStream

PathLike = os.PathLike | str


class PPMError(ValueError):
    pass


class ManifestError(ValueError):
    pass


# ---------------------------------------------------------------------------
# PPM / PGM


def quantize(img: ImageBuffer) -> np.ndarray:
    """8-bit codes ``round(v * 255)`` (half away from zero)."""
    return np.floor(np.asarray(img, dtype=np.float64) * 255.0 + 0.5).astype(np.uint8)


def encode_ppm(img: ImageBuffer) -> bytes:
    img = as_image(img)
    h, w, c = img.shape
    magic = b"P6" if c == 3 else b"P5"
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + quantize(img).tobytes()


def write_ppm(img: ImageBuffer, path: PathLike) -> None:
    """Write a binary PPM (3 channels) or PGM (1 channel) with maxval 255."""
    Path(path).write_bytes(encode_ppm(img))


def _header_tokens(data: bytes, count: int) -> Tuple[List[bytes], int]:
    tokens, pos, n = [], 0, len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos >= n:
            raise PPMError("unexpected end of data in header")
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    if pos >= n:
        raise PPMError("unexpected end of data")
    # exactly one whitespace byte separates maxval from the raster
    return tokens, pos + 1


def decode_ppm(data: bytes) -> ImageBuffer:
    if data[:2] not in (b"P6", b"P5"):
        raise PPMError(f"bad magic {data[:2]!r}; expected P6 or P5")
    channels = 3 if data[:2] == b"P6" else 1
    tokens, offset = _header_tokens(data[2:], 3)
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError:
        raise PPMError(f"malformed header {tokens!r}") from None
    if maxval != 255:
        raise PPMError(f"maxval must be 255, got {maxval}")
    if w < 1 or h < 1:
        raise PPMError(f"bad dimensions {w}x{h}")
    start = 2 + offset
    size = w * h * channels
    raster = data[start : start + size]
    if len(raster) < size:
        raise PPMError("unexpected end of data")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(h, w, channels)
    return arr.astype(np.float64) / 255.0


def read_ppm(path: PathLike) -> ImageBuffer:
    return decode_ppm(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# manifests


@dataclass
class DatasetManifest:
    """``(image_path, class_index)`` entries plus class names.

    Relative paths resolve against ``root``.
    """

    entries: List[Tuple[str, int]]
    class_names: List[str]
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        k = len(self.class_names)
        for path, cls in self.entries:
            if not 0 <= cls < k:
                raise ManifestError(f"class {cls} of {path!r} outside [0, {k})")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def labels(self) -> np.ndarray:
        return np.array([c for _, c in self.entries], dtype=np.int64)

    def class_counts(self) -> List[int]:
        return np.bincount(self.labels(), minlength=self.n_classes).tolist()

    def resolve(self, index: int) -> Path:
        p = Path(self.entries[index][0])
        return p if p.is_absolute() else self.root / p

    def load_image(self, index: int) -> ImageBuffer:
        path = self.resolve(index)
        try:
            return read_ppm(path)
        except (OSError, PPMError) as exc:
            raise ManifestError(f"cannot decode {path}: {exc}") from exc

    def load_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        """All images stacked ``(N, H, W, C)`` and their class indices."""
        return np.stack([self.load_image(i) for i in range(len(self))]), self.labels()

    def subset(self, indices: Sequence[int]) -> "DatasetManifest":
        return DatasetManifest([self.entries[i] for i in indices], list(self.class_names), self.root)


def load_manifest(path: PathLike, n_classes: Optional[int] = None) -> DatasetManifest:
    """Parse a ``path<TAB>class_index`` manifest.

    Lines starting with ``#`` are comments, except an optional
    ``#classes<TAB>name<TAB>...`` header that declares the class names.
    Without it the class count comes from ``n_classes`` or the largest index.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest {path} does not exist")
    entries: List[Tuple[str, int]] = []
    names: Optional[List[str]] = None
    lines = path.read_text(encoding="utf-8").split("\n")
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        if line.startswith("#"):
            fields = line.split("\t")
            if fields[0] == "#classes":
                names = fields[1:]
            continue
        fields = line.split("\t")
        if len(fields) != 2 or not fields[0]:
            raise ManifestError(f"{path}:{lineno}: expected 'path<TAB>class_index', got {line!r}")
        try:
            cls = int(fields[1])
        except ValueError:
            raise ManifestError(f"{path}:{lineno}: class index {fields[1]!r} is not an integer") from None
        k = len(names) if names is not None else n_classes
        if cls < 0 or (k is not None and cls >= k):
            raise ManifestError(f"{path}:{lineno}: class index {cls} out of range for {k} classes")
        entries.append((fields[0], cls))
    if not entries:
        raise ManifestError(f"{path}: no entries")
    if names is None:
        k = n_classes if n_classes is not None else max(c for _, c in entries) + 1
        names = [f"class_{i}" for i in range(k)]
    return DatasetManifest(entries, names, path.parent)


def write_manifest(manifest: DatasetManifest, path: PathLike) -> None:
    lines = ["\t".join(["#classes"] + list(manifest.class_names))]
    lines += [f"{p}\t{c}" for p, c in manifest.entries]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def split_manifest(manifest: DatasetManifest, valid_fraction: float, seed: int) -> Tuple[DatasetManifest, DatasetManifest]:
    """Stratified split; every class with two or more images lands in both halves."""
    if not 0 < valid_fraction < 1:
        raise ValueError(f"valid_fraction must lie in (0, 1), got {valid_fraction}")
    gen = RngStream(seed, 0x5_917).generator()
    labels = manifest.labels()
    train_idx, valid_idx = [], []
    for cls in range(manifest.n_classes):
        idx = np.flatnonzero(labels == cls)
        idx = idx[gen.permutation(len(idx))]
        n_valid = round(len(idx) * valid_fraction)
        if len(idx) >= 2:
            n_valid = min(max(n_valid, 1), len(idx) - 1)
        valid_idx += sorted(idx[:n_valid].tolist())
        train_idx += sorted(idx[n_valid:].tolist())
    return manifest.subset(sorted(train_idx)), manifest.subset(sorted(valid_idx))


# ---------------------------------------------------------------------------
# synthetic long-tailed inspection data

DEFECT_KINDS = (
    "scratch",
    "blob",
    "corner_chip",
    "edge_notch",
    "discoloration",
    "crack",
    "pinholes",
    "bright_spot",
    "missing_electrode",
)


def long_tailed_counts(n_classes: int, total: int, target_mean_ir: float) -> List[int]:
    """Exponentially decaying class counts summing to ``total``.

    The decay rate is found by bisection so the Mean IR of the rounded counts
    lands as close to ``target_mean_ir`` as the rounding allows. Class 0 is
    the majority class.
    """
    if n_classes == 1:
        return [total]
    if target_mean_ir < 1:
        raise ValueError("Mean IR is at least 1")

    def counts_for(rho: float) -> List[int]:
        weights = rho ** (-np.arange(n_classes) / (n_classes - 1))
        raw = weights / weights.sum() * total
        counts = np.maximum(np.floor(raw).astype(np.int64), 1)
        # hand leftovers to the classes with the largest remainders
        short = total - counts.sum()
        order = np.argsort(-(raw - np.floor(raw)), kind="stable")
        for i in order[: max(short, 0)]:
            counts[i] += 1
        return counts.tolist()

    def ir(rho: float) -> float:
        c = np.asarray(counts_for(rho), dtype=np.float64)
        return float(np.mean(c.max() / c))

    lo, hi = 1.0, 1.0
    while ir(hi) < target_mean_ir:
        hi *= 2.0
        if hi > 1e9:
            raise ValueError(f"cannot reach Mean IR {target_mean_ir} with {total} images")
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if ir(mid) < target_mean_ir:
            lo = mid
        else:
            hi = mid
    best = min((lo, hi), key=lambda r: abs(ir(r) - target_mean_ir))
    return counts_for(best)


# Table 1 of the source study: 10 classes, 52,304 train + 5,177 valid, Mean IR 16.51
MLCC_PRESET = dict(n_classes=10, total=52_304 + 5_177, mean_ir=16.51)


@dataclass
class SynthSpec:
    class_counts: List[int]
    image_size: int = 32
    noise_std: float = 0.02
    seed: int = 0
    max_defect_fraction: float = 0.08
    class_names: Optional[List[str]] = None
    defect_kinds: Optional[List[str]] = None

    def __post_init__(self):
        if not self.class_counts or any(c < 1 for c in self.class_counts):
            raise ValueError("every class needs at least one image")
        if self.image_size < 16:
            raise ValueError("image_size must be at least 16")
        if self.defect_kinds is not None and len(self.defect_kinds) != self.n_classes - 1:
            raise ValueError("defect_kinds needs one entry per defect class")

    @property
    def n_classes(self) -> int:
        return len(self.class_counts)

    def kind_of(self, cls: int) -> Optional[str]:
        if cls == 0:
            return None
        if self.defect_kinds is not None:
            return self.defect_kinds[cls - 1]
        return DEFECT_KINDS[(cls - 1) % len(DEFECT_KINDS)]

    def names(self) -> List[str]:
        if self.class_names is not None:
            return list(self.class_names)
        return ["normal"] + [f"{self.kind_of(c)}_{c}" for c in range(1, self.n_classes)]


def _disc(S: int, cx: float, cy: float, r: float) -> np.ndarray:
    yy, xx = np.mgrid[0:S, 0:S]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r


def _line(S: int, x0: float, y0: float, x1: float, y1: float) -> np.ndarray:
    mask = np.zeros((S, S), dtype=bool)
    n = int(max(abs(x1 - x0), abs(y1 - y0))) + 1
    for t in np.linspace(0.0, 1.0, n + 1):
        x, y = int(round(x0 + t * (x1 - x0))), int(round(y0 + t * (y1 - y0)))
        if 0 <= x < S and 0 <= y < S:
            mask[y, x] = True
    return mask


def _defect(kind: str, S: int, comp: Tuple[int, int, int, int], gen: np.random.Generator):
    """Mask and pixel treatment for one defect on component ``comp``."""
    x0, y0, x1, y1 = comp
    cw, ch = x1 - x0, y1 - y0
    u = lambda lo, hi: float(gen.uniform(lo, hi))  # noqa: E731
    inner = lambda: (u(x0 + 3, x1 - 3), u(y0 + 3, y1 - 3))  # noqa: E731
    mask = np.zeros((S, S), dtype=bool)
    color = np.array([0.1, 0.1, 0.1])
    mode = "set"
    if kind == "scratch":
        cx, cy = inner()
        ang = u(-0.5, 0.5)
        half = u(0.2, 0.3) * cw
        mask = _line(S, cx - half * math.cos(ang), cy - half * math.sin(ang), cx + half * math.cos(ang), cy + half * math.sin(ang))
        color = np.array([0.15, 0.15, 0.15])
    elif kind == "blob":
        cx, cy = inner()
        mask = _disc(S, cx, cy, u(1.5, 2.6) * S / 32)
        color = np.array([0.2, 0.18, 0.15])
    elif kind == "corner_chip":
        leg = int(round(u(3, 5) * S / 32)) + 1
        corner = int(gen.integers(4))
        yy, xx = np.mgrid[0:S, 0:S]
        dx = xx - x0 if corner in (0, 2) else (x1 - 1) - xx
        dy = yy - y0 if corner in (0, 1) else (y1 - 1) - yy
        mask = (dx >= 0) & (dy >= 0) & (dx + dy < leg)
        color = None
    elif kind == "edge_notch":
        nx = int(u(x0 + 3, x1 - 6))
        nw, nh = max(2, round(3 * S / 32)), max(2, round(2 * S / 32))
        if gen.random() < 0.5:
            mask[y0 : y0 + nh, nx : nx + nw] = True
        else:
            mask[y1 - nh : y1, nx : nx + nw] = True
        color = None
    elif kind == "discoloration":
        cx, cy = inner()
        r = u(2.0, 3.0) * S / 32
        mask = _disc(S, cx, cy, r)
        color = np.array([0.35, -0.15, -0.2])
        mode = "add"
    elif kind == "crack":
        x, y = inner()
        for _ in range(int(gen.integers(3, 5))):
            nx, ny = x + u(1, 3), y + u(-2.5, 2.5)
            mask |= _line(S, x, y, nx, ny)
            x, y = nx, ny
        color = np.array([0.95, 0.95, 0.95])
    elif kind == "pinholes":
        cx, cy = inner()
        for _ in range(int(gen.integers(3, 6))):
            px = int(np.clip(round(cx + u(-3, 3)), x0, x1 - 1))
            py = int(np.clip(round(cy + u(-3, 3)), y0, y1 - 1))
            mask[py, px] = True
        color = np.array([0.02, 0.02, 0.02])
    elif kind == "bright_spot":
        cx, cy = inner()
        mask = _disc(S, cx, cy, u(1.5, 2.2) * S / 32)
        color = np.array([1.0, 1.0, 0.9])
    elif kind == "missing_electrode":
        band = max(2, round(cw * 0.12))
        strip = slice(y0 + ch // 4, y1 - ch // 4)
        if gen.random() < 0.5:
            mask[strip, x0 : x0 + band] = True
        else:
            mask[strip, x1 - band : x1] = True
        color = np.array([0.3, 0.28, 0.22])
    else:
        raise ValueError(f"unknown defect kind {kind!r}")
    return mask, color, mode


def synth_image(spec: SynthSpec, cls: int, index: int) -> Tuple[ImageBuffer, np.ndarray]:
    """Render image ``index`` of class ``cls``; also returns the defect mask.

    Deterministic in ``(spec.seed, cls, index)``, so images can be generated
    in any order or in parallel.
    """
    S = spec.image_size
    gen = RngStream(spec.seed, (cls, index)).generator()
    bg = gen.uniform(0.05, 0.12)
    img = np.full((S, S, 3), bg)

    cw = int(round(S * gen.uniform(0.6, 0.75)))
    ch = int(round(S * gen.uniform(0.42, 0.55)))
    x0 = (S - cw) // 2 + int(gen.integers(-1, 2))
    y0 = (S - ch) // 2 + int(gen.integers(-1, 2))
    x1, y1 = x0 + cw, y0 + ch
    body = np.array([0.55, 0.5, 0.42]) * gen.uniform(0.92, 1.08)
    img[y0:y1, x0:x1] = body
    # terminal electrodes at both ends, brighter and greyer
    term = max(2, round(cw * 0.18))
    img[y0:y1, x0 : x0 + term] = [0.78, 0.78, 0.8]
    img[y0:y1, x1 - term : x1] = [0.78, 0.78, 0.8]
    # faint horizontal texture across the body
    rows = np.arange(y0, y1)
    img[y0:y1, x0 + term : x1 - term] += (0.02 * np.sin(rows * 1.7 + gen.uniform(0, 6.28)))[:, None, None]

    mask = np.zeros((S, S), dtype=bool)
    kind = spec.kind_of(cls)
    if kind is not None:
        mask, color, mode = _defect(kind, S, (x0, y0, x1, y1), gen)
        if color is None:
            img[mask] = bg
        elif mode == "add":
            img[mask] += color
        else:
            img[mask] = color
    img += gen.normal(0.0, spec.noise_std, size=img.shape)
    return np.clip(img, 0.0, 1.0), mask


def generate_synthetic(spec: SynthSpec, out_dir: PathLike) -> DatasetManifest:
    """Render the dataset to ``out_dir/images`` and write ``out_dir/manifest.tsv``."""
    out_dir = Path(out_dir)
    img_dir = out_dir / "images"
    try:
        img_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {img_dir}: {exc}") from exc
    if not os.access(img_dir, os.W_OK):
        raise PermissionError(f"{img_dir} is not writable")
    entries = []
    for cls, count in enumerate(spec.class_counts):
        for i in range(count):
            img, _ = synth_image(spec, cls, i)
            rel = f"images/c{cls:02d}_{i:06d}.ppm"
            write_ppm(img, out_dir / rel)
            entries.append((rel, cls))
    manifest = DatasetManifest(entries, spec.names(), out_dir)
    write_manifest(manifest, out_dir / "manifest.tsv")
    return manifest


# ---------------------------------------------------------------------------
# mix records


def format_mix_record(outcome, filename: str) -> str:
    box = outcome.box
    box_txt = "nomix" if box is None else f"{box.r_xs} {box.r_ys} {box.r_xe} {box.r_ye}"
    weights = " ".join(f"{w:.9f}" for w in outcome.label)
    return f"{filename} {outcome.partner_index} {box_txt} {outcome.lambda_a:.9f} {outcome.epsilon_b:.9f} {weights}"


def write_mix_records(outcomes: Sequence, path: PathLike, filenames: Optional[Sequence[str]] = None) -> None:
    """One space-separated line per outcome: file, partner, box|nomix, lambda_a, epsilon_b, weights."""
    if filenames is None:
        filenames = [f"mix_{i:06d}.ppm" for i in range(len(outcomes))]
    if len(filenames) != len(outcomes):
        raise ValueError("one filename per outcome required")
    text = "".join(format_mix_record(o, f) + "\n" for o, f in zip(outcomes, filenames))
    Path(path).write_text(text, encoding="utf-8")
