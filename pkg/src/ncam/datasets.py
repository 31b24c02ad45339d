"""Dataset loading: procedural glyphs, PNG directories, CIFAR-10 binaries.

All datasets normalize to (N, V, H, W) float32 in [0, 1].  RGBA sources are
composited over a white background (the alpha channel is kept, so V stays 4
and reconstruction losses include it); CIFAR-10 is RGB with V=3.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CIFAR_RECORD = 3073  # 1 label byte + 3 * 1024 pixel bytes
GLYPH_STYLES = ("lines", "round")


@dataclass
class Dataset:
    name: str
    images: np.ndarray          # (N, V, H, W) float32 in [0, 1]
    ids: list = field(default_factory=list)
    labels: np.ndarray | None = None

    def __post_init__(self):
        img = np.asarray(self.images, dtype=np.float32)
        if img.ndim != 4:
            raise ValueError(f"dataset images must be (N, V, H, W), got {img.shape}")
        if img.size and (img.min() < 0.0 or img.max() > 1.0):
            raise ValueError("dataset values must lie in [0, 1]")
        self.images = img
        if not self.ids:
            self.ids = [str(i) for i in range(len(img))]
        if len(self.ids) != len(img):
            raise ValueError("ids do not match image count")

    def __len__(self):
        return len(self.images)

    @property
    def visible(self):
        return self.images.shape[1]

    @property
    def height(self):
        return self.images.shape[2]

    @property
    def width(self):
        return self.images.shape[3]

    def index_of(self, image_id: str) -> int:
        try:
            return self.ids.index(str(image_id))
        except ValueError:
            raise KeyError(f"unknown image id {image_id!r}") from None


def composite_over_white(rgba: np.ndarray) -> np.ndarray:
    """(..., 4, H, W) straight-alpha RGBA -> RGB over white, alpha preserved."""
    out = np.array(rgba, dtype=np.float32)
    a = out[..., 3:4, :, :]
    out[..., :3, :, :] = out[..., :3, :, :] * a + (1.0 - a)
    return out


# -- procedural glyphs ---------------------------------------------------------


def _seg_distance(px, py, x0, y0, x1, y1):
    vx, vy = x1 - x0, y1 - y0
    ll = vx * vx + vy * vy
    t = np.clip(((px - x0) * vx + (py - y0) * vy) / max(ll, 1e-9), 0.0, 1.0)
    return np.hypot(px - (x0 + t * vx), py - (y0 + t * vy))


def gen_glyphs(n: int, size: int, style: str = "lines", seed: int = 0) -> Dataset:
    """Deterministic anti-aliased glyphs: colored strokes or rings on white.

    `style`: "lines" draws 2-4 straight strokes, "round" draws 1-3
    circles/discs.  The RGBA item stores color-over-white in the RGB planes
    and stroke coverage in alpha.
    """
    if style not in GLYPH_STYLES:
        raise ValueError(f"unknown glyph style {style!r}; choose from {GLYPH_STYLES}")
    if n < 1 or size < 8:
        raise ValueError("need n >= 1 glyphs of size >= 8")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    margin = size * 0.15
    lo, hi = margin, size - margin
    images = np.empty((n, 4, size, size), dtype=np.float32)
    for i in range(n):
        hue = rng.random()
        sat = 0.6 + 0.4 * rng.random()
        val = 0.55 + 0.35 * rng.random()
        color = np.array(colorsys.hsv_to_rgb(hue, sat, val), dtype=np.float32)
        thickness = size * (0.08 + 0.06 * rng.random())
        cov = np.zeros((size, size), dtype=np.float64)
        if style == "lines":
            for _ in range(int(rng.integers(2, 5))):
                x0, y0, x1, y1 = rng.uniform(lo, hi, size=4)
                d = _seg_distance(xx, yy, x0, y0, x1, y1)
                cov = np.maximum(cov, np.clip(0.5 + (thickness / 2 - d), 0.0, 1.0))
        else:
            for _ in range(int(rng.integers(1, 4))):
                cx, cy = rng.uniform(lo, hi, size=2)
                r = rng.uniform(size * 0.12, size * 0.3)
                d = np.hypot(xx - cx, yy - cy)
                if rng.random() < 0.5:
                    edge = np.abs(d - r)  # ring
                else:
                    edge = np.maximum(d - r, 0.0)  # filled disc
                cov = np.maximum(cov, np.clip(0.5 + (thickness / 2 - edge), 0.0, 1.0))
        cov = cov.astype(np.float32)
        images[i, :3] = color[:, None, None] * cov + (1.0 - cov)
        images[i, 3] = cov
    return Dataset(name=f"glyphs-{style}-{n}x{size}-s{seed}", images=images,
                   ids=[f"{style}{i:03d}" for i in range(n)])


# -- PNG directory -------------------------------------------------------------


def load_png_dir(path, downscale: int | None = None) -> Dataset:
    """Ingest every .png in a directory as RGBA, optionally downscaled square."""
    from PIL import Image

    root = Path(path)
    files = sorted(root.glob("*.png"))
    if not files:
        raise ValueError(f"no .png files in {root}")
    items = []
    for f in files:
        img = Image.open(f).convert("RGBA")
        if downscale:
            img = img.resize((downscale, downscale), Image.LANCZOS)
        arr = np.asarray(img, dtype=np.float32) / 255.0  # (H, W, 4)
        items.append(arr.transpose(2, 0, 1))
    shapes = {a.shape for a in items}
    if len(shapes) > 1:
        raise ValueError(f"PNG sizes differ ({sorted(shapes)}); pass downscale=")
    images = composite_over_white(np.stack(items))
    return Dataset(name=f"png-{root.name}", images=np.clip(images, 0.0, 1.0),
                   ids=[f.stem for f in files])


# -- CIFAR-10 binary batches ----------------------------------------------------


def _parse_cifar_file(path: Path):
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % CIFAR_RECORD != 0:
        offset = (raw.size // CIFAR_RECORD) * CIFAR_RECORD
        raise ValueError(
            f"{path}: malformed CIFAR-10 batch, truncated record at byte offset {offset}")
    rec = raw.reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].copy()
    if labels.max(initial=0) > 9:
        bad = int(np.argmax(labels > 9))
        raise ValueError(f"{path}: invalid label at byte offset {bad * CIFAR_RECORD}")
    pixels = rec[:, 1:].reshape(-1, 3, 32, 32).astype(np.float32) / 255.0
    return pixels, labels


def load_cifar10(path) -> Dataset:
    """Parse CIFAR-10 binary batches (one .bin file or a directory of them)."""
    p = Path(path)
    files = [p] if p.is_file() else sorted(p.glob("*.bin"))
    if not files:
        raise ValueError(f"no CIFAR-10 .bin batches under {p}")
    parts = [_parse_cifar_file(f) for f in files]
    images = np.concatenate([x for x, _ in parts])
    labels = np.concatenate([y for _, y in parts])
    ids = []
    for f, (x, _) in zip(files, parts):
        ids += [f"{f.stem}-{i:05d}" for i in range(len(x))]
    return Dataset(name=f"cifar10-{p.stem}", images=images, ids=ids, labels=labels)


# -- CLI dataset specs -----------------------------------------------------------


def resolve_dataset(spec: str, downscale: int | None = None) -> Dataset:
    """Build a dataset from a CLI spec.

    Forms: "glyphs:style=lines,n=16,size=16,seed=7", "png:DIR", "cifar10:PATH".
    """
    kind, _, rest = spec.partition(":")
    if kind == "glyphs":
        opts = {"style": "lines", "n": 16, "size": 16, "seed": 7}
        if rest:
            for kv in rest.split(","):
                k, _, v = kv.partition("=")
                if k not in opts:
                    raise ValueError(f"unknown glyphs option {k!r}")
                opts[k] = v if k == "style" else int(v)
        return gen_glyphs(opts["n"], opts["size"], opts["style"], opts["seed"])
    if kind == "png":
        return load_png_dir(rest, downscale=downscale)
    if kind == "cifar10":
        return load_cifar10(rest)
    raise ValueError(f"unknown dataset spec {spec!r} (use glyphs:/png:/cifar10:)")
