"""PNG/GIF encoding helpers for (V, H, W) float arrays in [0, 1]."""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image


def _to_pil(img: np.ndarray, scale: int = 1) -> Image.Image:
    if img.ndim != 3 or img.shape[0] not in (3, 4):
        raise ValueError(f"image must be (3|4, H, W), got {img.shape}")
    arr = np.clip(np.asarray(img, dtype=np.float32), 0.0, 1.0)
    arr = np.round(arr * 255.0).astype(np.uint8).transpose(1, 2, 0)
    mode = "RGBA" if arr.shape[2] == 4 else "RGB"
    pil = Image.fromarray(arr, mode)
    if scale > 1:
        pil = pil.resize((pil.width * scale, pil.height * scale), Image.NEAREST)
    return pil


def to_png_bytes(img: np.ndarray, scale: int = 1) -> bytes:
    buf = io.BytesIO()
    _to_pil(img, scale).save(buf, format="PNG")
    return buf.getvalue()


def from_png_bytes(data: bytes) -> np.ndarray:
    """Decode to (4, H, W) float32 RGBA."""
    pil = Image.open(io.BytesIO(data)).convert("RGBA")
    return (np.asarray(pil, dtype=np.float32) / 255.0).transpose(2, 0, 1)


def save_png(path, img: np.ndarray, scale: int = 1) -> None:
    with open(path, "wb") as f:
        f.write(to_png_bytes(img, scale))


def load_png(path) -> np.ndarray:
    with open(path, "rb") as f:
        return from_png_bytes(f.read())


def b64_png(img: np.ndarray, scale: int = 1) -> str:
    return base64.b64encode(to_png_bytes(img, scale)).decode("ascii")


def save_gif(path, frames, scale: int = 4, duration_ms: int = 80) -> None:
    """Animate a growth sequence; frames are (V, H, W) arrays."""
    if not frames:
        raise ValueError("no frames to animate")
    pils = [_to_pil(f, scale).convert("RGB") for f in frames]
    pils[0].save(path, save_all=True, append_images=pils[1:],
                 duration=duration_ms, loop=0)


def make_strip(frames, pad: int = 1) -> np.ndarray:
    """Horizontal growth strip: concatenate frames with a white gutter."""
    if not frames:
        raise ValueError("no frames for strip")
    v, h, _ = frames[0].shape
    gutter = np.ones((v, h, pad), dtype=np.float32)
    parts = []
    for i, f in enumerate(frames):
        if i:
            parts.append(gutter)
        parts.append(np.asarray(f, dtype=np.float32))
    return np.concatenate(parts, axis=2)
