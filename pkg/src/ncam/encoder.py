"""Continuous image encoder: residual conv trunk, slice pooling, FC blocks.

The trunk never changes spatial resolution or channel count (reconstruction
keeps detail; only the residual blocks' inner layers expand features).
After the trunk, slice pooling concatenates four axis-wise means of the
(c, h, w) feature tensor into a ``c + c*w + c*h + h*w`` vector, which runs
through residual FC blocks and a final dense layer down to the encoding
dimension.  The ``use_slices=False`` ablation keeps only the mean over
(h, w), shrinking the FC input to length c.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import autodiff as ad
from .autodiff import Tensor
from .blocks import BlockSpec, Conv, Dense, ResidualBlock, collect_named


@dataclass
class EncoderConfig:
    visible: int
    height: int
    width: int
    trunk_width: int = 16
    trunk: tuple = ("CB3", "CB1", "CB3", "CB1")
    fcb_count: int = 2
    fcb_expansion: int = 2
    out_dim: int = 64
    use_slices: bool = True
    lf_init: float = 0.1
    use_lf: bool = True

    @property
    def pooled_len(self) -> int:
        c, h, w = self.trunk_width, self.height, self.width
        if not self.use_slices:
            return c
        return c + c * w + c * h + h * w


def slice_pool(x: Tensor) -> Tensor:
    """Concatenate the four axis-wise means of a (..., c, h, w) tensor.

    Output length is c + c*w + c*h + h*w, ordered as: mean over (h, w);
    mean over h; mean over w; mean over c.
    """
    if x.ndim < 3:
        raise ValueError(f"slice_pool: need (..., c, h, w), got {x.shape}")
    lead = x.shape[:-3]
    c, h, w = x.shape[-3:]
    parts = [
        ad.mean_over_axes(x, (-2, -1)),
        ad.reshape(ad.mean_over_axes(x, (-2,)), lead + (c * w,)),
        ad.reshape(ad.mean_over_axes(x, (-1,)), lead + (c * h,)),
        ad.reshape(ad.mean_over_axes(x, (-3,)), lead + (h * w,)),
    ]
    return ad.concat(parts, axis=-1)


class ContinuousEncoder:
    """Maps images in [0, 1] to real encoding vectors."""

    def __init__(self, cfg: EncoderConfig, rng):
        self.cfg = cfg
        c = cfg.trunk_width
        self.stem = Conv(rng, cfg.visible, c, 3)
        self.trunk = [ResidualBlock(BlockSpec(kind, c), rng, cfg.lf_init, cfg.use_lf)
                      for kind in cfg.trunk]
        self.fcbs = [ResidualBlock(BlockSpec("FCB", cfg.pooled_len, cfg.fcb_expansion),
                                   rng, cfg.lf_init, cfg.use_lf)
                     for _ in range(cfg.fcb_count)]
        self.head = Dense(rng, cfg.pooled_len, cfg.out_dim)

    def __call__(self, images: Tensor) -> Tensor:
        """(V, H, W) -> (D,) or (B, V, H, W) -> (B, D)."""
        cfg = self.cfg
        if images.shape[-3:] != (cfg.visible, cfg.height, cfg.width):
            raise ValueError(
                f"encoder configured for {(cfg.visible, cfg.height, cfg.width)} "
                f"images, got {images.shape}")
        x = self.stem(images)
        for block in self.trunk:
            x = block(x)
        if cfg.use_slices:
            x = slice_pool(x)
        else:
            x = ad.mean_over_axes(x, (-2, -1))
        for block in self.fcbs:
            x = block(x)
        return self.head(x)

    def named_params(self):
        parts = [("stem", self.stem)]
        parts += [(f"trunk{i}", b) for i, b in enumerate(self.trunk)]
        parts += [(f"fcb{i}", b) for i, b in enumerate(self.fcbs)]
        parts += [("head", self.head)]
        return collect_named("", parts)

    def leak_factors(self):
        out = []
        for block in self.trunk + self.fcbs:
            out += block.leak_factors()
        return out
