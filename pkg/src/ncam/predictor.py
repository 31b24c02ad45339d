"""Parameter predictor: encoding vector -> flat NCA update-rule weights.

A dense projection, residual FC blocks, and a zero-initialized head emit
one flat parameter vector per sample, which is split and reshaped into
the two 1x1 update convolutions.  Zero initialization makes every
predicted update exactly null at the start of training, so growth begins
as the unchanged seed and stability does not depend on the initial
weights.

Flat layout: [w1 | b1 | w2 | b2].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .blocks import BlockSpec, Dense, ResidualBlock, collect_named
from .nca import NcaParams, param_count, PERCEPTION_KERNELS


@dataclass
class PredictorConfig:
    in_dim: int
    channels: int
    hidden: int
    width: int = 128
    fcb_count: int = 2
    fcb_expansion: int = 2
    lf_init: float = 0.1
    use_lf: bool = True

    @property
    def out_len(self) -> int:
        return param_count(self.channels, self.hidden)


def unpack_params(flat: Tensor, channels: int, hidden: int) -> NcaParams:
    """Split a flat (..., P) tensor into the four update-conv tensors."""
    pch = PERCEPTION_KERNELS * channels
    p = param_count(channels, hidden)
    if flat.shape[-1] != p:
        raise ValueError(f"flat parameter length {flat.shape[-1]} != expected {p}")
    lead = flat.shape[:-1]
    bounds = np.cumsum([0, pch * hidden, hidden, hidden * channels, channels])
    pieces = [ad.slice_axis(flat, -1, int(a), int(b)) for a, b in zip(bounds, bounds[1:])]
    return NcaParams(
        w1=ad.reshape(pieces[0], lead + (hidden, pch, 1, 1)),
        b1=ad.reshape(pieces[1], lead + (hidden,)),
        w2=ad.reshape(pieces[2], lead + (channels, hidden, 1, 1)),
        b2=ad.reshape(pieces[3], lead + (channels,)),
    )


class ParamPredictor:
    def __init__(self, cfg: PredictorConfig, rng):
        self.cfg = cfg
        self.proj = Dense(rng, cfg.in_dim, cfg.width)
        self.fcbs = [ResidualBlock(BlockSpec("FCB", cfg.width, cfg.fcb_expansion),
                                   rng, cfg.lf_init, cfg.use_lf)
                     for _ in range(cfg.fcb_count)]
        self.head = Dense(rng, cfg.width, cfg.out_len, zero_init=True)
        # Seed the head bias so every sample starts with the same random
        # first update conv (w1) while w2/b2 stay zero: predicted updates
        # begin exactly null, yet the hidden activations are alive, so
        # gradients reach every predicted tensor.  An all-zero head would
        # leave only b2 trainable (dh/dw1 needs w2 != 0 and vice versa).
        pch = PERCEPTION_KERNELS * cfg.channels
        n_w1 = pch * cfg.hidden
        self.head.b.data[:n_w1] = (rng.standard_normal(n_w1) *
                                   np.sqrt(2.0 / pch)).astype(self.head.b.dtype)

    def predict(self, e: Tensor) -> NcaParams:
        """(D,) -> unbatched params; (B, D) -> per-sample batched params."""
        if e.shape[-1] != self.cfg.in_dim:
            raise ValueError(f"encoding dim {e.shape[-1]} != configured {self.cfg.in_dim}")
        x = self.proj(e)
        for block in self.fcbs:
            x = block(x)
        return unpack_params(self.head(x), self.cfg.channels, self.cfg.hidden)

    def named_params(self):
        parts = [("proj", self.proj)]
        parts += [(f"fcb{i}", b) for i, b in enumerate(self.fcbs)]
        parts += [("head", self.head)]
        return collect_named("", parts)

    def leak_factors(self):
        out = []
        for block in self.fcbs:
            out += block.leak_factors()
        return out


def dynamic_conv_equivalence_oracle(params: NcaParams, x: Tensor) -> Tensor:
    """Check that predicted kernels behave exactly like constant kernels.

    Runs the two-layer update with `params` as-is (possibly attached to a
    live graph) and again with detached copies of the same values, and
    asserts elementwise floating-point equality.  Returns the output.
    """
    if params.batched:
        raise ValueError("oracle takes unbatched params")

    def update(p: NcaParams) -> Tensor:
        return ad.conv2d(ad.relu(ad.conv2d(x, p.w1, p.b1)), p.w2, p.b2)

    dyn = update(params)
    const = NcaParams(*(Tensor(np.array(t.data)) for t in
                        (params.w1, params.b1, params.w2, params.b2)))
    ref = update(const)
    if not np.array_equal(dyn.data, ref.data):
        raise AssertionError("dynamic-convolution output differs from constant-kernel reference")
    return dyn
