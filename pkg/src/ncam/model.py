"""The full auto-encoder: encoder -> (DNA codec) -> predictor -> automaton.

One model instance owns every trainable tensor.  Training and evaluation
run the batched path (per-sample parameter sets in one graph); the
single-image path powers the CLI and service and shares the same
parameters, so checkpoints serve both.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, field

import numpy as np

from . import autodiff as ad
from . import nca
from .autodiff import Tensor
from .dna import DnaCodec, DnaEncoding, mutate
from .encoder import ContinuousEncoder, EncoderConfig
from .nca import NcaConfig, NcaParams
from .predictor import ParamPredictor, PredictorConfig

MODES = ("continuous", "dna")


@dataclass
class ModelConfig:
    """Everything needed to rebuild a model skeleton (JSON-serializable)."""

    mode: str = "continuous"
    visible: int = 4
    height: int = 16
    width: int = 16
    encoding_dim: int = 64
    channels: int = 16
    nca_hidden: int = 32
    update_prob: float = 1.0
    steps: int = 32
    lf_init: float = 0.1
    enc_width: int = 16
    enc_trunk: tuple = ("CB3", "CB1", "CB3", "CB1")
    enc_fcb_count: int = 2
    enc_fcb_expansion: int = 2
    dna_width: int = 16
    dna_depth: int = 4
    dna_logit_cap: float = 4.0
    pred_width: int = 128
    pred_fcb_count: int = 2
    pred_fcb_expansion: int = 2
    use_lf: bool = True
    use_norm: bool = True
    use_slices: bool = True
    init_seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        self.enc_trunk = tuple(self.enc_trunk)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["enc_trunk"] = list(self.enc_trunk)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


class NcamModel:
    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.init_seed)
        self.nca_cfg = NcaConfig(
            channels=cfg.channels, visible=cfg.visible, hidden=cfg.nca_hidden,
            update_prob=cfg.update_prob, steps=cfg.steps, lf_init=cfg.lf_init,
            use_lf=cfg.use_lf, normalize_perception=cfg.use_norm)
        self.encoder = ContinuousEncoder(EncoderConfig(
            visible=cfg.visible, height=cfg.height, width=cfg.width,
            trunk_width=cfg.enc_width, trunk=cfg.enc_trunk,
            fcb_count=cfg.enc_fcb_count, fcb_expansion=cfg.enc_fcb_expansion,
            out_dim=cfg.encoding_dim, use_slices=cfg.use_slices,
            lf_init=cfg.lf_init, use_lf=cfg.use_lf), rng)
        self.codec = None
        if cfg.mode == "dna":
            self.codec = DnaCodec(rng, width=cfg.dna_width, depth=cfg.dna_depth,
                                  lf_init=cfg.lf_init, use_lf=cfg.use_lf,
                                  logit_cap=cfg.dna_logit_cap)
        self.predictor = ParamPredictor(PredictorConfig(
            in_dim=cfg.encoding_dim, channels=cfg.channels, hidden=cfg.nca_hidden,
            width=cfg.pred_width, fcb_count=cfg.pred_fcb_count,
            fcb_expansion=cfg.pred_fcb_expansion,
            lf_init=cfg.lf_init, use_lf=cfg.use_lf), rng)

    # -- parameters -----------------------------------------------------

    def named_params(self) -> dict:
        out = {}
        for k, v in self.encoder.named_params().items():
            out[f"encoder.{k}"] = v
        if self.codec is not None:
            for k, v in self.codec.named_params().items():
                out[f"dna.{k}"] = v
        for k, v in self.predictor.named_params().items():
            out[f"pred.{k}"] = v
        if self.nca_cfg.leak_factor.requires_grad:
            out["nca.lf"] = self.nca_cfg.leak_factor
        return out

    def leak_factors(self):
        out = self.encoder.leak_factors()
        if self.codec is not None:
            out += self.codec.leak_factors()
        out += self.predictor.leak_factors()
        if self.nca_cfg.leak_factor.requires_grad:
            out.append(self.nca_cfg.leak_factor)
        return out

    # -- forward paths ------------------------------------------------------

    def encode(self, images) -> Tensor:
        """Images (V, H, W) or (B, V, H, W), values in [0, 1] -> encodings."""
        return self.encoder(images if isinstance(images, Tensor) else Tensor(images))

    def codes_to_params(self, e: Tensor, mutation_rate: float = 0.0, mutation_rng=None):
        """Encoding -> (NcaParams, DnaEncoding or None), applying the DNA
        round-trip (with optional mutation noise) in dna mode."""
        dna = None
        if self.codec is not None:
            dna = self.codec.encode(e)
            if mutation_rate > 0.0:
                dna = mutate(dna, mutation_rate, mutation_rng)
            e = self.codec.decode(dna)
        return self.predictor.predict(e), dna

    def dna_to_params(self, dna: DnaEncoding) -> NcaParams:
        if self.codec is None:
            raise ValueError("model was not trained in dna mode")
        return self.predictor.predict(self.codec.decode(dna))

    def reconstruct_batch(self, images: np.ndarray, mutation_rate: float = 0.0,
                          mutation_rng=None, grow_seed=None) -> Tensor:
        """Full pipeline over (B, V, H, W) targets; returns (B, Ch, H, W) state."""
        params, _ = self.codes_to_params(self.encode(images), mutation_rate, mutation_rng)
        state, _ = nca.grow_batch(params, self.nca_cfg, self.cfg.height, self.cfg.width,
                                  rng_seed=grow_seed)
        return state

    def grow_single(self, params: NcaParams, rng_seed=None, frames_every=None):
        """Unbatched growth at the model's configured image size."""
        grid, frames = nca.grow(params, self.nca_cfg, self.cfg.height, self.cfg.width,
                                rng_seed=rng_seed, frames_every=frames_every)
        return grid.visible(self.nca_cfg), frames

    def reconstruct_single(self, image: np.ndarray, rng_seed=None, frames_every=None,
                           mutation_rate: float = 0.0, mutation_rng=None):
        with ad.no_grad():
            params, _ = self.codes_to_params(self.encode(image), mutation_rate, mutation_rng)
            return self.grow_single(params, rng_seed, frames_every)

    def visible_of(self, state: Tensor) -> Tensor:
        return ad.slice_axis(state, -3, 0, self.cfg.visible)
