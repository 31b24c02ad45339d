"""DNA-like categorical codes: encode, mutate, decode, discretize, export.

Each scalar of the continuous encoding expands into one "gene" of 16
letters, each letter a probability row over the 4 categories C, G, A, T —
the same 32 bits of information as one float.  Genes are produced by a
weight-shared stack applied to every feature independently (1x1
convolutions over independent positions reduce to shared dense layers),
so the code is permutation-equivariant across features.

Training never samples or discretizes: the soft softmax rows flow
end-to-end, and robustness comes from mutation noise that replaces a
fixed fraction of letters with random one-hot rows (constant under
differentiation).  An all-zero row means category "none"; the decoder is
linear in its input, so such rows contribute nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .blocks import BlockSpec, Dense, ResidualBlock, collect_named

GENE_LEN = 16
N_CATEGORIES = 4
LETTERS = "CGAT"

DNA_FILE_MAGIC = "NCAM-DNA v1"


@dataclass
class DnaEncoding:
    """Per-feature gene matrix: probs (..., D, 16, 4)."""

    probs: Tensor

    def __post_init__(self):
        if self.probs.ndim not in (3, 4) or self.probs.shape[-2:] != (GENE_LEN, N_CATEGORIES):
            raise ValueError(f"DNA probs must be (..., D, 16, 4), got {self.probs.shape}")

    @property
    def d(self) -> int:
        return self.probs.shape[-3]

    @property
    def batched(self) -> bool:
        return self.probs.ndim == 4


class DnaCodec:
    """Symmetric per-feature encoder/decoder between scalars and genes.

    Logits into the softmax pass through a smooth cap, L * tanh(x / L):
    letters can reach ~98% confidence but the softmax Jacobian never
    vanishes.  Without the cap, early training collapses every row to a
    saturated one-hot that ignores the input (the constant code is the
    most stable input for the first, spatially-uniform growth solution),
    and the dead softmax then blocks the encoder's gradient for good.
    """

    def __init__(self, rng, width: int = GENE_LEN, depth: int = 4,
                 lf_init: float = 0.1, use_lf: bool = True,
                 logit_cap: float = 4.0):
        self.width = width
        self.logit_cap = logit_cap
        self.enc_lift = Dense(rng, 1, width)
        self.enc_blocks = [ResidualBlock(BlockSpec("FCB", width, 4), rng, lf_init, use_lf)
                           for _ in range(depth)]
        self.enc_head = Dense(rng, width, GENE_LEN * N_CATEGORIES)
        self.dec_lift = Dense(rng, GENE_LEN * N_CATEGORIES, width)
        self.dec_blocks = [ResidualBlock(BlockSpec("FCB", width, 4), rng, lf_init, use_lf)
                           for _ in range(depth)]
        self.dec_head = Dense(rng, width, 1)

    def encode(self, e: Tensor) -> DnaEncoding:
        """(..., D) continuous encoding -> soft genes (..., D, 16, 4)."""
        lead = e.shape
        x = ad.reshape(e, (e.size, 1))
        x = self.enc_lift(x)
        for block in self.enc_blocks:
            x = block(x)
        logits = ad.reshape(self.enc_head(x), lead + (GENE_LEN, N_CATEGORIES))
        if self.logit_cap:
            logits = ad.scale(ad.tanh(ad.scale(logits, 1.0 / self.logit_cap)),
                              self.logit_cap)
        return DnaEncoding(ad.softmax_lastdim(logits))

    def decode(self, dna: DnaEncoding) -> Tensor:
        """Genes (..., D, 16, 4) -> continuous (..., D); zero rows are ignored."""
        p = dna.probs
        lead = p.shape[:-2]
        x = ad.reshape(p, (p.size // (GENE_LEN * N_CATEGORIES), GENE_LEN * N_CATEGORIES))
        x = self.dec_lift(x)
        for block in self.dec_blocks:
            x = block(x)
        return ad.reshape(self.dec_head(x), lead)

    def named_params(self):
        parts = [("enc.lift", self.enc_lift)]
        parts += [(f"enc.block{i}", b) for i, b in enumerate(self.enc_blocks)]
        parts += [("enc.head", self.enc_head), ("dec.lift", self.dec_lift)]
        parts += [(f"dec.block{i}", b) for i, b in enumerate(self.dec_blocks)]
        parts += [("dec.head", self.dec_head)]
        return collect_named("", parts)

    def leak_factors(self):
        out = []
        for block in self.enc_blocks + self.dec_blocks:
            out += block.leak_factors()
        return out


def mutate(dna: DnaEncoding, rate: float, rng_seed) -> DnaEncoding:
    """Replace floor(rate * D * 16) uniformly chosen letters per sample with
    random one-hot rows; the replacement is constant under differentiation."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"mutation rate must be in [0, 1], got {rate}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) \
        else np.random.default_rng(rng_seed)
    p = dna.probs
    d = dna.d
    n_rows = d * GENE_LEN
    count = int(rate * n_rows)
    if count == 0:
        return dna
    lead = p.shape[:-3]
    n_samples = int(np.prod(lead)) if lead else 1

    keep = np.ones((n_samples, n_rows, 1), dtype=p.dtype)
    repl = np.zeros((n_samples, n_rows, N_CATEGORIES), dtype=p.dtype)
    for s in range(n_samples):
        rows = rng.choice(n_rows, size=count, replace=False)
        cats = rng.integers(0, N_CATEGORIES, size=count)
        keep[s, rows, 0] = 0.0
        repl[s, rows, cats] = 1.0
    keep = keep.reshape(lead + (d, GENE_LEN, 1))
    repl = repl.reshape(lead + (d, GENE_LEN, N_CATEGORIES))
    out = ad.add(ad.mul(p, Tensor(keep)), Tensor(repl))
    return DnaEncoding(out)


def discretize(dna: DnaEncoding) -> DnaEncoding:
    """Argmax each letter row to one-hot (ties to the lowest category index);
    all-zero "none" rows pass through unchanged.  Not differentiable."""
    p = dna.probs.data
    arg = p.argmax(axis=-1)
    hard = np.zeros_like(p)
    np.put_along_axis(hard, arg[..., None], 1.0, axis=-1)
    hard *= (p.sum(axis=-1, keepdims=True) > 0)
    return DnaEncoding(Tensor(hard))


def to_letters(dna: DnaEncoding) -> str:
    """Flatten one sample's genes to a D*16 string over CGAT."""
    if dna.batched:
        raise ValueError("to_letters takes a single encoding, not a batch")
    p = dna.probs.data
    if np.any(p.sum(axis=-1) <= 0):
        raise ValueError("encoding contains 'none' rows; letters cannot express them")
    idx = p.argmax(axis=-1).reshape(-1)
    return "".join(LETTERS[i] for i in idx)


def from_letters(s: str) -> DnaEncoding:
    """Parse a letter string back into a one-hot encoding."""
    if len(s) % GENE_LEN != 0 or not s:
        raise ValueError(f"letter string length {len(s)} is not a multiple of {GENE_LEN}")
    lut = {c: i for i, c in enumerate(LETTERS)}
    try:
        idx = np.array([lut[c] for c in s])
    except KeyError as e:
        raise ValueError(f"invalid DNA letter {e.args[0]!r}") from None
    d = len(s) // GENE_LEN
    probs = np.zeros((d, GENE_LEN, N_CATEGORIES), dtype=ad.DEFAULT_DTYPE)
    np.put_along_axis(probs, idx.reshape(d, GENE_LEN, 1), 1.0, axis=-1)
    return DnaEncoding(Tensor(probs))


def format_dna_file(dna: DnaEncoding) -> str:
    """Export format: one header line, then the newline-free letter string."""
    return f"{DNA_FILE_MAGIC} D={dna.d}\n{to_letters(dna)}\n"


def parse_dna_file(text: str) -> DnaEncoding:
    lines = text.splitlines()
    if len(lines) < 2 or not lines[0].startswith(DNA_FILE_MAGIC):
        raise ValueError("not a DNA export file (bad header)")
    try:
        d = int(lines[0].rsplit("D=", 1)[1])
    except (IndexError, ValueError):
        raise ValueError("DNA header is missing the D= field") from None
    dna = from_letters(lines[1].strip())
    if dna.d != d:
        raise ValueError(f"header says D={d} but payload has D={dna.d}")
    return dna
