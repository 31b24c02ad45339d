"""Genetic engineering over learned DNA codes.

A group of discretized source encodings is averaged letter-row by
letter-row; rows whose dominant category clears the threshold become
asserted one-hot "genes", the rest become "none" (all-zero rows the
decoder ignores).  Splicing overwrites exactly the asserted rows of a
target encoding; growing the result through the trained model renders the
recombined image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .dna import DnaEncoding, GENE_LEN, LETTERS, N_CATEGORIES


@dataclass
class MeanEncoding:
    """Thresholded group mean: each row one-hot (asserted) or all-zero (none)."""

    probs: Tensor                # (D, 16, 4)
    tau: float

    @property
    def d(self) -> int:
        return self.probs.shape[0]

    @property
    def asserted_count(self) -> int:
        return int(self.probs.data.sum(axis=-1).round().sum())

    def asserted_rows(self) -> np.ndarray:
        """(D, 16) boolean map of asserted letter rows."""
        return self.probs.data.sum(axis=-1) > 0.5

    def pattern(self) -> str:
        """Letter string over CGAT with '-' marking none rows."""
        p = self.probs.data
        idx = p.argmax(axis=-1).reshape(-1)
        asserted = self.asserted_rows().reshape(-1)
        return "".join(LETTERS[i] if a else "-" for i, a in zip(idx, asserted))


def _check_one_hot(dna: DnaEncoding, what: str) -> None:
    p = dna.probs.data
    sums = p.sum(axis=-1)
    if not (np.all((p == 0) | (p == 1)) and np.all(np.isin(sums, (0, 1)))):
        raise ValueError(f"{what} must be discretized (one-hot rows)")


def mean_encoding(sources, tau: float) -> MeanEncoding:
    """Average discretized sources and threshold into asserted/none rows.

    A row asserts its dominant category when the category's mean share
    reaches tau and no other category ties it; otherwise the row is "none".
    """
    sources = list(sources)
    if not sources:
        raise ValueError("mean_encoding needs at least one source")
    if not 0.25 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0.25, 1], got {tau}")
    d = sources[0].d
    for s in sources:
        if s.batched or s.d != d:
            raise ValueError("sources must be single encodings of equal dimension")
        _check_one_hot(s, "mean_encoding sources")
    avg = np.mean([s.probs.data for s in sources], axis=0)
    top = avg.max(axis=-1)
    arg = avg.argmax(axis=-1)
    tied = (avg == top[..., None]).sum(axis=-1) > 1
    asserted = (top >= tau) & ~tied
    probs = np.zeros((d, GENE_LEN, N_CATEGORIES), dtype=np.float32)
    np.put_along_axis(probs, arg[..., None], 1.0, axis=-1)
    probs *= asserted[..., None]
    return MeanEncoding(probs=Tensor(probs), tau=tau)


def splice(target: DnaEncoding, mean: MeanEncoding) -> DnaEncoding:
    """Overwrite the target's rows wherever the mean asserts a gene."""
    if target.batched:
        raise ValueError("splice takes a single target encoding")
    if target.d != mean.d:
        raise ValueError(f"encoding dimension mismatch: target D={target.d}, "
                         f"mean D={mean.d}")
    keep = ~mean.asserted_rows()[..., None]
    out = np.where(keep, target.probs.data, mean.probs.data).astype(np.float32)
    return DnaEncoding(Tensor(out))


def grow_from_dna(dna: DnaEncoding, model, rng_seed=None, frames_every=None):
    """Decode a (possibly spliced or partial) code and grow its image.

    Returns (visible image (V, H, W) float array, frames or None).
    """
    if model.codec is None:
        raise ValueError("model was not trained in dna mode")
    if dna.batched:
        raise ValueError("grow_from_dna takes a single encoding")
    with ad.no_grad():
        params = model.dna_to_params(dna)
        return model.grow_single(params, rng_seed=rng_seed, frames_every=frames_every)
