"""Calibration sweep 4: manifold CE/DNA targets and a harder ablation task."""
import json
import time

import numpy as np

from ncam.datasets import gen_glyphs
from ncam.training import DivergenceError, TrainConfig, evaluate, train

out = open("/root/pkg/scripts/cal4.log", "a", buffering=1)


def run(tag, ds, curve_every=250, **kw):
    t0 = time.time()
    curve = []
    try:
        res = train(ds, TrainConfig(**kw),
                    on_step=lambda s, l: curve.append((s, round(l, 5)))
                    if s % curve_every == 0 else None)
    except DivergenceError as e:
        out.write(json.dumps(dict(tag=tag, diverged=True, curve=curve,
                                  secs=round(time.time() - t0))) + "\n")
        return None
    out.write(json.dumps(dict(
        tag=tag, steps=res.metrics[-1][0], final=round(res.metrics[-1][1], 6),
        eval=round(res.final_eval.mean, 6), lf=round(res.metrics[-1][2], 4),
        curve=curve, secs=round(time.time() - t0))) + "\n")
    return res


# -- manifold: 16 glyphs 16x16, acceptance config --------------------------------
manifold = gen_glyphs(16, 16, "lines", seed=7)
MAN = dict(update="synchronous", total_steps=2000, batch_size=8, lr=1.5e-3,
           lr_decay="cosine", encoding_dim=64, channels=16, nca_hidden=32,
           steps=32, enc_width=16, pred_width=128, seed=0, ckpt_every=0)
ce = run("manifold-CE", manifold, mode="continuous", **MAN)
dna = run("manifold-DNA", manifold, mode="dna", mutation_rate=0.5, **MAN)
if ce and dna:
    clean = evaluate(dna.model, manifold).mean
    noisy = evaluate(dna.model, manifold, mutation_rate=0.5, n_seeds=5).mean
    disc = evaluate(dna.model, manifold, discretize_codes=True).mean
    out.write(json.dumps(dict(tag="parity", ce=round(ce.final_eval.mean, 6),
                              dna=round(clean, 6), dna_mut=round(noisy, 6),
                              dna_disc=round(disc, 6))) + "\n")

# -- harder ablation task: 24 round glyphs at 16x16 ------------------------------
hard = gen_glyphs(24, 16, "round", seed=11)
HARD = dict(mode="continuous", update="synchronous", total_steps=700,
            batch_size=8, lr=1e-3, encoding_dim=32, steps=32,
            enc_width=16, pred_width=64, ckpt_every=0)
for seed in (0, 1, 2):
    for tag, kw in [("full", {}), ("noLF", dict(use_lf=False)),
                    ("noNorm", dict(use_norm=False)),
                    ("noSlices", dict(use_slices=False))]:
        run(f"hard-{tag}-s{seed}", hard, seed=seed, **HARD, **kw)

# -- difficulty ordering at the same scale ---------------------------------------
lines_ds = gen_glyphs(24, 16, "lines", seed=11)
for seed in (0, 1, 2):
    run(f"lines-s{seed}", lines_ds, seed=seed, **HARD)
out.write("DONE4\n")
