"""Calibration sweep 5: why does the DNA path stall? Isolate mutation noise."""
import json
import time

import numpy as np

from ncam.datasets import gen_glyphs
from ncam.training import TrainConfig, evaluate, train

out = open("/root/pkg/scripts/cal5.log", "a", buffering=1)
manifold = gen_glyphs(16, 16, "lines", seed=7)
BASE = dict(mode="dna", update="synchronous", total_steps=600, batch_size=8,
            lr=1.5e-3, encoding_dim=64, channels=16, nca_hidden=32, steps=32,
            enc_width=16, pred_width=128, seed=0, ckpt_every=0)


def run(tag, **kw):
    t0 = time.time()
    curve = []
    res = train(manifold, TrainConfig(**{**BASE, **kw}),
                on_step=lambda s, l: curve.append((s, round(l, 5)))
                if s % 100 == 0 else None)
    out.write(json.dumps(dict(tag=tag, final=round(res.metrics[-1][1], 6),
                              eval=round(res.final_eval.mean, 6),
                              curve=curve, secs=round(time.time() - t0))) + "\n")
    return res


run("dna-mut0.0", mutation_rate=0.0)
run("dna-mut0.1", mutation_rate=0.1)
run("dna-mut0.5", mutation_rate=0.5)
run("dna-mut0.5-lr3e-3", mutation_rate=0.5, lr=3e-3)
out.write("DONE5\n")
