"""Command-line surface: train, eval, grow, encode, splice, export-dna,
serve, gen-dataset.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric divergence.
The NCAM_SEED environment variable overrides the default rng seed of any
verb that takes --seed.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoint import Checkpoint
from .datasets import gen_glyphs, resolve_dataset
from .dna import discretize, format_dna_file, from_letters, mutate, parse_dna_file
from .genelab import grow_from_dna, mean_encoding, splice
from .images import b64_png, make_strip, save_gif, save_png
from .training import DivergenceError, TrainConfig, evaluate, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4


def _default_seed() -> int:
    return int(os.environ.get("NCAM_SEED", "0"))


def _add_seed(p):
    p.add_argument("--seed", type=int, default=_default_seed(),
                   help="rng seed (env NCAM_SEED overrides the default)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ncam", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="verb", required=True)

    t = sub.add_parser("train", help="train a model on a dataset")
    t.add_argument("--dataset", required=True,
                   help="glyphs:style=lines,n=16,size=16,seed=7 | png:DIR | cifar10:PATH")
    t.add_argument("--downscale", type=int, default=None)
    t.add_argument("--mode", choices=("continuous", "dna"), default="continuous")
    t.add_argument("--update", choices=("synchronous", "stochastic"),
                   default="synchronous")
    t.add_argument("--steps", type=int, default=2000, help="optimizer steps")
    t.add_argument("--nca-steps", type=int, default=32)
    t.add_argument("--channels", type=int, default=16)
    t.add_argument("--hidden", type=int, default=32)
    t.add_argument("--encoding-dim", type=int, default=64)
    t.add_argument("--enc-width", type=int, default=16)
    t.add_argument("--enc-fcb-expansion", type=int, default=2)
    t.add_argument("--pred-width", type=int, default=128)
    t.add_argument("--batch-size", type=int, default=8)
    t.add_argument("--lr", type=float, default=2e-4)
    t.add_argument("--mutation-rate", type=float, default=0.5)
    t.add_argument("--stop-at-loss", type=float, default=None)
    t.add_argument("--no-lf", action="store_true", help="freeze leak factors at 1.0")
    t.add_argument("--no-norm", action="store_true", help="disable instance norm")
    t.add_argument("--no-slices", action="store_true", help="mean-only pooling")
    t.add_argument("--out", required=True, help="checkpoint output path")
    t.add_argument("--log", default=None, help="metrics log path")
    _add_seed(t)

    e = sub.add_parser("eval", help="per-image and mean reconstruction MSE")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--dataset", default=None,
                   help="defaults to the dataset recorded in the checkpoint")
    e.add_argument("--downscale", type=int, default=None)
    e.add_argument("--seeds", type=int, default=5,
                   help="stochastic models: number of evaluation seeds")
    e.add_argument("--mutation-rate", type=float, default=0.0)
    e.add_argument("--discretize", action="store_true",
                   help="evaluate one-hot (discretized) codes instead of soft")
    _add_seed(e)

    g = sub.add_parser("grow", help="grow one image and emit frames")
    g.add_argument("--ckpt", required=True)
    g.add_argument("--image-id", required=True)
    g.add_argument("--dataset", default=None)
    g.add_argument("--downscale", type=int, default=None)
    g.add_argument("--frames-every", type=int, default=4)
    g.add_argument("--out", default="growth", help="output directory")
    g.add_argument("--scale", type=int, default=4, help="pixel upscaling for PNGs")
    _add_seed(g)

    n = sub.add_parser("encode", help="print an image's DNA letters")
    n.add_argument("--ckpt", required=True)
    n.add_argument("--image-id", required=True)
    n.add_argument("--dataset", default=None)
    n.add_argument("--downscale", type=int, default=None)

    x = sub.add_parser("export-dna", help="write a DNA letter-string file")
    x.add_argument("--ckpt", required=True)
    x.add_argument("--image-id", required=True)
    x.add_argument("--dataset", default=None)
    x.add_argument("--downscale", type=int, default=None)
    x.add_argument("--out", required=True)

    s = sub.add_parser("splice", help="mean sources, splice into target, regrow")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--recipe", default=None,
                   help="JSON recipe file {source_ids, tau, target_id[, seed]} "
                        "(overrides --sources/--tau/--target)")
    s.add_argument("--sources", default=None, help="comma-separated image ids")
    s.add_argument("--tau", type=float, default=0.7)
    s.add_argument("--target", default=None)
    s.add_argument("--dataset", default=None)
    s.add_argument("--downscale", type=int, default=None)
    s.add_argument("--frames-every", type=int, default=4)
    s.add_argument("--out", default="splice", help="output directory")
    s.add_argument("--scale", type=int, default=4)
    _add_seed(s)

    v = sub.add_parser("serve", help="HTTP inference/gene-lab service")
    v.add_argument("--ckpt", required=True)
    v.add_argument("--dataset", default=None)
    v.add_argument("--downscale", type=int, default=None)
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--port", type=int, default=8321)
    _add_seed(v)

    d = sub.add_parser("gen-dataset", help="write procedural glyphs as PNGs")
    d.add_argument("--style", choices=("lines", "round"), default="lines")
    d.add_argument("--n", type=int, default=16)
    d.add_argument("--size", type=int, default=16)
    d.add_argument("--out", required=True)
    _add_seed(d)
    return ap


def _load_ckpt(path: str) -> Checkpoint:
    if not Path(path).exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return Checkpoint.load(path)


def _dataset_for(ckpt: Checkpoint, spec, downscale):
    if spec is None:
        spec = ckpt.meta.get("dataset_spec")
        if spec is None:
            raise ValueError("checkpoint records no dataset; pass --dataset")
    return resolve_dataset(spec, downscale=downscale)


def _encode_id(model, dataset, image_id):
    idx = dataset.index_of(image_id)
    with ad.no_grad():
        e = model.encode(dataset.images[idx])
        if model.codec is None:
            return e, None
        return e, discretize(model.codec.encode(e))


def cmd_train(args) -> int:
    ds = resolve_dataset(args.dataset, downscale=args.downscale)
    cfg = TrainConfig(
        mode=args.mode, update=args.update, total_steps=args.steps,
        batch_size=args.batch_size, lr=args.lr, mutation_rate=args.mutation_rate,
        encoding_dim=args.encoding_dim, channels=args.channels,
        nca_hidden=args.hidden, steps=args.nca_steps, enc_width=args.enc_width,
        enc_fcb_expansion=args.enc_fcb_expansion, pred_width=args.pred_width,
        use_lf=not args.no_lf, use_norm=not args.no_norm,
        use_slices=not args.no_slices, seed=args.seed,
        stop_at_loss=args.stop_at_loss)
    try:
        res = train(ds, cfg, ckpt_path=args.out, log_path=args.log)
    except DivergenceError as e:
        print(f"diverged: {e}; last finite checkpoint kept at {args.out}",
              file=sys.stderr)
        return EXIT_DIVERGED
    res.checkpoint.meta["dataset_spec"] = args.dataset
    res.checkpoint.save(args.out)
    print(f"trained {res.metrics[-1][0]} steps; final loss "
          f"{res.metrics[-1][1]:.6f}; eval MSE {res.final_eval.mean:.6f}; "
          f"checkpoint -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = _load_ckpt(args.ckpt)
    ds = _dataset_for(ckpt, args.dataset, args.downscale)
    rep = evaluate(ckpt, ds, n_seeds=args.seeds, base_seed=args.seed,
                   mutation_rate=args.mutation_rate,
                   discretize_codes=args.discretize)
    print("id,mse,sd")
    print(rep)
    return EXIT_OK


def cmd_grow(args) -> int:
    ckpt = _load_ckpt(args.ckpt)
    ds = _dataset_for(ckpt, args.dataset, args.downscale)
    model = ckpt.build_model()
    idx = ds.index_of(args.image_id)
    img, frames = model.reconstruct_single(
        ds.images[idx], rng_seed=args.seed, frames_every=args.frames_every)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        save_png(outdir / f"frame_{i:04d}.png", frame, scale=args.scale)
    save_gif(outdir / "growth.gif", frames, scale=args.scale)
    save_png(outdir / "strip.png", make_strip(frames), scale=args.scale)
    mse = float(((img - ds.images[idx]) ** 2).mean())
    print(f"grew {args.image_id}: {len(frames)} frames -> {outdir}; mse {mse:.6f}")
    return EXIT_OK


def cmd_encode(args) -> int:
    ckpt = _load_ckpt(args.ckpt)
    ds = _dataset_for(ckpt, args.dataset, args.downscale)
    model = ckpt.build_model()
    _, dna = _encode_id(model, ds, args.image_id)
    if dna is None:
        raise ValueError("checkpoint is continuous-mode; encode needs a dna-mode model")
    sys.stdout.write(format_dna_file(dna))
    return EXIT_OK


def cmd_export_dna(args) -> int:
    ckpt = _load_ckpt(args.ckpt)
    ds = _dataset_for(ckpt, args.dataset, args.downscale)
    model = ckpt.build_model()
    _, dna = _encode_id(model, ds, args.image_id)
    if dna is None:
        raise ValueError("checkpoint is continuous-mode; export-dna needs a dna-mode model")
    Path(args.out).write_text(format_dna_file(dna))
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_splice(args) -> int:
    import json

    ckpt = _load_ckpt(args.ckpt)
    ds = _dataset_for(ckpt, args.dataset, args.downscale)
    model = ckpt.build_model()
    source_ids, tau, target_id, seed = args.sources, args.tau, args.target, args.seed
    if args.recipe:
        recipe = json.loads(Path(args.recipe).read_text())
        source_ids = ",".join(str(s) for s in recipe["source_ids"])
        tau = float(recipe.get("tau", tau))
        target_id = str(recipe["target_id"])
        seed = int(recipe.get("seed", seed))
    if not source_ids or target_id is None:
        raise ValueError("need --sources and --target (or a --recipe file)")
    source_ids = [s for s in source_ids.split(",") if s]
    if not source_ids:
        raise ValueError("no source ids given")
    sources = [_encode_id(model, ds, sid)[1] for sid in source_ids]
    if any(s is None for s in sources):
        raise ValueError("splice needs a dna-mode model")
    mean = mean_encoding(sources, tau)
    target = _encode_id(model, ds, target_id)[1]
    spliced = splice(target, mean)
    img, frames = grow_from_dna(spliced, model, rng_seed=seed,
                                frames_every=args.frames_every)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    save_png(outdir / "spliced.png", img, scale=args.scale)
    save_gif(outdir / "growth.gif", frames, scale=args.scale)
    (outdir / "spliced.dna").write_text(format_dna_file(spliced))
    print(f"spliced {len(source_ids)} sources (tau={tau}, "
          f"{mean.asserted_count} asserted genes) into {target_id} -> {outdir}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import make_server

    ckpt = _load_ckpt(args.ckpt)
    ds = _dataset_for(ckpt, args.dataset, args.downscale)
    server = make_server(ckpt, ds, host=args.host, port=args.port,
                         default_seed=args.seed)
    host, port = server.server_address[:2]
    print(f"serving {args.ckpt} on http://{host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def cmd_gen_dataset(args) -> int:
    ds = gen_glyphs(args.n, args.size, args.style, seed=args.seed)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for i, img_id in enumerate(ds.ids):
        save_png(outdir / f"{img_id}.png", ds.images[i])
    print(f"wrote {len(ds)} glyphs -> {outdir}")
    return EXIT_OK


_COMMANDS = {
    "train": cmd_train, "eval": cmd_eval, "grow": cmd_grow, "encode": cmd_encode,
    "export-dna": cmd_export_dna, "splice": cmd_splice, "serve": cmd_serve,
    "gen-dataset": cmd_gen_dataset,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        return _COMMANDS[args.verb](args)
    except (FileNotFoundError, KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
