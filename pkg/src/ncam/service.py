"""Read-only HTTP service over a trained checkpoint: inference + gene lab.

JSON request/response bodies; images travel as base64 PNG.  All shared
state (model, dataset, precomputed encodings) is immutable after startup,
so concurrent request handling is safe.  Identical requests (including
the seed fields) produce identical responses.

Endpoints:
  GET  /images             dataset ids + thumbnails
  POST /encode             {image_id} -> DNA letters + soft-prob summary
  POST /grow               {dna | image_id, frames_every?, seed?} -> frames
  POST /mean               {source_ids, tau, frames_every?, seed?}
  POST /splice             {source_ids, tau, target_id, frames_every?, seed?}
  POST /mutate             {dna, rate, seed?, frames_every?} -> mutated + frames
"""

from __future__ import annotations

import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from . import autodiff as ad
from .checkpoint import Checkpoint
from .datasets import Dataset
from .dna import DnaEncoding, discretize, from_letters, mutate, to_letters, LETTERS
from .genelab import grow_from_dna, mean_encoding, splice
from .images import b64_png

DEFAULT_FRAMES_EVERY = 4


class ApiError(Exception):
    def __init__(self, status: int, message: str, field: str | None = None):
        super().__init__(message)
        self.status = status
        self.field = field


class NcamService:
    """Request-independent core: owns the model, dataset and code cache."""

    def __init__(self, ckpt: Checkpoint, dataset: Dataset, default_seed: int = 0):
        self.model = ckpt.build_model()
        mc = self.model.cfg
        if (dataset.visible, dataset.height, dataset.width) != \
                (mc.visible, mc.height, mc.width):
            raise ValueError(
                f"dataset images {(dataset.visible, dataset.height, dataset.width)} "
                f"do not match the checkpoint's {(mc.visible, mc.height, mc.width)}")
        self.dataset = dataset
        self.default_seed = default_seed
        with ad.no_grad():
            self.encodings = self.model.encode(dataset.images).data
            self.codes = None
            if self.model.codec is not None:
                soft = self.model.codec.encode(self.model.encode(dataset.images))
                self.soft_probs = soft.probs.data
                self.codes = [discretize(DnaEncoding(ad.Tensor(p)))
                              for p in self.soft_probs]

    # -- helpers -----------------------------------------------------------

    def _index(self, image_id, field="image_id") -> int:
        try:
            return self.dataset.index_of(str(image_id))
        except KeyError:
            raise ApiError(404, f"unknown image id {image_id!r}", field) from None

    def _need_dna(self):
        if self.codes is None:
            raise ApiError(400, "checkpoint is continuous-mode; DNA endpoints "
                           "need a dna-mode model", "ckpt")

    def _code_of(self, idx: int) -> DnaEncoding:
        self._need_dna()
        return self.codes[idx]

    def _parse_dna(self, letters, field="dna") -> DnaEncoding:
        if not isinstance(letters, str):
            raise ApiError(400, "dna must be a letter string", field)
        try:
            dna = from_letters(letters)
        except ValueError as e:
            raise ApiError(400, str(e), field) from None
        if dna.d != self.model.cfg.encoding_dim:
            raise ApiError(400, f"dna has D={dna.d}, model expects "
                           f"D={self.model.cfg.encoding_dim}", field)
        return dna

    def _grow_frames(self, dna: DnaEncoding, frames_every: int, seed):
        img, frames = grow_from_dna(dna, self.model, rng_seed=seed,
                                    frames_every=frames_every)
        return img, [b64_png(f, scale=4) for f in frames]

    def _sources(self, body) -> list:
        ids = body.get("source_ids")
        if not isinstance(ids, list) or not ids:
            raise ApiError(400, "source_ids must be a non-empty list", "source_ids")
        return [self._code_of(self._index(i, "source_ids")) for i in ids]

    @staticmethod
    def _tau(body) -> float:
        tau = body.get("tau", 0.7)
        if not isinstance(tau, (int, float)) or not 0.25 < tau <= 1.0:
            raise ApiError(400, f"tau must lie in (0.25, 1], got {tau}", "tau")
        return float(tau)

    def _frames_every(self, body) -> int:
        fe = body.get("frames_every", DEFAULT_FRAMES_EVERY)
        if not isinstance(fe, int) or fe < 1:
            raise ApiError(400, "frames_every must be a positive integer",
                           "frames_every")
        return fe

    def _seed(self, body) -> int:
        seed = body.get("seed", self.default_seed)
        if not isinstance(seed, int):
            raise ApiError(400, "seed must be an integer", "seed")
        return seed

    # -- endpoints ------------------------------------------------------------

    def get_images(self) -> dict:
        return {
            "count": len(self.dataset),
            "mode": self.model.cfg.mode,
            "encoding_dim": self.model.cfg.encoding_dim,
            "tau_stops": [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95],
            "images": [{"id": i, "png": b64_png(img, scale=4)}
                       for i, img in zip(self.dataset.ids, self.dataset.images)],
        }

    def post_encode(self, body) -> dict:
        idx = self._index(body.get("image_id"))
        self._need_dna()
        dna = self.codes[idx]
        soft = self.soft_probs[idx]
        letters = to_letters(dna)
        return {
            "image_id": self.dataset.ids[idx],
            "letters": letters,
            "d": dna.d,
            "probs_summary": {
                "mean_confidence": float(soft.max(axis=-1).mean()),
                "category_counts": {c: letters.count(c) for c in LETTERS},
            },
        }

    def post_grow(self, body) -> dict:
        fe = self._frames_every(body)
        seed = self._seed(body)
        with ad.no_grad():
            if body.get("dna") is not None:
                self._need_dna()
                dna = self._parse_dna(body["dna"])
                img, frames = self._grow_frames(dna, fe, seed)
            elif body.get("image_id") is not None:
                idx = self._index(body["image_id"])
                img, raw = self.model.reconstruct_single(
                    self.dataset.images[idx], rng_seed=seed, frames_every=fe)
                frames = [b64_png(f, scale=4) for f in raw]
            else:
                raise ApiError(400, "need either dna or image_id", "dna")
        return {"frames": frames, "final": b64_png(img, scale=4),
                "steps": self.model.cfg.steps}

    def post_mean(self, body) -> dict:
        sources = self._sources(body)
        tau = self._tau(body)
        mean = mean_encoding(sources, tau)
        with ad.no_grad():
            img, frames = self._grow_frames(
                DnaEncoding(mean.probs), self._frames_every(body), self._seed(body))
        return {"asserted": mean.asserted_count, "total": mean.d * 16,
                "pattern": mean.pattern(), "tau": tau,
                "frames": frames, "final": b64_png(img, scale=4)}

    def post_splice(self, body) -> dict:
        sources = self._sources(body)
        tau = self._tau(body)
        target = self._code_of(self._index(body.get("target_id"), "target_id"))
        mean = mean_encoding(sources, tau)
        spliced = splice(target, mean)
        with ad.no_grad():
            img, frames = self._grow_frames(spliced, self._frames_every(body),
                                            self._seed(body))
        return {"dna": to_letters(spliced), "asserted": mean.asserted_count,
                "tau": tau, "frames": frames, "final": b64_png(img, scale=4)}

    def post_mutate(self, body) -> dict:
        self._need_dna()
        dna = self._parse_dna(body.get("dna"))
        rate = body.get("rate", 0.5)
        if not isinstance(rate, (int, float)) or not 0.0 <= rate <= 1.0:
            raise ApiError(400, f"rate must lie in [0, 1], got {rate}", "rate")
        seed = self._seed(body)
        mutated = mutate(dna, float(rate), seed)
        with ad.no_grad():
            img, frames = self._grow_frames(mutated, self._frames_every(body), seed)
        return {"dna": to_letters(mutated), "rate": float(rate), "seed": seed,
                "frames": frames, "final": b64_png(img, scale=4)}


_ROUTES = {
    ("GET", "/images"): lambda svc, body: svc.get_images(),
    ("POST", "/encode"): NcamService.post_encode,
    ("POST", "/grow"): NcamService.post_grow,
    ("POST", "/mean"): NcamService.post_mean,
    ("POST", "/splice"): NcamService.post_splice,
    ("POST", "/mutate"): NcamService.post_mutate,
}


class _Handler(BaseHTTPRequestHandler):
    service: NcamService = None  # set by make_server

    def log_message(self, fmt, *args):
        pass

    def _send(self, status: int, payload: dict):
        blob = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()
        self.wfile.write(blob)

    def _dispatch(self, method: str):
        key = (method, self.path.split("?", 1)[0])
        handler = _ROUTES.get(key)
        if handler is None:
            self._send(404, {"error": f"no route {method} {self.path}"})
            return
        body = {}
        if method == "POST":
            try:
                length = int(self.headers.get("Content-Length", "0"))
                body = json.loads(self.rfile.read(length) or b"{}")
                if not isinstance(body, dict):
                    raise ValueError("body must be a JSON object")
            except (ValueError, json.JSONDecodeError) as e:
                self._send(400, {"error": f"malformed JSON body: {e}", "field": "body"})
                return
        try:
            self._send(200, handler(self.service, body))
        except ApiError as e:
            self._send(e.status, {"error": str(e), "field": e.field})
        except Exception as e:  # pragma: no cover - defensive
            self._send(500, {"error": f"internal error: {e}"})

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_OPTIONS(self):
        self._send(200, {})


def make_server(ckpt: Checkpoint, dataset: Dataset, host="127.0.0.1", port=8321,
                default_seed=0) -> ThreadingHTTPServer:
    service = NcamService(ckpt, dataset, default_seed=default_seed)
    handler = type("BoundHandler", (_Handler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)


def serve(ckpt: Checkpoint, dataset: Dataset, host="127.0.0.1", port=8321,
          default_seed=0) -> None:
    server = make_server(ckpt, dataset, host=host, port=port,
                         default_seed=default_seed)
    try:
        server.serve_forever()
    finally:
        server.server_close()
