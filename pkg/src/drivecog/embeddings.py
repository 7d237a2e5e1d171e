"""4096-dim image embedding providers.

Real CNN features are computed outside this package and carried in an
embedding file; :class:`PseudoEmbedder` is a seeded, dependency-free stand-in
that keeps the pipeline runnable end to end.

Embedding file layout (all integers little-endian)::

    magic      8 bytes   b"DCOGEMB1"
    hlen       uint32    length of the JSON header
    header     hlen bytes UTF-8 JSON {"provider_id", "dim", "count", "metadata"}
    count records, each:
        klen   uint16
        key    klen bytes UTF-8
        vector dim x float32 (little-endian)

Adapter protocol: a request directory holds ``request.json`` (``{"keys":
{key: "images/<file>.png"}}``) and the PNG images; an external tool writes
an embedding file with one record per key.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import sparse

EMBED_DIM = 4096
IMAGE_SHAPE = (224, 224, 3)
POOL = 4
MAGIC = b"DCOGEMB1"


class EmbeddingKeyError(KeyError):
    pass


def check_image(image):
    px = getattr(image, "pixels", image)
    px = np.asarray(px)
    if px.shape != IMAGE_SHAPE or px.dtype != np.uint8:
        raise ValueError(f"expected a {IMAGE_SHAPE} uint8 image, got {px.shape} {px.dtype}")
    return px


def image_key(image):
    """Content hash used to look images up in an embedding file."""
    px = check_image(image)
    return "sha256:" + hashlib.sha256(np.ascontiguousarray(px).tobytes()).hexdigest()


class PseudoEmbedder:
    """Mean-pool to 56x56x3, sparse seeded projection to 4096, then ReLU.

    Each output mixes ``taps`` pooled pixels with weights of +-1/sqrt(taps),
    so every row has unit norm and the map is 1-Lipschitz per row.
    """

    deterministic = True

    def __init__(self, seed=0, taps=64):
        self.seed = int(seed)
        self.taps = int(taps)
        self.provider_id = f"pseudo-v1:seed={self.seed}:taps={self.taps}"
        n_in = (IMAGE_SHAPE[0] // POOL) * (IMAGE_SHAPE[1] // POOL) * IMAGE_SHAPE[2]
        rng = np.random.default_rng(self.seed)
        cols = np.stack([rng.choice(n_in, self.taps, replace=False) for _ in range(EMBED_DIM)])
        vals = rng.choice([-1.0, 1.0], size=cols.shape) / np.sqrt(self.taps)
        rows = np.repeat(np.arange(EMBED_DIM), self.taps)
        self.projection = sparse.csr_matrix((vals.ravel(), (rows, cols.ravel())),
                                            shape=(EMBED_DIM, n_in))

    @staticmethod
    def pool(px):
        """4x4 mean pooling of one image or an (n, 224, 224, 3) stack, scaled to [0, 1]."""
        px = np.asarray(px)
        lead = px.shape[:-3]
        h, w, c = px.shape[-3:]
        # exact integer block sums: rows first, then columns (uint16 cannot overflow)
        rows = px.reshape(lead + (h // POOL, POOL, w * c))
        acc = rows[..., 0, :].astype(np.uint16)
        for k in range(1, POOL):
            acc += rows[..., k, :]
        cols = acc.reshape(lead + (h // POOL, w // POOL, POOL * c))
        blocks = cols[..., :c].copy()
        for k in range(1, POOL):
            blocks += cols[..., k * c:(k + 1) * c]
        return blocks.reshape(lead + (-1,)) / (255.0 * POOL * POOL)

    def embed(self, image, key=None):
        px = check_image(image)
        return np.maximum(self.projection @ self.pool(px), 0.0)

    def embed_many(self, images):
        if isinstance(images, np.ndarray) and images.ndim == 4:
            if images.shape[1:] != IMAGE_SHAPE or images.dtype != np.uint8:
                raise ValueError(f"expected (n, 224, 224, 3) uint8 images, got {images.shape}")
            pooled = self.pool(images)
        else:
            pooled = np.stack([self.pool(check_image(im)) for im in images])
        return np.maximum(self.projection @ pooled.T, 0.0).T


class FileEmbedder:
    """Precomputed vectors looked up by content hash or by explicit key."""

    deterministic = True

    def __init__(self, table, provider_id="file", metadata=None):
        self.table = {}
        for k, v in table.items():
            v = np.asarray(v, dtype="<f4")
            if v.shape != (EMBED_DIM,):
                raise ValueError(f"record {k!r} has shape {v.shape}, expected ({EMBED_DIM},)")
            v.setflags(write=False)
            self.table[k] = v
        self.provider_id = provider_id
        self.metadata = dict(metadata or {})

    @classmethod
    def load(cls, path):
        provider_id, metadata, table = read_embedding_file(path)
        return cls(table, provider_id, metadata)

    def lookup(self, key):
        try:
            return self.table[key].astype(float)
        except KeyError:
            raise EmbeddingKeyError(f"no stored embedding for key {key!r}") from None

    def embed(self, image, key=None):
        if key is not None and key in self.table:
            return self.lookup(key)
        h = image_key(image)
        if h in self.table:
            return self.lookup(h)
        raise EmbeddingKeyError(f"no stored embedding for key {key!r} or image {h[:20]}...")

    def embed_many(self, images, keys=None):
        keys = keys or [None] * len(images)
        return np.stack([self.embed(im, k) for im, k in zip(images, keys)])


def write_embedding_file(path, vectors, provider_id, metadata=None):
    """``vectors`` maps key -> 4096 values; records are written in key order."""
    keys = sorted(vectors)
    header = json.dumps({"provider_id": provider_id, "dim": EMBED_DIM, "count": len(keys),
                         "metadata": metadata or {}}, sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", len(header)), header]
    for k in keys:
        v = np.asarray(vectors[k], dtype="<f4")
        if v.shape != (EMBED_DIM,):
            raise ValueError(f"record {k!r} has shape {v.shape}")
        kb = k.encode("utf-8")
        chunks += [struct.pack("<H", len(kb)), kb, v.tobytes()]
    Path(path).write_bytes(b"".join(chunks))


def read_embedding_file(path):
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise ValueError(f"{path}: not an embedding file")
    (hlen,) = struct.unpack_from("<I", buf, 8)
    header = json.loads(buf[12:12 + hlen].decode("utf-8"))
    if header.get("dim") != EMBED_DIM:
        raise ValueError(f"{path}: dim {header.get('dim')} != {EMBED_DIM}")
    off, table = 12 + hlen, {}
    for _ in range(header["count"]):
        (klen,) = struct.unpack_from("<H", buf, off)
        key = buf[off + 2:off + 2 + klen].decode("utf-8")
        off += 2 + klen
        table[key] = np.frombuffer(buf, dtype="<f4", count=EMBED_DIM, offset=off).copy()
        off += 4 * EMBED_DIM
    if off != len(buf):
        raise ValueError(f"{path}: {len(buf) - off} trailing bytes")
    return header["provider_id"], header.get("metadata", {}), table


def write_adapter_request(images, out_dir):
    """Write ``{key: image}`` as PNGs plus ``request.json`` for an external embedder."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    entries = {}
    for n, key in enumerate(sorted(images)):
        rel = f"images/{n:06d}.png"
        Image.fromarray(check_image(images[key])).save(out / rel, format="PNG")
        entries[key] = rel
    (out / "request.json").write_text(json.dumps({"dim": EMBED_DIM, "keys": entries},
                                                 indent=2, sort_keys=True) + "\n")
    return out / "request.json"


def run_adapter(request_dir, provider, out_path, metadata=None):
    """Reference adapter: embed every requested image with ``provider``."""
    req_dir = Path(request_dir)
    req = json.loads((req_dir / "request.json").read_text())
    vectors = {}
    for key, rel in req["keys"].items():
        px = np.asarray(Image.open(req_dir / rel).convert("RGB"), dtype=np.uint8)
        vectors[key] = provider.embed(px, key=key)
    write_embedding_file(out_path, vectors, provider.provider_id, metadata)
    return out_path


def embed_trial_frames(images, provider, keys=None, whole_trial=False):
    """Trial-level embedding features.

    ``whole_trial=True`` expects exactly one image (a topomap) and returns its
    4096-vector.  Otherwise the per-frame vectors are summarized as three
    4096 blocks: mean, 95th percentile, population std.
    """
    if not (isinstance(images, np.ndarray) and images.ndim == 4):
        images = list(images)
    if len(images) == 0:
        raise ValueError("empty image sequence")
    if whole_trial:
        if len(images) != 1:
            raise ValueError(f"whole-trial path takes exactly one image, got {len(images)}")
        return provider.embed(images[0], key=keys[0] if keys else None)
    if len(images) < 2:
        raise ValueError("frame statistics need at least 2 frames")
    if keys is None and isinstance(provider, PseudoEmbedder):
        vecs = provider.embed_many(images)
    else:
        keys = keys or [None] * len(images)
        vecs = np.stack([provider.embed(im, key=k) for im, k in zip(images, keys)])
    return embedding_statistics(vecs)


def embedding_statistics(vecs):
    vecs = np.asarray(vecs, dtype=float)
    # centring on the first frame makes repeated frames give exactly std 0
    dev = vecs - vecs[0]
    mean = vecs[0] + dev.mean(axis=0)
    return np.concatenate([mean,
                           np.percentile(vecs, 95, axis=0, method="linear"),
                           np.sqrt(np.mean((vecs - mean) ** 2, axis=0))])
