"""Text embeddings and an exact cosine-similarity index with a fixed binary file format."""

from __future__ import annotations

import hashlib
import io
import os
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import requests

from .errors import BackendError, DataError, SchemaError
from .taxonomy import TimeInterval

MAGIC = b"CIFVIDX1"
EMBED_ENDPOINT_ENV = "CIFWATCH_EMBED_ENDPOINT"
DEFAULT_DIM = 256

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray
    norm: float

    @classmethod
    def of(cls, values) -> "EmbeddingVector":
        arr = np.asarray(values, dtype=np.float64)
        return cls(arr, float(np.linalg.norm(arr)))

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity; -1 if either side is the zero vector."""
    if a.norm == 0.0 or b.norm == 0.0:
        return -1.0
    return float(np.dot(a.values, b.values) / (a.norm * b.norm))


class EmbeddingProvider(Protocol):
    def dim(self) -> int: ...

    def embed(self, text: str) -> EmbeddingVector: ...


def tokenize(text: str) -> list[str]:
    return [tok for tok in _TOKEN_SPLIT.split(text.casefold()) if tok]


def _feature_hash(feature: str, seed: int) -> int:
    digest = hashlib.blake2b(
        feature.encode("utf-8"), digest_size=8, key=seed.to_bytes(8, "little", signed=True)
    ).digest()
    return int.from_bytes(digest, "little")


def embed_text_deterministic(text: str, dim: int = DEFAULT_DIM, seed: int = 0) -> EmbeddingVector:
    """Signed feature hashing of unigrams and bigrams, L2-normalized.

    Text with no tokens maps to the zero vector.
    """
    if dim < 8:
        raise ValueError("dim must be >= 8")
    tokens = tokenize(text)
    features = tokens + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
    vec = np.zeros(dim, dtype=np.float64)
    for feat in features:
        h = _feature_hash(feat, seed)
        vec[(h >> 1) % dim] += 1.0 if h & 1 else -1.0
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
        norm = float(np.linalg.norm(vec))
    return EmbeddingVector(vec, norm)


class HashingEmbedder:
    def __init__(self, dim: int = DEFAULT_DIM, seed: int = 0):
        if dim < 8:
            raise ValueError("dim must be >= 8")
        self._dim = dim
        self.seed = seed

    def dim(self) -> int:
        return self._dim

    def embed(self, text: str) -> EmbeddingVector:
        return embed_text_deterministic(text, self._dim, self.seed)

    def describe(self) -> dict:
        return {"provider": "mock", "dim": self._dim, "seed": self.seed}


class RemoteEmbedder:
    """POSTs ``{"model", "input"}`` and reads ``embedding`` or ``data[0].embedding``."""

    def __init__(self, endpoint: str | None, model: str, dim: int, timeout: float = 60.0,
                 session: requests.Session | None = None):
        endpoint = os.environ.get(EMBED_ENDPOINT_ENV) or endpoint
        if not endpoint:
            raise BackendError(f"no embedding endpoint (set {EMBED_ENDPOINT_ENV})")
        self.endpoint = endpoint
        self.model = model
        self._dim = dim
        self.timeout = timeout
        self.session = session or requests.Session()

    def dim(self) -> int:
        return self._dim

    def embed(self, text: str) -> EmbeddingVector:
        try:
            resp = self.session.post(self.endpoint, json={"model": self.model, "input": text},
                                     timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendError(f"embedding request failed: {exc}") from exc
        if not 200 <= resp.status_code < 300:
            raise BackendError(f"HTTP {resp.status_code} from {self.endpoint}",
                               status=resp.status_code)
        body = resp.json()
        values = body.get("embedding")
        if values is None and body.get("data"):
            values = body["data"][0].get("embedding")
        if values is None:
            raise BackendError("no embedding in response")
        vec = EmbeddingVector.of(values)
        if vec.dim != self._dim:
            raise BackendError(f"expected {self._dim}-dim embedding, got {vec.dim}")
        return vec

    def describe(self) -> dict:
        return {"provider": "remote", "dim": self._dim, "model": self.model}


# -- index ------------------------------------------------------------------


@dataclass(frozen=True)
class Hit:
    tweet_id: str
    score: float
    interval: TimeInterval


class VectorIndex:
    """Brute-force cosine index. Vectors are stored as float32, scored in float64."""

    def __init__(self, dim: int, ids: Sequence[str], intervals: Sequence[int], vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=np.float32).reshape(len(ids), dim)
        if len(set(ids)) != len(ids):
            raise DataError("duplicate tweet ids in index")
        self.dim = dim
        self.ids = list(ids)
        self.intervals = np.asarray(intervals, dtype=np.uint8).reshape(len(ids))
        self.vectors = vectors
        wide = vectors.astype(np.float64)
        self._wide = wide
        self._norms = np.linalg.norm(wide, axis=1)
        # Rank of each id in ascending string order, for tie-breaking.
        order = sorted(range(len(self.ids)), key=self.ids.__getitem__)
        self._id_rank = np.empty(len(self.ids), dtype=np.int64)
        self._id_rank[order] = np.arange(len(self.ids))

    def __len__(self) -> int:
        return len(self.ids)

    def scores(self, query: EmbeddingVector) -> np.ndarray:
        if query.dim != self.dim:
            raise DataError(f"query dim {query.dim} != index dim {self.dim}")
        out = np.full(len(self.ids), -1.0)
        if query.norm == 0.0 or not len(self.ids):
            return out
        ok = self._norms > 0.0
        out[ok] = (self._wide[ok] @ query.values) / (self._norms[ok] * query.norm)
        return out

    def search(self, query: EmbeddingVector, k: int,
               interval: TimeInterval = TimeInterval.FULL_DAY) -> list[Hit]:
        if k < 1:
            raise ValueError("k must be >= 1")
        interval = TimeInterval(interval)
        scores = self.scores(query)
        if interval is TimeInterval.FULL_DAY:
            candidates = np.arange(len(self.ids))
        else:
            candidates = np.flatnonzero(self.intervals == interval.code)
        order = np.lexsort((self._id_rank[candidates], -scores[candidates]))[:k]
        return [
            Hit(self.ids[i], float(scores[i]), TimeInterval.from_code(int(self.intervals[i])))
            for i in candidates[order]
        ]

    # -- file format: magic, u32 dim, u64 count, then per record
    #    u16 id length, UTF-8 id, u8 interval code, dim x float32 LE

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<IQ", self.dim, len(self.ids)))
        rows = self.vectors.astype("<f4")
        for tweet_id, code, row in zip(self.ids, self.intervals, rows):
            raw = tweet_id.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise DataError(f"tweet id too long: {tweet_id[:40]}...")
            buf.write(struct.pack("<H", len(raw)))
            buf.write(raw)
            buf.write(struct.pack("<B", int(code)))
            buf.write(row.tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "VectorIndex":
        if data[:8] != MAGIC:
            raise SchemaError("not a vector index file (bad magic)")
        try:
            dim, count = struct.unpack_from("<IQ", data, 8)
            pos = 20
            ids, codes = [], []
            vectors = np.empty((count, dim), dtype=np.float32)
            width = 4 * dim
            for i in range(count):
                (n,) = struct.unpack_from("<H", data, pos)
                pos += 2
                ids.append(data[pos:pos + n].decode("utf-8"))
                pos += n
                codes.append(data[pos])
                pos += 1
                chunk = data[pos:pos + width]
                if len(chunk) != width:
                    raise SchemaError(f"truncated vector for record {i}")
                vectors[i] = np.frombuffer(chunk, dtype="<f4")
                pos += width
        except (struct.error, IndexError, UnicodeDecodeError) as exc:
            raise SchemaError(f"corrupt vector index: {exc}") from exc
        if pos != len(data):
            raise SchemaError(f"{len(data) - pos} trailing bytes in vector index")
        if any(c > 3 for c in codes):
            raise SchemaError("invalid interval code in vector index")
        return cls(dim, ids, codes, vectors)


def save_index(index: VectorIndex, path: str | Path) -> None:
    """Write atomically so a failed build never leaves a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(index.to_bytes())
    os.replace(tmp, path)


def load_index(path: str | Path) -> VectorIndex:
    return VectorIndex.from_bytes(Path(path).read_bytes())


def index_corpus(tweets, provider: EmbeddingProvider) -> VectorIndex:
    """Embed every tweet (signal and noise). A provider failure aborts with the tweet id."""
    tweets = list(getattr(tweets, "tweets", tweets))
    dim = provider.dim()
    vectors = np.zeros((len(tweets), dim), dtype=np.float32)
    for i, tweet in enumerate(tweets):
        if tweet.interval is None:
            raise DataError(f"tweet {tweet.id} has no interval")
        try:
            vec = provider.embed(tweet.text)
        except BackendError as exc:
            raise BackendError(f"embedding failed for tweet {tweet.id}: {exc}", exc.status) from exc
        if vec.dim != dim:
            raise DataError(f"tweet {tweet.id}: embedding dim {vec.dim} != {dim}")
        vectors[i] = vec.values
    return VectorIndex(dim, [t.id for t in tweets], [t.interval.code for t in tweets], vectors)


def query_topk(index: VectorIndex, query_text: str, provider: EmbeddingProvider, k: int,
               interval: TimeInterval = TimeInterval.FULL_DAY) -> list[Hit]:
    if provider.dim() != index.dim:
        raise DataError(f"provider dim {provider.dim()} != index dim {index.dim}")
    return index.search(provider.embed(query_text), k, interval)
