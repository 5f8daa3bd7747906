"""Semantic conditioning: unit-norm embeddings for words and images.

A pretrained joint vision-language model sits behind a small provider
interface. Three providers are available:

* ``stub``  - fully deterministic hash-derived vectors, no model download;
  the reference for every offline test. Procedure (recompute to verify):
  ``base = sha256("{seed}:{modality}:{key}")``, expand by hashing
  ``base || big-endian uint32 counter`` until 4*d bytes, interpret as
  big-endian uint32, map to ``u / 2**31 - 1`` in [-1, 1), L2-normalize.
* ``clip``  - local weights through sentence-transformers (optional extra).
* ``http``  - a remote encoder endpoint; ``SIGNMOTION_EMBED_ENDPOINT``
  overrides the configured URL.

All vectors pass through a persistent append-only cache, so repeated queries
are bit-identical and survive provider outages.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError, InvalidArgumentError, TransportError

ENDPOINT_ENV_VAR = "SIGNMOTION_EMBED_ENDPOINT"


@dataclass
class SemanticEmbedding:
    """A unit-norm float vector tied to its source word or image key."""

    vector: np.ndarray
    modality: str
    key: str

    def __post_init__(self) -> None:
        v = np.asarray(self.vector, dtype=np.float64)
        if v.ndim != 1:
            raise InvalidArgumentError("embedding vector must be 1-D")
        norm = float(np.linalg.norm(v))
        if not abs(norm - 1.0) <= 1e-6:
            raise InvalidArgumentError(f"embedding must be unit-norm within 1e-6, got |v| = {norm!r}")
        if self.modality not in ("text", "image"):
            raise InvalidArgumentError(f"unknown modality {self.modality!r}")
        self.vector = v


@dataclass
class ProviderConfig:
    provider: str = "stub"
    d_emb: int = 512
    endpoint_or_model_ref: str = "stub:0"
    cache_path: str | None = None

    def __post_init__(self) -> None:
        if self.d_emb <= 0:
            raise ConfigError(f"d_emb must be positive, got {self.d_emb}")
        if self.provider not in ("stub", "clip", "http"):
            raise ConfigError(f"unknown provider {self.provider!r}")


class StubProvider:
    """Deterministic seeded-hash embeddings (see module docstring)."""

    def __init__(self, d_emb: int, seed: int = 0):
        self.d_emb = d_emb
        self.seed = seed

    def embed(self, key: str, modality: str) -> np.ndarray:
        base = hashlib.sha256(f"{self.seed}:{modality}:{key}".encode("utf-8")).digest()
        raw = b""
        counter = 0
        while len(raw) < 4 * self.d_emb:
            raw += hashlib.sha256(base + counter.to_bytes(4, "big")).digest()
            counter += 1
        u = np.frombuffer(raw[: 4 * self.d_emb], dtype=">u4").astype(np.float64)
        x = u / 2.0**31 - 1.0
        return x / np.linalg.norm(x)


class ClipProvider:
    """Joint text/image encoder via locally loaded sentence-transformers weights."""

    def __init__(self, model_ref: str, d_emb: int):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise ConfigError(
                "provider 'clip' needs the optional dependency sentence-transformers "
                "(pip install signmotion[clip])"
            ) from exc
        self.model = SentenceTransformer(model_ref)
        self.d_emb = d_emb

    def embed(self, key: str, modality: str) -> np.ndarray:
        if modality == "image":
            try:
                from PIL import Image

                item = Image.open(key)
                item.load()
            except Exception as exc:
                raise InputError(f"cannot read image {key!r}: {exc}") from exc
        else:
            item = key
        v = np.asarray(self.model.encode([item])[0], dtype=np.float64)
        if v.shape != (self.d_emb,):
            raise ConfigError(f"model returned dimension {v.shape[0]}, config says d_emb={self.d_emb}")
        return v / np.linalg.norm(v)


class HttpProvider:
    """Remote encoder: POST {"key", "modality"} -> {"vector": [...]}."""

    def __init__(self, endpoint: str, d_emb: int):
        self.endpoint = os.environ.get(ENDPOINT_ENV_VAR, endpoint)
        self.d_emb = d_emb

    def embed(self, key: str, modality: str) -> np.ndarray:
        import requests

        try:
            resp = requests.post(self.endpoint, json={"key": key, "modality": modality}, timeout=30)
            resp.raise_for_status()
            vector = resp.json()["vector"]
        except Exception as exc:
            raise TransportError(f"embedding endpoint {self.endpoint!r} failed: {exc}") from exc
        v = np.asarray(vector, dtype=np.float64)
        if v.shape != (self.d_emb,):
            raise TransportError(f"endpoint returned dimension {v.shape}, expected ({self.d_emb},)")
        norm = np.linalg.norm(v)
        if norm == 0 or not np.isfinite(norm):
            raise TransportError("endpoint returned a zero or non-finite vector")
        return v / norm


class EmbeddingCache:
    """Append-only (key, modality, vector) store with an in-memory index.

    One JSON record per line; vectors are base64-encoded little-endian
    float64 so cached values round-trip bit-exactly. A corrupt trailing
    record (interrupted write) is dropped on load with a warning.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._index: dict[tuple[str, str], np.ndarray] = {}
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        lines = self.path.read_bytes().split(b"\n")
        for i, line in enumerate(lines):
            if not line:
                continue
            try:
                rec = json.loads(line.decode("utf-8"))
                vec = np.frombuffer(base64.b64decode(rec["vector"]), dtype="<f8").copy()
                self._index[(rec["modality"], rec["key"])] = vec
            except Exception:
                if i == len(lines) - 1 or (i == len(lines) - 2 and not lines[-1]):
                    warnings.warn(f"{self.path}: dropping corrupt trailing cache record")
                else:
                    warnings.warn(f"{self.path}: skipping corrupt cache record at line {i + 1}")

    def get(self, key: str, modality: str) -> np.ndarray | None:
        return self._index.get((modality, key))

    def put(self, key: str, modality: str, vector: np.ndarray) -> None:
        vector = np.asarray(vector, dtype=np.float64)
        self._index[(modality, key)] = vector
        rec = {
            "key": key,
            "modality": modality,
            "vector": base64.b64encode(vector.astype("<f8").tobytes()).decode("ascii"),
        }
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "ab") as f:
            f.write(json.dumps(rec).encode("utf-8"))
            f.write(b"\n")
            f.flush()


@dataclass
class EmbeddingService:
    """Cache-backed access to the configured embedding provider."""

    config: ProviderConfig
    _provider: object = field(init=False, repr=False)
    _cache: EmbeddingCache | None = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._provider = _build_provider(self.config)
        self._cache = EmbeddingCache(self.config.cache_path) if self.config.cache_path else None

    @property
    def d_emb(self) -> int:
        return self.config.d_emb

    def embed_text(self, word: str) -> SemanticEmbedding:
        if not word:
            raise InvalidArgumentError("word must be a non-empty string")
        return self._embed(word, "text")

    def embed_image(self, image_ref: str) -> SemanticEmbedding:
        if not image_ref:
            raise InvalidArgumentError("image reference must be a non-empty string")
        return self._embed(image_ref, "image")

    def nearest_gloss(self, embedding: SemanticEmbedding, vocabulary: list[str]) -> str:
        """The vocabulary word whose embedding is most cosine-similar.

        Ties break lexicographically (candidates are scanned in sorted order
        and only a strictly greater similarity replaces the best).
        """
        if not vocabulary:
            raise InvalidArgumentError("vocabulary must be non-empty")
        q = embedding.vector / np.linalg.norm(embedding.vector)
        best_word, best_sim = None, -np.inf
        for word in sorted(vocabulary):
            v = self.embed_text(word).vector
            sim = float(np.dot(q, v) / np.linalg.norm(v))
            if sim > best_sim:
                best_word, best_sim = word, sim
        return best_word

    def _embed(self, key: str, modality: str) -> SemanticEmbedding:
        if self._cache is not None:
            hit = self._cache.get(key, modality)
            if hit is not None:
                return SemanticEmbedding(vector=hit, modality=modality, key=key)
        vector = self._provider.embed(key, modality)
        if vector.shape != (self.config.d_emb,):
            raise ConfigError(f"provider returned dimension {vector.shape}, expected ({self.config.d_emb},)")
        if self._cache is not None:
            self._cache.put(key, modality, vector)
        return SemanticEmbedding(vector=vector, modality=modality, key=key)


def _build_provider(config: ProviderConfig):
    if config.provider == "stub":
        ref = config.endpoint_or_model_ref
        seed = 0
        if ref.startswith("stub:"):
            try:
                seed = int(ref.split(":", 1)[1])
            except ValueError as exc:
                raise ConfigError(f"stub model ref must be 'stub:<seed>', got {ref!r}") from exc
        return StubProvider(d_emb=config.d_emb, seed=seed)
    if config.provider == "clip":
        return ClipProvider(model_ref=config.endpoint_or_model_ref, d_emb=config.d_emb)
    return HttpProvider(endpoint=config.endpoint_or_model_ref, d_emb=config.d_emb)
