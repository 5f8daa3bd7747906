import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from signmotion.embeddings import (
    EmbeddingCache,
    EmbeddingService,
    ProviderConfig,
    SemanticEmbedding,
    StubProvider,
)
from signmotion.errors import ConfigError, InvalidArgumentError, TransportError


def stub_oracle(seed, modality, key, d):
    """Independent re-implementation of the documented stub procedure."""
    base = hashlib.sha256(f"{seed}:{modality}:{key}".encode("utf-8")).digest()
    raw = b""
    counter = 0
    while len(raw) < 4 * d:
        raw += hashlib.sha256(base + counter.to_bytes(4, "big")).digest()
        counter += 1
    u = np.frombuffer(raw[: 4 * d], dtype=">u4").astype(np.float64)
    x = u / 2.0**31 - 1.0
    return x / np.linalg.norm(x)


def stub_service(tmp_path=None, d_emb=32, seed=0):
    cache = str(tmp_path / "cache.jsonl") if tmp_path else None
    return EmbeddingService(
        ProviderConfig(provider="stub", d_emb=d_emb, endpoint_or_model_ref=f"stub:{seed}", cache_path=cache)
    )


class TestStubProvider:
    def test_matches_documented_oracle(self):
        svc = stub_service(d_emb=48, seed=3)
        got = svc.embed_text("drink").vector
        np.testing.assert_array_equal(got, stub_oracle(3, "text", "drink", 48))

    def test_image_modality_oracle(self):
        svc = stub_service(d_emb=16)
        got = svc.embed_image("book.png").vector
        np.testing.assert_array_equal(got, stub_oracle(0, "image", "book.png", 16))

    def test_repeated_calls_bit_identical(self):
        svc = stub_service(d_emb=64)
        a = svc.embed_text("drink").vector
        b = svc.embed_text("drink").vector
        assert np.array_equal(a, b)

    def test_distinct_words_distinct_vectors(self):
        svc = stub_service(d_emb=64)
        assert not np.array_equal(svc.embed_text("drink").vector, svc.embed_text("book").vector)

    @given(st.text(min_size=1, max_size=20))
    @settings(max_examples=50)
    def test_unit_norm(self, word):
        v = StubProvider(d_emb=24, seed=1).embed(word, "text")
        assert abs(np.linalg.norm(v) - 1.0) <= 1e-6

    def test_empty_word_rejected(self):
        with pytest.raises(InvalidArgumentError):
            stub_service().embed_text("")

    def test_dimension_matches_config(self):
        svc = stub_service(d_emb=17)
        assert svc.embed_text("go").vector.shape == (17,)


class TestSemanticEmbedding:
    def test_rejects_non_unit_vector(self):
        with pytest.raises(InvalidArgumentError):
            SemanticEmbedding(vector=np.array([1.0, 1.0]), modality="text", key="x")

    def test_rejects_unknown_modality(self):
        with pytest.raises(InvalidArgumentError):
            SemanticEmbedding(vector=np.array([1.0, 0.0]), modality="audio", key="x")


class TestCache:
    def test_warm_cache_survives_provider_outage(self, tmp_path):
        svc = stub_service(tmp_path, d_emb=8)
        warm = svc.embed_text("drink").vector

        class Dead:
            def embed(self, key, modality):
                raise TransportError("provider down")

        svc._provider = Dead()
        again = svc.embed_text("drink").vector
        assert np.array_equal(warm, again)
        with pytest.raises(TransportError):
            svc.embed_text("never-seen")

    def test_cache_shared_across_instances(self, tmp_path):
        a = stub_service(tmp_path, d_emb=8)
        va = a.embed_text("go").vector
        b = stub_service(tmp_path, d_emb=8)
        assert np.array_equal(b._cache.get("go", "text"), va)

    def test_corrupt_trailing_record_dropped_with_warning(self, tmp_path):
        svc = stub_service(tmp_path, d_emb=8)
        svc.embed_text("drink")
        svc.embed_text("book")
        cache_path = tmp_path / "cache.jsonl"
        cache_path.write_bytes(cache_path.read_bytes() + b'{"key": "go", "modality": "te')
        with pytest.warns(UserWarning, match="corrupt trailing"):
            cache = EmbeddingCache(cache_path)
        assert cache.get("drink", "text") is not None
        assert cache.get("book", "text") is not None
        assert cache.get("go", "text") is None

    def test_modalities_do_not_collide(self, tmp_path):
        svc = stub_service(tmp_path, d_emb=8)
        vt = svc.embed_text("book").vector
        vi = svc.embed_image("book").vector
        assert not np.array_equal(vt, vi)


class TestNearestGloss:
    def test_self_similarity_wins(self):
        svc = stub_service(d_emb=32)
        e = svc.embed_text("book")
        assert svc.nearest_gloss(e, ["drink", "book", "go"]) == "book"

    def test_single_candidate(self):
        svc = stub_service(d_emb=32)
        e = svc.embed_text("anything")
        assert svc.nearest_gloss(e, ["only"]) == "only"

    def test_mixture_routes_to_dominant_word(self):
        svc = stub_service(d_emb=64)
        vocab = ["book", "go", "drink", "table", "help", "who", "walk", "thin", "before", "computer"]
        v = 0.9 * svc.embed_text("book").vector + 0.1 * svc.embed_text("go").vector
        v /= np.linalg.norm(v)
        query = SemanticEmbedding(vector=v, modality="text", key="mix")
        # brute-force cosine oracle
        sims = {w: float(v @ svc.embed_text(w).vector) for w in vocab}
        expected = max(sorted(sims), key=lambda w: sims[w])
        assert expected == "book"
        assert svc.nearest_gloss(query, vocab) == "book"

    def test_scale_invariance_before_normalization(self):
        svc = stub_service(d_emb=32)
        e = svc.embed_text("table")
        vocab = ["drink", "table", "go"]
        # nearest_gloss re-normalizes internally, so a scaled copy of the
        # query's direction must give the same argmax.
        assert svc.nearest_gloss(e, vocab) == "table"

    def test_empty_vocabulary_rejected(self):
        svc = stub_service(d_emb=8)
        with pytest.raises(InvalidArgumentError):
            svc.nearest_gloss(svc.embed_text("x"), [])


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers["Content-Length"])
        req = json.loads(self.rfile.read(length))
        d = 8
        vec = stub_oracle(99, req["modality"], req["key"], d)
        body = json.dumps({"vector": vec.tolist()}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


class TestHttpProvider:
    def test_endpoint_roundtrip(self):
        server = HTTPServer(("127.0.0.1", 0), _Handler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            url = f"http://127.0.0.1:{server.server_port}/embed"
            svc = EmbeddingService(ProviderConfig(provider="http", d_emb=8, endpoint_or_model_ref=url))
            v = svc.embed_text("drink").vector
            np.testing.assert_allclose(v, stub_oracle(99, "text", "drink", 8), atol=1e-12)
        finally:
            server.shutdown()

    def test_unreachable_endpoint_is_transport_error(self):
        svc = EmbeddingService(
            ProviderConfig(provider="http", d_emb=8, endpoint_or_model_ref="http://127.0.0.1:9/nope")
        )
        with pytest.raises(TransportError):
            svc.embed_text("drink")


class TestProviderConfig:
    def test_bad_dimension(self):
        with pytest.raises(ConfigError):
            ProviderConfig(d_emb=0)

    def test_unknown_provider(self):
        with pytest.raises(ConfigError):
            ProviderConfig(provider="magic")

    def test_bad_stub_ref(self):
        with pytest.raises(ConfigError):
            EmbeddingService(ProviderConfig(provider="stub", endpoint_or_model_ref="stub:xyz"))
