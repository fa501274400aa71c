"""End-to-end protocol check against the core toolkit's HTTP client.

Skipped when the core package is not installed; everything crosses the wire
(vocab fetch, encoding, causal and masked rewriting) against real torch
models served by uvicorn.
"""

from __future__ import annotations

import socket
import threading
import time

import pytest

privshift = pytest.importorskip("privshift")
import uvicorn

from privbridge.config import BridgeConfig
from privbridge.server import create_app


@pytest.fixture(scope="module")
def live_url(tiny_models):
    app = create_app(BridgeConfig(causal_model=tiny_models["causal"],
                                  masked_model=tiny_models["masked"]))
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port,
                                           log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 15
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("bridge server did not start")
        time.sleep(0.05)
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


class TestProtocolWithCoreClient:
    def test_vocab_roundtrip(self, live_url, tiny_models):
        provider = privshift.RemoteLogitProvider(live_url)
        assert provider.vocab == tuple(
            tiny_models["tokenizer"].convert_ids_to_tokens(
                list(range(len(tiny_models["tokenizer"])))
            )
        )

    def test_encode_extension_used_by_client(self, live_url, tiny_models):
        provider = privshift.RemoteLogitProvider(live_url)
        ids = provider.encode("word1 unseen word2")
        expected = tiny_models["tokenizer"](
            "word1 unseen word2", add_special_tokens=False
        ).input_ids
        assert ids == expected

    def test_mlm_rewrite_over_the_wire(self, live_url, tiny_models):
        import numpy as np

        provider = privshift.RemoteLogitProvider(live_url)
        ids = provider.encode("word1 word2 word3 word4")
        out = privshift.mlm_rewrite(
            provider, ids, privshift.PrivacyBudget(50.0),
            privshift.ClipConfig(-5, 5), np.random.default_rng(3),
        )
        assert len(out) == len(ids)
        assert all(0 <= t < len(provider.vocab) for t in out)

    def test_causal_rewrite_greedy_matches_protocol_argmax(self, live_url):
        import numpy as np

        provider = privshift.RemoteLogitProvider(live_url)
        ids = provider.encode("word1 word2 word3")
        clip = privshift.ClipConfig(-5, 5)
        sampler = privshift.SamplerConfig(max_len=6)
        out = privshift.causal_rewrite(
            provider, ids, privshift.PrivacyBudget(1e9), clip, sampler,
            np.random.default_rng(0), template=privshift.EMPTY_TEMPLATE,
        )
        context = list(ids)
        expected = []
        for _ in range(6):
            logits = np.clip(provider.next_logits(context), clip.lo, clip.hi)
            token = int(np.argmax(logits))
            expected.append(token)
            context.append(token)
        assert out == expected
