"""Sentence-level DP paraphrasing via temperature sampling over clipped logits.

Clipping bounds the score sensitivity to the clip width, and sampling from
``softmax(logits / T)`` with ``T = 2 * width / epsilon`` realizes the
exponential mechanism at budget epsilon per emitted token. Two rewriters are
provided: causal (sequential generation from a prompt context) and masked
(per-position bidirectional substitution against the original sentence).
``dp_ratio_check`` verifies the probability-ratio guarantee by exhaustive
enumeration at small vocabulary sizes.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import requests

from .common import DataError, PrivacyBudget, ProviderError

STOP_TOKEN = "</s>"


@dataclass(frozen=True)
class ClipConfig:
    """Logit clamp range; the width is the sensitivity of the clipped score."""

    lo: float = -5.0
    hi: float = 5.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError("clip bounds must be finite")
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class SamplerConfig:
    """Sampling controls for the causal rewriter.

    ``temperature`` is informational (the rewriters always derive T from the
    budget); when set it must be finite and positive. ``max_len`` of None
    selects the desk-scale default ``max(2 * input length, 16)``.
    """

    temperature: float | None = None
    max_len: int | None = None
    stop_token: int | None = None

    def __post_init__(self) -> None:
        if self.temperature is not None and not (
            math.isfinite(self.temperature) and self.temperature > 0
        ):
            raise ValueError(f"temperature must be finite and > 0, got {self.temperature}")
        if self.max_len is not None and self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")


def default_max_len(n_input: int, full_scale: bool = False) -> int:
    """Generation cap: 128 at full scale, max(2 * input, 16) at desk scale."""
    return 128 if full_scale else max(2 * n_input, 16)


class LogitProvider(abc.ABC):
    """Abstract scorer over a fixed vocabulary.

    Implementors expose next-token logits (causal mode) and/or
    masked-position logits (masked mode); returned vectors are raw scores of
    vocabulary length. ``thread_safe`` declares whether concurrent read-only
    queries are allowed; the harness serializes single-threaded providers.
    """

    supports_causal: bool = False
    supports_masked: bool = False
    thread_safe: bool = True

    @property
    @abc.abstractmethod
    def vocab(self) -> tuple[str, ...]: ...

    def vocab_index(self) -> Mapping[str, int]:
        cached = getattr(self, "_vocab_index", None)
        if cached is None:
            cached = {tok: i for i, tok in enumerate(self.vocab)}
            self._vocab_index = cached
        return cached

    def next_logits(self, context: Sequence[int]) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no causal mode")

    def masked_logits(self, tokens: Sequence[int], position: int) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no masked mode")


@dataclass(frozen=True)
class PromptTemplate:
    """Data-independent context wrapper for causal rewriting.

    Prefix and suffix words are looked up in the provider vocabulary; the
    context becomes ``prefix + input + suffix``. The template never enters
    the DP accounting.
    """

    prefix: tuple[str, ...] = ("paraphrase", "the", "text", ":")
    suffix: tuple[str, ...] = ("paraphrase", ":")

    def build(self, input_ids: Sequence[int], vocab_index: Mapping[str, int]) -> list[int]:
        missing = [w for w in (*self.prefix, *self.suffix) if w not in vocab_index]
        if missing:
            raise DataError(f"template words missing from provider vocabulary: {missing}")
        return (
            [vocab_index[w] for w in self.prefix]
            + list(input_ids)
            + [vocab_index[w] for w in self.suffix]
        )

    def describe(self) -> str:
        return " ".join((*self.prefix, "{text}", *self.suffix))


DEFAULT_TEMPLATE = PromptTemplate()
EMPTY_TEMPLATE = PromptTemplate(prefix=(), suffix=())


def clip_logits(logits: np.ndarray, cfg: ClipConfig) -> np.ndarray:
    """Element-wise clamp into [lo, hi]; idempotent."""
    arr = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ProviderError("logit vector contains non-finite entries")
    return np.clip(arr, cfg.lo, cfg.hi)


def temperature_for(budget: PrivacyBudget, cfg: ClipConfig) -> float:
    """Exponential-mechanism calibration: T = 2 * clip width / epsilon."""
    return 2.0 * cfg.width / budget.epsilon


def softmax_probabilities(logits: np.ndarray, temperature: float) -> np.ndarray:
    """Softmax over logits / T with max-subtraction for numerical stability."""
    if not (math.isfinite(temperature) and temperature > 0):
        raise ValueError(f"temperature must be finite and > 0, got {temperature}")
    arr = np.asarray(logits, dtype=np.float64)
    scaled = (arr - arr.max()) / temperature
    weights = np.exp(scaled)
    return weights / weights.sum()


def sample_token(logits: np.ndarray, temperature: float, rng: np.random.Generator) -> int:
    """Draw an index from softmax(logits / T); full support, no truncation."""
    probs = softmax_probabilities(logits, temperature)
    return int(rng.choice(probs.size, p=probs))


def _provider_call(fn, *args, what: str):
    try:
        raw = fn(*args)
    except ProviderError:
        raise
    except Exception as exc:
        raise ProviderError(f"{what} failed: {exc}") from exc
    return raw


def _checked_logits(raw, vocab_size: int, what: str) -> np.ndarray:
    arr = np.asarray(raw, dtype=np.float64)
    if arr.shape != (vocab_size,):
        raise ProviderError(
            f"{what} returned shape {arr.shape}, expected ({vocab_size},)"
        )
    return arr


def causal_rewrite(
    provider: LogitProvider,
    input_ids: Sequence[int],
    budget: PrivacyBudget,
    clip: ClipConfig,
    sampler: SamplerConfig,
    rng: np.random.Generator,
    template: PromptTemplate = DEFAULT_TEMPLATE,
) -> list[int]:
    """Generate a paraphrase sequentially at T = 2 * width / epsilon per token.

    The context starts as ``template(input)`` and grows with each sampled
    token; generation stops at ``sampler.stop_token`` (not emitted) or at the
    length cap. Only generated tokens are returned.
    """
    if not provider.supports_causal:
        raise ValueError(f"{type(provider).__name__} does not support causal mode")
    if not input_ids:
        raise DataError("causal rewrite requires a non-empty input")
    vocab_size = len(provider.vocab)
    context = template.build(input_ids, provider.vocab_index())
    temperature = temperature_for(budget, clip)
    max_len = sampler.max_len if sampler.max_len is not None else default_max_len(len(input_ids))

    out: list[int] = []
    while len(out) < max_len:
        raw = _provider_call(
            provider.next_logits, context, what=f"causal provider at step {len(out)}"
        )
        logits = clip_logits(_checked_logits(raw, vocab_size, "causal provider"), clip)
        token = sample_token(logits, temperature, rng)
        if sampler.stop_token is not None and token == sampler.stop_token:
            break
        out.append(token)
        context.append(token)
    return out


def mlm_rewrite(
    provider: LogitProvider,
    tokens: Sequence[int],
    budget: PrivacyBudget,
    clip: ClipConfig,
    rng: np.random.Generator,
) -> list[int]:
    """Substitute every position bidirectionally at T = 2 * width / epsilon.

    Each position is masked against the ORIGINAL sentence; samples are never
    fed back, so a poor substitution cannot cascade along the sentence.
    Output length equals input length.
    """
    if not provider.supports_masked:
        raise ValueError(f"{type(provider).__name__} does not support masked mode")
    original = list(tokens)
    if not original:
        return []
    vocab_size = len(provider.vocab)
    temperature = temperature_for(budget, clip)
    out: list[int] = []
    for position in range(len(original)):
        raw = _provider_call(
            provider.masked_logits,
            original,
            position,
            what=f"masked provider at position {position}",
        )
        logits = clip_logits(_checked_logits(raw, vocab_size, "masked provider"), clip)
        out.append(sample_token(logits, temperature, rng))
    return out


def max_softmax_ratio(
    clip: ClipConfig, temperature: float, vocab_size: int, grid_step: float
) -> float:
    """Exact max of P(token|u) / P(token|v) over a clipped logit grid.

    Enumerates every vector on the grid over [lo, hi]^V (any two clipped
    vectors differ by at most the clip width per coordinate), computes exact
    softmax probabilities at the given temperature, and maximizes the ratio
    over vector pairs and tokens.
    """
    if vocab_size < 1 or vocab_size > 10:
        raise ValueError(f"vocab_size must be in [1, 10], got {vocab_size}")
    if grid_step <= 0:
        raise ValueError(f"grid_step must be > 0, got {grid_step}")
    n_axis = max(1, int(round(clip.width / grid_step)) + 1)
    n_vectors = n_axis**vocab_size
    if n_vectors > 2_000_000:
        raise ValueError(
            f"grid of {n_vectors} vectors is infeasible; coarsen grid_step"
        )
    axis = np.linspace(clip.lo, clip.hi, n_axis)
    mesh = np.meshgrid(*([axis] * vocab_size), indexing="ij")
    vectors = np.stack(mesh, axis=-1).reshape(-1, vocab_size)

    scaled = (vectors - vectors.max(axis=1, keepdims=True)) / temperature
    weights = np.exp(scaled)
    probs = weights / weights.sum(axis=1, keepdims=True)
    per_token_ratio = probs.max(axis=0) / probs.min(axis=0)
    return float(per_token_ratio.max())


def dp_ratio_check(
    clip: ClipConfig,
    budget: PrivacyBudget,
    vocab_size: int,
    grid_step: float,
) -> float:
    """Max probability ratio over the enumeration grid at T = 2 * width / eps.

    A correct calibration keeps the result at or below exp(epsilon) (up to
    floating-point slack); the caller asserts the bound.
    """
    temperature = temperature_for(budget, clip)
    return max_softmax_ratio(clip, temperature, vocab_size, grid_step)


class ToyBigramProvider(LogitProvider):
    """Deterministic desk-scale stand-in for pretrained scorers.

    Causal logits are ``log(count + 1)`` of bigram successors of the last
    context token; masked logits add the log-counts of the (left, w) and
    (w, right) bigrams. Unseen contexts yield uniform (all-zero) logits. The
    vocabulary is the sorted corpus vocabulary plus a stop token, and each
    corpus sequence contributes a final (last token, stop) bigram.
    """

    supports_causal = True
    supports_masked = True

    def __init__(self, corpus: Sequence[Sequence[str]], stop_token: str = STOP_TOKEN):
        sequences = [list(seq) for seq in corpus]
        if not any(sequences):
            raise DataError("toy provider needs a non-empty corpus")
        if any(stop_token in seq for seq in sequences):
            raise DataError(f"corpus contains the reserved stop token {stop_token!r}")
        vocab = sorted({tok for seq in sequences for tok in seq})
        vocab.append(stop_token)
        self._vocab = tuple(vocab)
        index = {tok: i for i, tok in enumerate(vocab)}
        stop_id = index[stop_token]

        counts = np.zeros((len(vocab), len(vocab)))
        for seq in sequences:
            ids = [index[tok] for tok in seq]
            for a, b in zip(ids, ids[1:]):
                counts[a, b] += 1.0
            if ids:
                counts[ids[-1], stop_id] += 1.0
        self._log_counts = np.log1p(counts)
        self._stop_id = stop_id

    @property
    def vocab(self) -> tuple[str, ...]:
        return self._vocab

    @property
    def stop_id(self) -> int:
        return self._stop_id

    def next_logits(self, context: Sequence[int]) -> np.ndarray:
        if not context:
            return np.zeros(len(self._vocab))
        return self._log_counts[context[-1]].copy()

    def masked_logits(self, tokens: Sequence[int], position: int) -> np.ndarray:
        if not (0 <= position < len(tokens)):
            raise ValueError(f"position {position} out of range for {len(tokens)} tokens")
        logits = np.zeros(len(self._vocab))
        if position > 0:
            logits += self._log_counts[tokens[position - 1]]
        if position + 1 < len(tokens):
            logits += self._log_counts[:, tokens[position + 1]]
        return logits


class RemoteLogitProvider(LogitProvider):
    """Client for the HTTP provider protocol (JSON bodies).

    Endpoints: ``GET /vocab``, ``POST /next_logits`` with ``{"context": [int]}``
    and ``POST /masked_logits`` with ``{"tokens": [int], "position": int}``.
    Declared single-threaded; the harness serializes calls.
    """

    supports_causal = True
    supports_masked = True
    thread_safe = False

    def __init__(self, base_url: str, timeout: float = 60.0):
        self._base = base_url.rstrip("/")
        self._timeout = timeout
        self._session = requests.Session()
        payload = self._get("/vocab")
        tokens = payload.get("tokens")
        if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
            raise ProviderError(f"{self._base}/vocab returned no token list")
        self._vocab = tuple(tokens)

    @property
    def vocab(self) -> tuple[str, ...]:
        return self._vocab

    def _get(self, route: str) -> dict:
        try:
            resp = self._session.get(self._base + route, timeout=self._timeout)
            resp.raise_for_status()
            return resp.json()
        except requests.RequestException as exc:
            raise ProviderError(f"GET {route} failed: {exc}") from exc

    def _post(self, route: str, body: dict) -> dict:
        try:
            resp = self._session.post(
                self._base + route, json=body, timeout=self._timeout
            )
            resp.raise_for_status()
            return resp.json()
        except requests.RequestException as exc:
            raise ProviderError(f"POST {route} failed: {exc}") from exc

    def _logits(self, payload: dict, route: str) -> np.ndarray:
        logits = payload.get("logits")
        if not isinstance(logits, list):
            raise ProviderError(f"{route} returned no logits list")
        return np.asarray(logits, dtype=np.float64)

    def next_logits(self, context: Sequence[int]) -> np.ndarray:
        payload = self._post("/next_logits", {"context": list(map(int, context))})
        return self._logits(payload, "/next_logits")

    def masked_logits(self, tokens: Sequence[int], position: int) -> np.ndarray:
        payload = self._post(
            "/masked_logits",
            {"tokens": list(map(int, tokens)), "position": int(position)},
        )
        return self._logits(payload, "/masked_logits")

    def encode(self, text: str) -> list[int] | None:
        """Optional server-side tokenizer (POST /encode); None if unsupported."""
        try:
            resp = self._session.post(
                self._base + "/encode", json={"text": text}, timeout=self._timeout
            )
        except requests.RequestException as exc:
            raise ProviderError(f"POST /encode failed: {exc}") from exc
        if resp.status_code == 404:
            return None
        try:
            resp.raise_for_status()
            ids = resp.json().get("ids")
        except requests.RequestException as exc:
            raise ProviderError(f"POST /encode failed: {exc}") from exc
        if not isinstance(ids, list):
            raise ProviderError("/encode returned no id list")
        return [int(i) for i in ids]
