"""End-to-end experiment runner.

Ingests sentence pairs, applies the configured mechanisms over the privacy
budget grid with repeated trials, estimates intrinsic dimensions before and
after privatization, and aggregates the shifts into a report. Every row is
seeded by a stable hash of (root seed, mechanism, epsilon, trial, sentence
id): results are reproducible and adding mechanisms to a config never
perturbs existing rows.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .common import (
    DataError,
    PrivacyBudget,
    ProviderError,
    simple_word_tokenize,
)
from .dp_sentence import (
    ClipConfig,
    EMPTY_TEMPLATE,
    LogitProvider,
    PromptTemplate,
    RemoteLogitProvider,
    SamplerConfig,
    ToyBigramProvider,
    causal_rewrite,
    default_max_len,
    mlm_rewrite,
)
from .dp_word import EmbeddingTable, load_embedding_table, madlib_rewrite
from .geometry import (
    ESTIMATOR_LBMLE,
    ESTIMATOR_TWONN,
    FilterConfig,
    FilteredOut,
    IdEstimate,
    PointCloud,
    build_point_cloud,
    levina_bickel,
    two_nn,
)

log = logging.getLogger(__name__)

MECHANISMS = ("madlib", "causal", "mlm")
DEFAULT_EPSILONS = (10.0, 15.0, 20.0, 25.0, 50.0, 100.0)


@dataclass(frozen=True)
class SentencePair:
    """A reference sentence and its human-authored paraphrase."""

    id: str
    reference: str
    paraphrase: str
    label: int

    def __post_init__(self) -> None:
        if self.label == 1 and not (self.reference.strip() and self.paraphrase.strip()):
            raise DataError(f"pair {self.id}: equivalent pairs need non-empty texts")


def load_pairs(path: str | Path) -> list[SentencePair]:
    """Load equivalent sentence pairs from a tab-separated corpus file.

    Expects a header row and data rows ``quality<TAB>id1<TAB>id2<TAB>string1
    <TAB>string2``; rows whose quality label is not 1 are excluded. Malformed
    rows are rejected with their line number.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"pairs file not found: {path}")
    pairs: list[SentencePair] = []
    with path.open(encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            raise DataError(f"{path}: empty file")
        if len(header.rstrip("\n").split("\t")) != 5:
            raise DataError(f"{path}:1: header must have 5 tab-separated columns")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            cols = line.rstrip("\n").split("\t")
            if len(cols) != 5:
                raise DataError(
                    f"{path}:{lineno}: expected 5 tab-separated columns, got {len(cols)}"
                )
            quality, id1, id2, string1, string2 = cols
            try:
                label = int(quality)
            except ValueError:
                raise DataError(
                    f"{path}:{lineno}: quality column is not an integer: {quality!r}"
                ) from None
            if label != 1:
                continue
            try:
                pairs.append(
                    SentencePair(
                        id=f"{id1}_{id2}", reference=string1, paraphrase=string2, label=label
                    )
                )
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return pairs


@dataclass(frozen=True)
class EmbeddedText:
    """Per-token vectors for one text, plus the special-token mask."""

    source_id: str
    tokens: tuple[str, ...]
    vectors: np.ndarray
    special: tuple[bool, ...]


def read_embeddings_jsonl(path: str | Path) -> list[EmbeddedText]:
    """Read token-embedding records: one JSON object per line with keys
    ``id``, ``tokens``, ``vectors``, ``special``. Dimensionality must be
    constant within a file."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"embeddings file not found: {path}")
    out: list[EmbeddedText] = []
    dim: int | None = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            try:
                source_id = rec["id"]
                tokens = rec["tokens"]
                vectors = rec["vectors"]
                special = rec["special"]
            except KeyError as exc:
                raise DataError(f"{path}:{lineno}: missing key {exc}") from None
            vecs = np.asarray(vectors, dtype=np.float64)
            if vecs.ndim != 2:
                raise DataError(f"{path}:{lineno}: vectors must be a 2-D array")
            if dim is None:
                dim = vecs.shape[1]
            elif vecs.shape[1] != dim:
                raise DataError(
                    f"{path}:{lineno}: dimensionality {vecs.shape[1]} != {dim}"
                )
            if not (len(tokens) == vecs.shape[0] == len(special)):
                raise DataError(f"{path}:{lineno}: tokens/vectors/special lengths differ")
            out.append(
                EmbeddedText(
                    source_id=str(source_id),
                    tokens=tuple(tokens),
                    vectors=vecs,
                    special=tuple(bool(s) for s in special),
                )
            )
    return out


class TableEmbedder:
    """Static-table embedder: whitespace-ish tokens mapped to table vectors.

    Words absent from the table cannot be embedded and are dropped (counted
    per call via ``last_oov``). No special tokens are produced.
    """

    def __init__(self, table: EmbeddingTable):
        self.table = table
        self.last_oov = 0

    def embed_tokens(self, tokens: Sequence[str], source_id: str = "") -> EmbeddedText:
        kept = [t for t in tokens if t in self.table]
        self.last_oov = len(tokens) - len(kept)
        if kept:
            vectors = np.stack([self.table.vector(t) for t in kept])
        else:
            vectors = np.zeros((0, self.table.dim))
        return EmbeddedText(
            source_id=source_id,
            tokens=tuple(kept),
            vectors=vectors,
            special=tuple(False for _ in kept),
        )

    def embed_text(self, text: str, source_id: str = "") -> EmbeddedText:
        return self.embed_tokens(simple_word_tokenize(text), source_id=source_id)


class PrecomputedEmbeddings:
    """Pair embeddings loaded from two JSONL files keyed by sentence-pair id."""

    def __init__(self, reference_path: str | Path, paraphrase_path: str | Path):
        self._ref = {e.source_id: e for e in read_embeddings_jsonl(reference_path)}
        self._par = {e.source_id: e for e in read_embeddings_jsonl(paraphrase_path)}

    def embed_pair(self, pair: SentencePair) -> tuple[EmbeddedText, EmbeddedText]:
        try:
            return self._ref[pair.id], self._par[pair.id]
        except KeyError as exc:
            raise DataError(f"no embeddings for pair {exc}") from None


@dataclass(frozen=True)
class EstimatorConfig:
    """Which ID estimator to run and with what parameters."""

    name: str = ESTIMATOR_TWONN
    discard_fraction: float = 0.1
    k: int = 10

    def __post_init__(self) -> None:
        if self.name not in (ESTIMATOR_TWONN, ESTIMATOR_LBMLE):
            raise ValueError(f"unknown estimator {self.name!r}")

    def estimate(self, cloud: PointCloud) -> IdEstimate:
        if self.name == ESTIMATOR_TWONN:
            return two_nn(cloud, discard_fraction=self.discard_fraction)
        return levina_bickel(cloud, k=self.k)


def cloud_from_embedded(
    embedded: EmbeddedText, cfg: FilterConfig
) -> Union[PointCloud, FilteredOut]:
    return build_point_cloud(
        embedded.tokens,
        embedded.vectors,
        embedded.special,
        cfg,
        source_id=embedded.source_id,
    )


@dataclass(frozen=True)
class ExperimentConfig:
    """Full experiment description; echoed verbatim into report metadata."""

    mechanisms: tuple[str, ...] = ("madlib",)
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    trials: int = 3
    seed: int = 0
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    embedding_table: str | None = None
    provider: str | None = None
    clip_lo: float = -5.0
    clip_hi: float = 5.0
    max_len: int | None = None
    template_prefix: tuple[str, ...] = PromptTemplate().prefix
    template_suffix: tuple[str, ...] = PromptTemplate().suffix
    embedding_source: str = ""
    workers: int = 1

    def __post_init__(self) -> None:
        unknown = set(self.mechanisms) - set(MECHANISMS)
        if unknown:
            raise ValueError(f"unknown mechanisms: {sorted(unknown)}")
        if not self.mechanisms:
            raise ValueError("at least one mechanism is required")
        if not self.epsilons or any(e <= 0 for e in self.epsilons):
            raise ValueError("epsilons must be non-empty and strictly positive")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")

    @property
    def clip(self) -> ClipConfig:
        return ClipConfig(lo=self.clip_lo, hi=self.clip_hi)

    @property
    def template(self) -> PromptTemplate:
        return PromptTemplate(prefix=self.template_prefix, suffix=self.template_suffix)

    def metadata(self) -> dict[str, str]:
        return {
            "mechanisms": ",".join(self.mechanisms),
            "epsilons": ",".join(repr(e) for e in self.epsilons),
            "trials": str(self.trials),
            "seed": str(self.seed),
            "estimator": self.estimator.name,
            "discard_fraction": repr(self.estimator.discard_fraction),
            "k": str(self.estimator.k),
            "min_tokens": str(self.filter.min_tokens),
            "max_tokens": str(self.filter.max_tokens),
            "drop_special": str(self.filter.drop_special).lower(),
            "embedding_table": self.embedding_table or "",
            "provider": self.provider or "",
            "clip_lo": repr(self.clip_lo),
            "clip_hi": repr(self.clip_hi),
            "max_len": "" if self.max_len is None else str(self.max_len),
            "template": self.template.describe(),
            "embedding_source": self.embedding_source,
            # budgets are per emitted token; naive sequential composition is
            # epsilon * (tokens emitted) for a given sentence
            "epsilon_granularity": "per-token",
        }


def make_provider(descriptor: str) -> LogitProvider:
    """Build a provider from a descriptor: ``toy:<corpus path>`` or an URL."""
    if descriptor.startswith("toy:"):
        corpus_path = Path(descriptor[len("toy:"):])
        if not corpus_path.is_file():
            raise DataError(f"toy corpus not found: {corpus_path}")
        corpus = [
            line.split()
            for line in corpus_path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        return ToyBigramProvider(corpus)
    if descriptor.startswith(("http://", "https://")):
        return RemoteLogitProvider(descriptor)
    raise ValueError(f"unrecognized provider descriptor: {descriptor!r}")


@dataclass(frozen=True)
class ShiftRow:
    """Per-(mechanism, epsilon, trial, sentence) ID-shift record."""

    mechanism: str
    epsilon: float
    trial: int
    sentence_id: str
    id_reference: float
    id_transformed: float

    @property
    def shift(self) -> float:
        return self.id_transformed - self.id_reference

    def sort_key(self) -> tuple:
        return (self.mechanism, self.epsilon, self.trial, self.sentence_id)


@dataclass(frozen=True)
class SkipRecord:
    mechanism: str
    epsilon: float
    trial: int
    sentence_id: str
    reason: str

    def sort_key(self) -> tuple:
        return (self.mechanism, self.epsilon, self.trial, self.sentence_id)


@dataclass(frozen=True)
class CellStats:
    mechanism: str
    epsilon: float
    mean_shift: float
    std_shift: float
    mean_abs_shift: float
    count: int


@dataclass(frozen=True)
class BaselineStats:
    mean_shift: float
    std_shift: float
    pairs_used: int
    pairs_skipped: int


@dataclass(frozen=True)
class Report:
    rows: tuple[ShiftRow, ...]
    cells: tuple[CellStats, ...]
    baseline: BaselineStats | None = None
    metadata: dict = field(default_factory=dict)


def row_seed(root: int, mechanism: str, epsilon: float, trial: int, sentence_id: str) -> int:
    """Stable 64-bit seed for one grid row; independent of other rows."""
    key = f"{root}|{mechanism}|{epsilon!r}|{trial}|{sentence_id}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")


class _GridRunner:
    """Materialized resources for one run_grid call."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.table: EmbeddingTable | None = None
        self.provider: LogitProvider | None = None
        if config.embedding_table:
            self.table = load_embedding_table(config.embedding_table)
        needs_provider = any(m in ("causal", "mlm") for m in config.mechanisms)
        if needs_provider:
            if not config.provider:
                raise DataError("mechanisms causal/mlm require a provider descriptor")
            self.provider = make_provider(config.provider)
        if self.table is None:
            raise DataError("a static embedding table is required to embed texts")
        self.embedder = TableEmbedder(self.table)

    def _encode(self, tokens: Sequence[str]) -> list[int] | None:
        index = self.provider.vocab_index()
        ids = []
        for tok in tokens:
            if tok not in index:
                return None
            ids.append(index[tok])
        return ids

    def _decode(self, ids: Sequence[int]) -> list[str]:
        vocab = self.provider.vocab
        return [vocab[i] for i in ids]

    def rewrite(
        self, mechanism: str, tokens: list[str], epsilon: float, rng: np.random.Generator
    ) -> list[str]:
        budget = PrivacyBudget(epsilon)
        if mechanism == "madlib":
            rewritten, _ = madlib_rewrite(tokens, self.table, budget, rng)
            return rewritten
        ids = self._encode(tokens)
        if ids is None:
            raise _ProviderOov()
        if mechanism == "causal":
            sampler = SamplerConfig(
                max_len=self.config.max_len
                if self.config.max_len is not None
                else default_max_len(len(ids))
            )
            out_ids = causal_rewrite(
                self.provider,
                ids,
                budget,
                self.config.clip,
                sampler,
                rng,
                template=self.config.template,
            )
        else:
            out_ids = mlm_rewrite(self.provider, ids, budget, self.config.clip, rng)
        return self._decode(out_ids)

    def run_one(
        self, mechanism: str, epsilon: float, trial: int, pair: SentencePair
    ) -> ShiftRow | SkipRecord:
        def skip(reason: str) -> SkipRecord:
            log.warning(
                "skipping %s eps=%s trial=%s pair=%s: %s",
                mechanism, epsilon, trial, pair.id, reason,
            )
            return SkipRecord(mechanism, epsilon, trial, pair.id, reason)

        rng = np.random.default_rng(
            row_seed(self.config.seed, mechanism, epsilon, trial, pair.id)
        )
        tokens = simple_word_tokenize(pair.reference)
        try:
            rewritten = self.rewrite(mechanism, tokens, epsilon, rng)
        except _ProviderOov:
            return skip("provider-oov")
        except ProviderError as exc:
            return skip(f"provider-error: {exc}")

        ref_cloud = cloud_from_embedded(
            self.embedder.embed_tokens(tokens, source_id=pair.id), self.config.filter
        )
        out_cloud = cloud_from_embedded(
            self.embedder.embed_tokens(rewritten, source_id=pair.id), self.config.filter
        )
        if isinstance(ref_cloud, FilteredOut) or isinstance(out_cloud, FilteredOut):
            return skip("filtered")
        try:
            est_ref = self.config.estimator.estimate(ref_cloud)
            est_out = self.config.estimator.estimate(out_cloud)
        except DataError as exc:  # degenerate cloud or too few unique points
            return skip(f"degenerate: {exc}")
        return ShiftRow(
            mechanism=mechanism,
            epsilon=epsilon,
            trial=trial,
            sentence_id=pair.id,
            id_reference=est_ref.value,
            id_transformed=est_out.value,
        )


class _ProviderOov(Exception):
    """Sentence contains words outside the provider vocabulary."""


def run_grid(
    config: ExperimentConfig, pairs: Sequence[SentencePair]
) -> tuple[list[ShiftRow], list[SkipRecord]]:
    """Run mechanism x epsilon x trial x pair; returns rows and skips, sorted.

    Provider failures and filtered/degenerate clouds skip the row (logged and
    counted) rather than aborting the run. Results are identical for any
    worker count because every row derives its own generator.
    """
    runner = _GridRunner(config)
    tasks = [
        (mechanism, epsilon, trial, pair)
        for mechanism in config.mechanisms
        for epsilon in config.epsilons
        for trial in range(1, config.trials + 1)
        for pair in pairs
    ]
    workers = config.workers
    if workers > 1 and runner.provider is not None and not runner.provider.thread_safe:
        log.info("provider is single-threaded; serializing grid execution")
        workers = 1

    if workers == 1:
        results = [runner.run_one(*task) for task in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda t: runner.run_one(*t), tasks))

    rows = sorted((r for r in results if isinstance(r, ShiftRow)), key=ShiftRow.sort_key)
    skips = sorted((r for r in results if isinstance(r, SkipRecord)), key=SkipRecord.sort_key)
    return rows, skips


def aggregate(
    rows: Sequence[ShiftRow],
    baseline: BaselineStats | None = None,
    metadata: dict | None = None,
) -> Report:
    """Per-(mechanism, epsilon) mean and population std of the signed shift,
    plus the mean absolute shift."""
    if not rows:
        raise DataError("cannot aggregate an empty row set")
    cells: list[CellStats] = []
    keys = sorted({(r.mechanism, r.epsilon) for r in rows})
    for mechanism, epsilon in keys:
        shifts = np.array(
            [r.shift for r in rows if r.mechanism == mechanism and r.epsilon == epsilon]
        )
        cells.append(
            CellStats(
                mechanism=mechanism,
                epsilon=epsilon,
                mean_shift=float(shifts.mean()),
                std_shift=float(shifts.std(ddof=0)),
                mean_abs_shift=float(np.abs(shifts).mean()),
                count=int(shifts.size),
            )
        )
    return Report(
        rows=tuple(sorted(rows, key=ShiftRow.sort_key)),
        cells=tuple(cells),
        baseline=baseline,
        metadata=dict(metadata or {}),
    )


def baseline_shift(
    pairs: Sequence[SentencePair],
    source: Union[TableEmbedder, PrecomputedEmbeddings],
    estimator: EstimatorConfig,
    filter_cfg: FilterConfig,
) -> BaselineStats:
    """Mean ID(paraphrase) - ID(reference) over pairs surviving the filter.

    Pairs whose reference or paraphrase fails the length filter (or yields a
    degenerate cloud) are skipped and counted.
    """
    shifts: list[float] = []
    skipped = 0
    for pair in pairs:
        if isinstance(source, PrecomputedEmbeddings):
            ref_emb, par_emb = source.embed_pair(pair)
        else:
            ref_emb = source.embed_text(pair.reference, source_id=pair.id)
            par_emb = source.embed_text(pair.paraphrase, source_id=pair.id)
        ref_cloud = cloud_from_embedded(ref_emb, filter_cfg)
        par_cloud = cloud_from_embedded(par_emb, filter_cfg)
        if isinstance(ref_cloud, FilteredOut) or isinstance(par_cloud, FilteredOut):
            skipped += 1
            continue
        try:
            ref_est = estimator.estimate(ref_cloud)
            par_est = estimator.estimate(par_cloud)
        except DataError:  # degenerate cloud or too few unique points
            skipped += 1
            continue
        shifts.append(par_est.value - ref_est.value)
    if not shifts:
        raise DataError("no pairs survived the filter; baseline is undefined")
    arr = np.array(shifts)
    return BaselineStats(
        mean_shift=float(arr.mean()),
        std_shift=float(arr.std(ddof=0)),
        pairs_used=len(shifts),
        pairs_skipped=skipped,
    )


def run_experiment(
    config: ExperimentConfig,
    pairs: Sequence[SentencePair],
    baseline: BaselineStats | None = None,
) -> Report:
    """run_grid + aggregate, with skip counts folded into the metadata."""
    rows, skips = run_grid(config, pairs)
    metadata = config.metadata()
    metadata["pairs"] = str(len(pairs))
    metadata["rows"] = str(len(rows))
    metadata["skips"] = str(len(skips))
    reasons = sorted({s.reason.split(":")[0] for s in skips})
    for reason in reasons:
        metadata[f"skips_{reason}"] = str(
            sum(1 for s in skips if s.reason.split(":")[0] == reason)
        )
    if not rows:
        raise DataError("experiment produced no rows (all skipped)")
    return aggregate(rows, baseline=baseline, metadata=metadata)
