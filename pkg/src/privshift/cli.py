"""Command-line interface.

Subcommands: ``estimate-id``, ``privatize``, ``baseline``, ``experiment``,
``check-dp``. Flags can also come from a key-value config file (see
``load_config``); explicit flags win over config values.

Exit codes: 0 success, 1 usage error, 2 data error, 3 provider error.
"""

from __future__ import annotations

import math
import sys
from pathlib import Path

import click
import numpy as np

from .common import DataError, PrivacyBudget, ProviderError, simple_word_tokenize
from .dp_sentence import (
    ClipConfig,
    PromptTemplate,
    SamplerConfig,
    causal_rewrite,
    default_max_len,
    dp_ratio_check,
    mlm_rewrite,
)
from .dp_word import load_embedding_table, madlib_rewrite
from .geometry import FilterConfig, FilteredOut
from .harness import (
    EstimatorConfig,
    ExperimentConfig,
    PrecomputedEmbeddings,
    TableEmbedder,
    baseline_shift,
    cloud_from_embedded,
    load_pairs,
    make_provider,
    read_embeddings_jsonl,
    run_experiment,
)
from .report import emit

CONFIG_KEYS = {
    "mechanisms", "epsilons", "trials", "seed", "estimator", "discard_fraction",
    "k", "min_tokens", "max_tokens", "drop_special", "embedding_table",
    "provider", "pairs", "clip_lo", "clip_hi", "max_len", "template_prefix",
    "template_suffix", "embedding_source", "workers",
}


def load_config(path: str | Path) -> dict[str, str]:
    """Parse a flat ``key = value`` config file ('#' starts a comment)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"config file not found: {path}")
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in CONFIG_KEYS:
            raise DataError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value.strip()
    return values


def _floats(raw: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in raw.split(",") if v.strip())
    except ValueError:
        raise DataError(f"bad float list: {raw!r}") from None


def _words(raw: str) -> tuple[str, ...]:
    return tuple(raw.split())


def _bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise DataError(f"bad boolean: {raw!r}")


def build_experiment_config(
    cfg: dict[str, str],
    *,
    seed: int | None = None,
    epsilons: tuple[float, ...] = (),
    trials: int | None = None,
    estimator: str | None = None,
    discard_fraction: float | None = None,
    lb_k: int | None = None,
    min_tokens: int | None = None,
    max_tokens: int | None = None,
) -> ExperimentConfig:
    """Merge config-file values with flag overrides into an ExperimentConfig."""
    defaults = ExperimentConfig()

    def pick(flag, key, parse, fallback):
        if flag is not None and flag != ():
            return flag
        if key in cfg:
            return parse(cfg[key])
        return fallback

    template_prefix = (
        _words(cfg["template_prefix"]) if "template_prefix" in cfg
        else defaults.template_prefix
    )
    template_suffix = (
        _words(cfg["template_suffix"]) if "template_suffix" in cfg
        else defaults.template_suffix
    )
    try:
        return ExperimentConfig(
            mechanisms=pick(None, "mechanisms",
                            lambda v: tuple(m.strip() for m in v.split(",") if m.strip()),
                            defaults.mechanisms),
            epsilons=pick(epsilons or None, "epsilons", _floats, defaults.epsilons),
            trials=pick(trials, "trials", int, defaults.trials),
            seed=pick(seed, "seed", int, defaults.seed),
            estimator=EstimatorConfig(
                name=pick(estimator, "estimator", str, defaults.estimator.name),
                discard_fraction=pick(discard_fraction, "discard_fraction", float,
                                      defaults.estimator.discard_fraction),
                k=pick(lb_k, "k", int, defaults.estimator.k),
            ),
            filter=FilterConfig(
                min_tokens=pick(min_tokens, "min_tokens", int, defaults.filter.min_tokens),
                max_tokens=pick(max_tokens, "max_tokens", int, defaults.filter.max_tokens),
                drop_special=_bool(cfg["drop_special"]) if "drop_special" in cfg
                else defaults.filter.drop_special,
            ),
            embedding_table=cfg.get("embedding_table") or None,
            provider=cfg.get("provider") or None,
            clip_lo=float(cfg["clip_lo"]) if "clip_lo" in cfg else defaults.clip_lo,
            clip_hi=float(cfg["clip_hi"]) if "clip_hi" in cfg else defaults.clip_hi,
            max_len=int(cfg["max_len"]) if cfg.get("max_len") else None,
            template_prefix=template_prefix,
            template_suffix=template_suffix,
            embedding_source=cfg.get("embedding_source", ""),
            workers=int(cfg["workers"]) if "workers" in cfg else 1,
        )
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc


_seed_option = click.option("--seed", type=int, default=None, help="Root random seed.")
_config_option = click.option(
    "--config", "config_path", type=click.Path(), default=None,
    help="Key-value config file; flags override it.",
)
_estimator_options = [
    click.option("--estimator", type=click.Choice(["twonn", "lbmle"]), default=None,
                 help="Intrinsic-dimension estimator."),
    click.option("--discard-fraction", type=float, default=None,
                 help="TwoNN: fraction of largest ratios to drop."),
    click.option("--lb-k", type=int, default=None,
                 help="Levina-Bickel: neighbor count."),
    click.option("--min-tokens", type=int, default=None,
                 help="Minimum content tokens per text."),
    click.option("--max-tokens", type=int, default=None,
                 help="Truncate texts to this many tokens."),
]


def _add_options(options):
    def wrap(f):
        for option in reversed(options):
            f = option(f)
        return f
    return wrap


@click.group()
def cli() -> None:
    """Differentially-private text rewriting and ID-shift measurement."""


@cli.command("estimate-id")
@click.option("--in", "in_path", required=True, type=click.Path(),
              help="Token-embeddings JSONL (id, tokens, vectors, special).")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Output CSV path (default: stdout).")
@_config_option
@_add_options(_estimator_options)
def estimate_id_cmd(in_path, out_path, config_path, estimator, discard_fraction,
                    lb_k, min_tokens, max_tokens) -> None:
    """Estimate the intrinsic dimension of each text in an embeddings file."""
    cfg = load_config(config_path) if config_path else {}
    config = build_experiment_config(
        cfg, estimator=estimator, discard_fraction=discard_fraction, lb_k=lb_k,
        min_tokens=min_tokens, max_tokens=max_tokens,
    )
    lines = ["id,estimator,value,n_used,status"]
    for embedded in read_embeddings_jsonl(in_path):
        cloud = cloud_from_embedded(embedded, config.filter)
        if isinstance(cloud, FilteredOut):
            lines.append(f"{embedded.source_id},{config.estimator.name},,,filtered")
            continue
        try:
            est = config.estimator.estimate(cloud)
        except DataError:
            lines.append(f"{embedded.source_id},{config.estimator.name},,,degenerate")
            continue
        lines.append(
            f"{embedded.source_id},{est.estimator},{est.value!r},{est.n_used},ok"
        )
    text = "\n".join(lines) + "\n"
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


@cli.command("privatize")
@click.option("--in", "in_path", type=click.Path(), default=None,
              help="Input text file, one sentence per line (default: stdin).")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Output file (default: stdout).")
@click.option("--mechanism", type=click.Choice(["madlib", "causal", "mlm"]),
              required=True)
@click.option("--epsilon", "epsilons", type=float, multiple=True, required=True,
              help="Privacy budget (exactly one for this command).")
@click.option("--embedding-table", type=click.Path(), default=None)
@click.option("--provider", type=str, default=None,
              help="Provider descriptor: toy:<corpus path> or http URL.")
@_seed_option
@_config_option
def privatize_cmd(in_path, out_path, mechanism, epsilons, embedding_table,
                  provider, seed, config_path) -> None:
    """Rewrite text under the chosen mechanism and budget."""
    if len(epsilons) != 1:
        raise click.UsageError("privatize takes exactly one --epsilon")
    cfg = load_config(config_path) if config_path else {}
    if embedding_table is None:
        embedding_table = cfg.get("embedding_table")
    if provider is None:
        provider = cfg.get("provider")
    if seed is None:
        seed = int(cfg.get("seed", "0"))
    budget = PrivacyBudget(epsilons[0])
    clip = ClipConfig(
        lo=float(cfg.get("clip_lo", -5.0)), hi=float(cfg.get("clip_hi", 5.0))
    )
    template = PromptTemplate(
        prefix=_words(cfg["template_prefix"]) if "template_prefix" in cfg
        else PromptTemplate().prefix,
        suffix=_words(cfg["template_suffix"]) if "template_suffix" in cfg
        else PromptTemplate().suffix,
    )

    if mechanism == "madlib":
        if not embedding_table:
            raise click.UsageError("madlib requires --embedding-table")
        table = load_embedding_table(embedding_table)
    else:
        if not provider:
            raise click.UsageError(f"{mechanism} requires --provider")
        logit_provider = make_provider(provider)
        index = logit_provider.vocab_index()

    text_in = Path(in_path).read_text(encoding="utf-8") if in_path else sys.stdin.read()
    rng = np.random.default_rng(seed)
    out_lines = []
    emitted = 0
    for line in text_in.splitlines():
        tokens = simple_word_tokenize(line)
        if not tokens:
            out_lines.append("")
            continue
        if mechanism == "madlib":
            rewritten, _ = madlib_rewrite(tokens, table, budget, rng)
        else:
            missing = [t for t in tokens if t not in index]
            if missing:
                raise DataError(
                    f"words outside the provider vocabulary: {missing[:5]}"
                )
            ids = [index[t] for t in tokens]
            if mechanism == "causal":
                sampler = SamplerConfig(max_len=default_max_len(len(ids)))
                out_ids = causal_rewrite(
                    logit_provider, ids, budget, clip, sampler, rng, template=template
                )
            else:
                out_ids = mlm_rewrite(logit_provider, ids, budget, clip, rng)
            vocab = logit_provider.vocab
            rewritten = [vocab[i] for i in out_ids]
        emitted += len(rewritten)
        out_lines.append(" ".join(rewritten))
    text = "\n".join(out_lines) + "\n"
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)
    # epsilon is per token; show the naive sequential composition as well
    click.echo(
        f"per-token epsilon={budget.epsilon:g}; naive composition over "
        f"{emitted} emitted tokens: epsilon_total={budget.epsilon * emitted:g}",
        err=True,
    )


@cli.command("baseline")
@click.option("--pairs", "pairs_path", type=click.Path(), default=None,
              help="Tab-separated sentence-pair file.")
@click.option("--embedding-table", type=click.Path(), default=None,
              help="Static table used to embed both sides of each pair.")
@click.option("--embeddings-ref", type=click.Path(), default=None,
              help="Precomputed reference embeddings JSONL (keyed by pair id).")
@click.option("--embeddings-par", type=click.Path(), default=None,
              help="Precomputed paraphrase embeddings JSONL (keyed by pair id).")
@_config_option
@_add_options(_estimator_options)
def baseline_cmd(pairs_path, embedding_table, embeddings_ref, embeddings_par,
                 config_path, estimator, discard_fraction, lb_k,
                 min_tokens, max_tokens) -> None:
    """Mean ID shift between references and their human paraphrases."""
    cfg = load_config(config_path) if config_path else {}
    config = build_experiment_config(
        cfg, estimator=estimator, discard_fraction=discard_fraction, lb_k=lb_k,
        min_tokens=min_tokens, max_tokens=max_tokens,
    )
    pairs_path = pairs_path or cfg.get("pairs")
    if not pairs_path:
        raise click.UsageError("baseline requires --pairs (or 'pairs' in the config)")
    pairs = load_pairs(pairs_path)
    if embeddings_ref or embeddings_par:
        if not (embeddings_ref and embeddings_par):
            raise click.UsageError(
                "--embeddings-ref and --embeddings-par must be given together"
            )
        source = PrecomputedEmbeddings(embeddings_ref, embeddings_par)
    else:
        table_path = embedding_table or cfg.get("embedding_table")
        if not table_path:
            raise click.UsageError(
                "baseline requires --embedding-table or --embeddings-ref/par"
            )
        source = TableEmbedder(load_embedding_table(table_path))
    stats = baseline_shift(pairs, source, config.estimator, config.filter)
    click.echo(
        f"baseline mean shift {stats.mean_shift:+.6f} "
        f"(std {stats.std_shift:.6f}, pairs used {stats.pairs_used}, "
        f"skipped {stats.pairs_skipped})"
    )


@cli.command("experiment")
@click.option("--pairs", "pairs_path", type=click.Path(), default=None,
              help="Tab-separated sentence-pair file (or 'pairs' in config).")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Output directory for report.csv and report.svg.")
@click.option("--epsilon", "epsilons", type=float, multiple=True,
              help="Privacy budget (repeatable; overrides config).")
@click.option("--trials", type=int, default=None)
@click.option("--with-baseline/--no-baseline", default=True,
              help="Compute the human-paraphrase baseline from the same pairs.")
@_seed_option
@_config_option
@_add_options(_estimator_options)
def experiment_cmd(pairs_path, out_dir, epsilons, trials, with_baseline, seed,
                   config_path, estimator, discard_fraction, lb_k,
                   min_tokens, max_tokens) -> None:
    """Run the full mechanism x epsilon x trial grid and write CSV + SVG."""
    cfg = load_config(config_path) if config_path else {}
    config = build_experiment_config(
        cfg, seed=seed, epsilons=tuple(epsilons), trials=trials,
        estimator=estimator, discard_fraction=discard_fraction, lb_k=lb_k,
        min_tokens=min_tokens, max_tokens=max_tokens,
    )
    pairs_path = pairs_path or cfg.get("pairs")
    if not pairs_path:
        raise click.UsageError("experiment requires --pairs (or 'pairs' in the config)")
    pairs = load_pairs(pairs_path)
    baseline = None
    if with_baseline:
        if not config.embedding_table:
            raise click.UsageError("baseline needs 'embedding_table' in the config")
        source = TableEmbedder(load_embedding_table(config.embedding_table))
        baseline = baseline_shift(pairs, source, config.estimator, config.filter)
    report = run_experiment(config, pairs, baseline=baseline)
    out = Path(out_dir)
    csv_path = emit(report, "csv", out / "report.csv")
    svg_path = emit(report, "svg-plot", out / "report.svg")
    click.echo(f"wrote {csv_path} and {svg_path} ({len(report.rows)} rows, "
               f"{report.metadata.get('skips', '0')} skips)")


@cli.command("check-dp")
@click.option("--vocab-size", type=int, default=3, show_default=True)
@click.option("--clip-lo", type=float, default=None, help="Default -1.")
@click.option("--clip-hi", type=float, default=None, help="Default 1.")
@click.option("--epsilon", "epsilons", type=float, multiple=True,
              help="Repeatable; default 0.5, 1, 2.")
@click.option("--grid-step", type=float, default=0.25, show_default=True)
@_config_option
def check_dp_cmd(vocab_size, clip_lo, clip_hi, epsilons, grid_step,
                 config_path) -> None:
    """Verify the exponential-mechanism bound by exhaustive enumeration."""
    cfg = load_config(config_path) if config_path else {}
    if clip_lo is None:
        clip_lo = float(cfg.get("clip_lo", -1.0))
    if clip_hi is None:
        clip_hi = float(cfg.get("clip_hi", 1.0))
    if not epsilons:
        epsilons = _floats(cfg["epsilons"]) if "epsilons" in cfg else (0.5, 1.0, 2.0)
    clip = ClipConfig(lo=clip_lo, hi=clip_hi)
    failures = 0
    for eps in epsilons:
        ratio = dp_ratio_check(clip, PrivacyBudget(eps), vocab_size, grid_step)
        bound = math.exp(eps)
        ok = ratio <= bound + 1e-9
        failures += 0 if ok else 1
        click.echo(
            f"epsilon={eps:g}: max ratio {ratio:.9f} vs bound {bound:.9f} "
            f"[{'PASS' if ok else 'FAIL'}]"
        )
    if failures:
        raise DataError(f"{failures} budget(s) violated the exp(epsilon) bound")


def main(argv: list[str] | None = None) -> int:
    """Entry point with spec'd exit codes (0 ok, 1 usage, 2 data, 3 provider)."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except ProviderError as exc:
        click.echo(f"provider error: {exc}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
