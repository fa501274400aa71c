"""Bridge CLI: batch embedding extraction and the logit service."""

from __future__ import annotations

import sys

import click

from .config import BridgeConfig


@click.group()
def cli() -> None:
    """Pretrained-model adapter for the DP rewriting toolkit."""


@cli.command("embed")
@click.option("--in", "in_path", required=True, type=click.Path(),
              help='Input JSONL of {"id", "text"} records.')
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Output token-embeddings JSONL (sidecar: <out>.meta.json).")
@click.option("--model", default="bert-base-uncased", show_default=True,
              help="Embedding model name or local path.")
@click.option("--layer", type=int, default=-1, show_default=True,
              help="Hidden-state index (0 = embedding output, -1 = last layer).")
@click.option("--device", default="cpu", show_default=True)
@click.option("--pool-words", is_flag=True, default=False,
              help="Mean-pool subword vectors into one vector per word.")
def embed_cmd(in_path, out_path, model, layer, device, pool_words) -> None:
    """Extract contextual token embeddings for each input text."""
    from .embed import embed_batch

    config = BridgeConfig(embedding_model=model, layer=layer, device=device)
    summary = embed_batch(in_path, out_path, config, pool_words=pool_words)
    click.echo(
        f"embedded {summary.records} texts (dim={summary.dim}, "
        f"layer={summary.layer}, truncated={summary.truncated}) -> {out_path}"
    )


@cli.command("export-pairs")
@click.option("--pairs", "pairs_path", required=True, type=click.Path(),
              help="Tab-separated sentence-pair file (quality id1 id2 s1 s2).")
@click.option("--out-ref", required=True, type=click.Path(),
              help='Output JSONL of {"id", "text"} reference sentences.')
@click.option("--out-par", required=True, type=click.Path(),
              help='Output JSONL of {"id", "text"} paraphrase sentences.')
def export_pairs_cmd(pairs_path, out_ref, out_par) -> None:
    """Split equivalent sentence pairs into two embed-ready text files."""
    import json
    from pathlib import Path

    path = Path(pairs_path)
    if not path.is_file():
        raise FileNotFoundError(f"pairs file not found: {path}")
    count = 0
    with path.open(encoding="utf-8") as fh, \
            Path(out_ref).open("w", encoding="utf-8") as ref_out, \
            Path(out_par).open("w", encoding="utf-8") as par_out:
        fh.readline()  # header
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            cols = line.rstrip("\n").split("\t")
            if len(cols) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 columns, got {len(cols)}")
            quality, id1, id2, string1, string2 = cols
            if quality != "1":
                continue
            pair_id = f"{id1}_{id2}"
            ref_out.write(json.dumps({"id": pair_id, "text": string1}) + "\n")
            par_out.write(json.dumps({"id": pair_id, "text": string2}) + "\n")
            count += 1
    click.echo(f"exported {count} pairs -> {out_ref}, {out_par}")


@cli.command("serve")
@click.option("--port", type=int, default=8800, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--causal-model", default=None,
              help="Model name or path served on /next_logits.")
@click.option("--masked-model", default=None,
              help="Model name or path served on /masked_logits.")
@click.option("--device", default="cpu", show_default=True)
def serve_cmd(port, host, causal_model, masked_model, device) -> None:
    """Run the raw-logit HTTP service."""
    from .server import serve

    config = BridgeConfig(
        causal_model=causal_model,
        masked_model=masked_model,
        device=device,
        port=port,
    )
    serve(config, host=host)


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return 1
    except FileNotFoundError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
