"""Command line: corpus generation, training, sidecar prediction.

    nmt make-corpus --out corpus.jsonl --samples 50 --seed 7
    nmt train --corpus corpus.jsonl --out ckpt/ --epochs 200
    nmt predict --model ckpt/ --ir fig2.ir --out fig2.pred
"""

from __future__ import annotations

import sys

import click

from .corpus import generate_corpus, read_corpus, write_corpus
from .sidecar import emit_predictions
from .train import TrainConfig, load_checkpoint, save_checkpoint, train


@click.group()
def main():
    """Toy semantic-recovery model for storage slots."""


@main.command("make-corpus")
@click.option("--out", required=True, type=click.Path())
@click.option("--samples", default=50, show_default=True)
@click.option("--seed", default=7, show_default=True)
def make_corpus(out, samples, seed):
    corpus = generate_corpus(n_samples=samples, seed=seed)
    write_corpus(corpus, out)
    click.echo(f"wrote {len(corpus)} samples to {out}")


@main.command("train")
@click.option("--corpus", "corpus_path", required=True,
              type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--epochs", default=200, show_default=True)
@click.option("--lr", default=2e-3, show_default=True)
@click.option("--vocab-size", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--quiet", is_flag=True)
def train_cmd(corpus_path, out_dir, epochs, lr, vocab_size, seed, quiet):
    samples = read_corpus(corpus_path)
    config = TrainConfig(epochs=epochs, lr=lr, vocab_size=vocab_size,
                         seed=seed)
    log = None if quiet else click.echo
    model, bpe, categories, history = train(samples, config, log=log)
    save_checkpoint(out_dir, model, bpe, categories)
    click.echo(f"final accuracy {history[-1][1]:.3f}; checkpoint in {out_dir}")


@main.command("predict")
@click.option("--model", "model_dir", required=True,
              type=click.Path(exists=True))
@click.option("--ir", "ir_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--width", default=3, show_default=True)
def predict(model_dir, ir_path, out, width):
    model, bpe, categories = load_checkpoint(model_dir)
    with open(ir_path) as fh:
        ir_text = fh.read()
    lines = emit_predictions(model, bpe, categories, ir_text, out, width)
    click.echo(f"wrote {len(lines)} predictions to {out}")


if __name__ == "__main__":
    main()
