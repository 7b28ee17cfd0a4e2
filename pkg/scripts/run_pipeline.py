"""Run every pipeline stage on a corpus (the bundled mini corpus by default).

Each stage writes into <out>/<stage>/ alongside its run_config.toml.
"""
import argparse
import sys
import time
from importlib import resources
from pathlib import Path

from hclex.cli import main

MINI = resources.files("hclex").joinpath("data", "mini_corpus.txt")


def stages(corpus, root, seed, epochs, k_max):
    return [
        ("prepare", "--corpus", corpus),
        ("train", "--tokens", root / "prepare/tokens.txt", "--seed", seed, "--epochs", epochs),
        ("expand", "--embeddings", root / "train/embeddings.bin"),
        ("review", "--candidates", root / "expand/candidates.csv"),
        ("cluster", "--embeddings", root / "train/embeddings.bin", "--lexicon", root / "review/lexicon.csv",
         "--k-max", k_max, "--seed", seed),
        ("score", "--corpus", corpus, "--lexicon", root / "review/lexicon.csv"),
        ("aggregate", "--scores", root / "score/scores.csv", "--corpus", corpus),
    ]


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--corpus", type=Path, default=Path(str(MINI)))
    ap.add_argument("--out", type=Path, default=Path("runs/mini"))
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--epochs", type=int, default=5)
    ap.add_argument("--k-max", type=int, default=25)
    args = ap.parse_args()
    for stage, *rest in stages(args.corpus, args.out, args.seed, args.epochs, args.k_max):
        t0 = time.perf_counter()
        code = main([stage, *map(str, rest), "--out", str(args.out / stage)])
        print(f"{stage:10s} exit={code} {time.perf_counter() - t0:6.2f}s")
        if code:
            sys.exit(code)
