"""Regenerate the bundled 50-document mini corpus (src/hclex/data/mini_corpus.txt)."""
import argparse
from pathlib import Path

from hclex.corpus import save_combined
from hclex.synthetic import hc_corpus

DEFAULT = Path(__file__).resolve().parents[1] / "src" / "hclex" / "data" / "mini_corpus.txt"

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=DEFAULT)
    ap.add_argument("--docs", type=int, default=50)
    ap.add_argument("--seed", type=int, default=2021)
    args = ap.parse_args()
    corpus = hc_corpus(args.docs, seed=args.seed)
    save_combined(corpus.documents, args.out)
    print(f"wrote {len(corpus.documents)} documents to {args.out}")
