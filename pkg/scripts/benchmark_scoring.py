"""Scoring throughput on synthetic text, for one or more worker counts."""
import argparse
import time

from hclex.lexicon import load_published_lexicon
from hclex.scorer import compile_lexicon, score_corpus
from hclex.synthetic import bulk_texts

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--mb", type=float, default=100.0)
    ap.add_argument("--workers", type=int, nargs="+", default=[1, 4])
    ap.add_argument("--seed", type=int, default=9)
    args = ap.parse_args()
    texts = bulk_texts(int(args.mb * 1e6), seed=args.seed)
    mb = sum(len(t.encode("utf-8")) for t in texts) / 1e6
    matcher = compile_lexicon(load_published_lexicon())
    score_corpus(matcher, texts[:2])
    pairs = [(str(i), t) for i, t in enumerate(texts)]
    base = None
    for w in args.workers:
        t0 = time.perf_counter()
        score_corpus(matcher, pairs, workers=w, batch_size=32)
        rate = mb / (time.perf_counter() - t0)
        base = base or rate
        print(f"workers={w:2d}  {rate:7.1f} MB/s  speedup {rate / base:4.2f}x  ({mb:.0f} MB, {len(texts)} docs)")
