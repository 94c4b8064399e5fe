#!/usr/bin/env python3
"""Writes random peptide corpora for the toy experiments.

Single-chain: <out>/train.fasta and <out>/val.fasta.
With --paired, also heavy/light files whose i-th records form one complex:
the light chain copies a window of the heavy chain with point mutations.
"""
import argparse
import os
import random

RESIDUES = "ACDEFGHIKLMNPQRSTVWY"


def peptide(rng, lo, hi):
    return "".join(rng.choice(RESIDUES) for _ in range(rng.randint(lo, hi)))


def write_fasta(path, prefix, seqs):
    with open(path, "w") as f:
        for i, s in enumerate(seqs):
            f.write(f">{prefix}_{i}\n")
            for j in range(0, len(s), 60):
                f.write(s[j:j + 60] + "\n")


def light_from_heavy(rng, heavy, lo, hi):
    n = rng.randint(lo, min(hi, len(heavy)))
    start = rng.randint(0, len(heavy) - n)
    out = list(heavy[start:start + n])
    for i in range(len(out)):
        if rng.random() < 0.1:
            out[i] = rng.choice(RESIDUES)
    return "".join(out)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--n-train", type=int, default=5000)
    ap.add_argument("--n-val", type=int, default=500)
    ap.add_argument("--min-len", type=int, default=2)
    ap.add_argument("--max-len", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--paired", action="store_true")
    args = ap.parse_args()

    rng = random.Random(args.seed)
    os.makedirs(args.out, exist_ok=True)
    for split, n in (("train", args.n_train), ("val", args.n_val)):
        seqs = [peptide(rng, args.min_len, args.max_len) for _ in range(n)]
        write_fasta(os.path.join(args.out, f"{split}.fasta"), split, seqs)
        if args.paired:
            light = [light_from_heavy(rng, s, args.min_len, args.max_len) for s in seqs]
            write_fasta(os.path.join(args.out, f"{split}_heavy.fasta"), split, seqs)
            write_fasta(os.path.join(args.out, f"{split}_light.fasta"), split, light)


if __name__ == "__main__":
    main()
