"""Runs `protflow eval` on small inputs and validates the report against the schema."""
import argparse
import json
import pathlib
import subprocess
import sys
import tempfile

import jsonschema


def write_fasta(path, seqs):
    path.write_text("".join(f">s{i}\n{s}\n" for i, s in enumerate(seqs)))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--binary", required=True)
    ap.add_argument("--schema", required=True)
    args = ap.parse_args()
    schema = json.loads(pathlib.Path(args.schema).read_text())

    gen = ["ACDEFGHIK", "LMNPQRST", "VWYACD", "KKLLEE", "GGSGGS"]
    ref = ["ACDEFGHIKL", "MNPQRSTV", "WYACDE", "KLEKLE", "GSGSGS"]
    with tempfile.TemporaryDirectory() as tmp:
        d = pathlib.Path(tmp)
        write_fasta(d / "gen.fasta", gen)
        write_fasta(d / "ref.fasta", ref)
        write_fasta(d / "ref_big.fasta", ref + ["AC"])
        (d / "scores.csv").write_text("sequence_id,score\n" + "".join(f"s{i},{0.2 * i}\n" for i in range(5)))
        cases = [
            ["--gen", str(d / "gen.fasta"), "--ref", str(d / "ref.fasta"), "--out", str(d / "a"),
             "--external-scores", str(d / "scores.csv"), "--thresholds", "0.5,0.8"],
            ["--gen", str(d / "gen.fasta"), "--ref", str(d / "ref_big.fasta"), "--out", str(d / "b")],
            ["--gen", str(d / "gen.fasta"), "--ref", str(d / "gen.fasta"), "--out", str(d / "c"), "--k", "3"],
        ]
        for i, extra in enumerate(cases):
            proc = subprocess.run([args.binary, "eval", *extra], capture_output=True, text=True)
            if proc.returncode != 0:
                print(proc.stdout, proc.stderr, file=sys.stderr)
                return 1
            report = json.loads((d / f"{'abc'[i]}.json").read_text())
            jsonschema.validate(report, schema)
            print(f"case {i}: {len(report['metrics'])} metrics valid")
    return 0


if __name__ == "__main__":
    sys.exit(main())
