#!/usr/bin/env python3
"""Convert the Pubmed-Diabetes tab files to the cln TSV layout.

    python3 tools/pubmed_to_tsv.py Pubmed-Diabetes/data out/pubmed

Reads Pubmed-Diabetes.NODE.paper.tab and Pubmed-Diabetes.DIRECTED.cites.tab
and writes nodes.tsv, edges.tsv and labels.tsv. Words absent from a paper get
weight 0. Citations become one directed relation, "cites".
"""

import argparse
import sys
from pathlib import Path

NODE_FILE = "Pubmed-Diabetes.NODE.paper.tab"
CITES_FILE = "Pubmed-Diabetes.DIRECTED.cites.tab"


def read_nodes(path):
    with open(path, encoding="utf-8") as f:
        f.readline()  # NODE paper
        header = f.readline().rstrip("\n").split("\t")
        words = []
        for field in header:
            kind, _, rest = field.partition(":")
            if kind == "numeric":
                words.append(rest.split(":")[0])
        index = {w: k for k, w in enumerate(words)}
        papers = []
        for line_no, line in enumerate(f, start=3):
            parts = line.rstrip("\n").split("\t")
            if not parts or not parts[0]:
                continue
            pid, label, feats = parts[0], None, [0.0] * len(words)
            for part in parts[1:]:
                key, _, value = part.partition("=")
                if key == "label":
                    label = value
                elif key in index:
                    feats[index[key]] = float(value)
            if label is None:
                sys.exit(f"{path}:{line_no}: paper {pid} has no label")
            papers.append((pid, label, feats))
    return words, papers


def read_cites(path, known):
    edges, skipped = [], 0
    with open(path, encoding="utf-8") as f:
        f.readline()  # DIRECTED cites
        f.readline()  # NO_FEATURES
        for line in f:
            parts = line.rstrip("\n").split("\t")
            if len(parts) < 4:
                continue
            src = parts[1].removeprefix("paper:")
            dst = parts[3].removeprefix("paper:")
            if src not in known or dst not in known or src == dst:
                skipped += 1
                continue
            edges.append((src, dst))
    # The raw file repeats some citations.
    unique = list(dict.fromkeys(edges))
    return unique, skipped + len(edges) - len(unique)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("src", type=Path, help="directory holding the .tab files")
    ap.add_argument("out", type=Path, help="output directory")
    args = ap.parse_args()

    words, papers = read_nodes(args.src / NODE_FILE)
    edges, skipped = read_cites(args.src / CITES_FILE, {p[0] for p in papers})
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "nodes.tsv", "w", encoding="utf-8") as f:
        f.write("id\t" + "\t".join(words) + "\n")
        for pid, _, feats in papers:
            f.write(pid + "\t" + "\t".join(repr(v) for v in feats) + "\n")
    with open(args.out / "labels.tsv", "w", encoding="utf-8") as f:
        for pid, label, _ in papers:
            f.write(f"{pid}\t{label}\n")
    with open(args.out / "edges.tsv", "w", encoding="utf-8") as f:
        for src, dst in edges:
            f.write(f"{src}\t{dst}\tcites\tuni\n")
    print(f"papers\t{len(papers)}\nwords\t{len(words)}\ncitations\t{len(edges)}\nskipped\t{skipped}")


if __name__ == "__main__":
    main()
