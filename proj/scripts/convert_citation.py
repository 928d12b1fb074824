#!/usr/bin/env python3
"""Convert an ArnetMiner citation-network dump into the sagda graph directory.

Expected input: the .mat files distributed with UDA-GCN style benchmarks
(dblpv7.mat, acmv9.mat, citationv1.mat), each holding

    network  n x n sparse adjacency (citations, treated as undirected)
    attrb    n x d sparse bag-of-words features (d = 6775)
    group    n x C one-hot labels (C = 6)

Output: DIR/{edges.tsv, features.tsv, labels.tsv, meta.json}. Self-loops are
dropped and each undirected edge is written once. Pass --no-labels for a
target domain whose labels should not be available to training; write a pair
manifest by hand: {"source": "dblpv7", "target": "acmv9"}.

These datasets are not shipped. Dense storage means a 9k-node graph needs
about 650 MB for the adjacency alone.
"""

import argparse
import json
import pathlib

import numpy as np
import scipy.io
import scipy.sparse as sp


def convert(mat_path: pathlib.Path, out: pathlib.Path, labels: bool) -> None:
    mat = scipy.io.loadmat(mat_path)
    adj = sp.csr_matrix(mat["network"])
    feats = sp.csr_matrix(mat["attrb"]).astype(np.float64)
    group = np.asarray(sp.csr_matrix(mat["group"]).todense())
    n = adj.shape[0]
    if feats.shape[0] != n or group.shape[0] != n:
        raise SystemExit(f"{mat_path}: network, attrb and group disagree on the node count")

    sym = sp.triu(adj + adj.T, k=1).tocoo()
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "edges.tsv", "w") as f:
        for u, v in sorted(zip(sym.row.tolist(), sym.col.tolist())):
            f.write(f"{u}\t{v}\n")
    with open(out / "features.tsv", "w") as f:
        f.write(f"{n} {feats.shape[1]}\n")
        for row in feats.toarray():
            f.write(" ".join(repr(float(x)) for x in row) + "\n")
    if labels:
        if not np.all(group.sum(axis=1) == 1):
            raise SystemExit(f"{mat_path}: group rows must be one-hot")
        with open(out / "labels.tsv", "w") as f:
            for i, c in enumerate(group.argmax(axis=1).tolist()):
                f.write(f"{i}\t{c}\n")
    else:
        (out / "labels.tsv").unlink(missing_ok=True)
    (out / "meta.json").write_text(json.dumps({"num_classes": int(group.shape[1])}) + "\n")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("mat", type=pathlib.Path)
    parser.add_argument("out", type=pathlib.Path)
    parser.add_argument("--no-labels", action="store_true")
    args = parser.parse_args()
    convert(args.mat, args.out, not args.no_labels)


if __name__ == "__main__":
    main()
