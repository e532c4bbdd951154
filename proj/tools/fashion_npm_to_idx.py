#!/usr/bin/env python3
"""Convert the `fashion-mnist` npm package's per-class JSON files into IDX.

The npm package ships src/clothes/<label>.json, each holding {"data": [[784 ints], ...]}.
Empty rows are skipped. This writes train-images-idx3-ubyte.gz / train-labels-idx1-ubyte.gz into --out;
instances are written class by class in package order.

    python3 tools/fashion_npm_to_idx.py --package /tmp/package --out $CAIPI_DATA_DIR/fashion
"""
import argparse
import gzip
import json
import pathlib
import struct


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--package", required=True, help="unpacked npm package root")
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    root = pathlib.Path(args.package) / "src" / "clothes"
    images = bytearray()
    labels = bytearray()
    for label in range(10):
        rows = json.loads((root / f"{label}.json").read_text())["data"]
        for row in rows:
            # 0.json carries two empty placeholder rows
            if len(row) == 0:
                continue
            if len(row) != 784:
                raise SystemExit(f"{label}.json: row of length {len(row)}")
            images.extend(bytes(row))
            labels.append(label)

    n = len(labels)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with gzip.open(out / "train-images-idx3-ubyte.gz", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(images)
    with gzip.open(out / "train-labels-idx1-ubyte.gz", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels)
    print(f"wrote {n} instances to {out}")


if __name__ == "__main__":
    main()
