#!/usr/bin/env python3
"""
Compare two output directories of the runner file by file.

Reruns with identical config and seeds must produce byte-identical files;
this script reports every file that is missing on one side or differs.

Usage:
  python scripts/main.py run --config configs/elliptic1d.ini --out results/a
  python scripts/main.py run --config configs/elliptic1d.ini --out results/b
  python scripts/validate_results.py results/a results/b
"""
from __future__ import annotations

import argparse
from collections import Counter
from pathlib import Path


def _read_lines(path: Path) -> list[str]:
    with path.open("r", encoding="utf-8") as f:
        return [ln.rstrip("\n") for ln in f]


def compare(a: Path, b: Path) -> dict:
    if not a.exists() and not b.exists():
        return {"status": "missing", "message": "Both files missing"}
    if not a.exists():
        return {"status": "missing", "message": f"{a} missing"}
    if not b.exists():
        return {"status": "missing", "message": f"{b} missing"}
    if a.read_bytes() == b.read_bytes():
        return {"status": "match", "message": "Byte-identical"}

    la = Counter(_read_lines(a))
    lb = Counter(_read_lines(b))
    only_a = la - lb
    only_b = lb - la
    return {
        "status": "mismatch",
        "message": f"Diffs: +first={sum(only_a.values())}, +second={sum(only_b.values())}",
        "only_a_samples": list(only_a.items())[:5],
        "only_b_samples": list(only_b.items())[:5],
    }


def compare_dirs(first: Path, second: Path) -> dict[str, dict]:
    names = sorted({p.name for p in first.glob("*") if p.is_file()} | {p.name for p in second.glob("*") if p.is_file()})
    return {name: compare(first / name, second / name) for name in names}


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    p = argparse.ArgumentParser(description="Byte-compare two runner output directories")
    p.add_argument("first", help="First output directory")
    p.add_argument("second", help="Second output directory")
    return p.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    first, second = Path(args.first), Path(args.second)
    print(f"Output comparison ({first} vs {second})\n")
    results = compare_dirs(first, second)
    if not results:
        print("No files found")
        return 2
    any_mismatch = False
    for name, res in results.items():
        print(f"  - {name}: {res['status']} - {res['message']}")
        if res["status"] != "match":
            any_mismatch = True
        for key, label in (("only_a_samples", "only in first"), ("only_b_samples", "only in second")):
            if res.get(key):
                print(f"    e.g., {label}:")
                for line, count in res[key]:
                    print(f"      {count}x {line}")
    return 2 if any_mismatch else 0


if __name__ == "__main__":
    raise SystemExit(main())
