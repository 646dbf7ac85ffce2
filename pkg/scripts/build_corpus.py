"""Build the bundled desk corpus from US State of the Union addresses.

The addresses are works of the US Government (public domain). Source files
come from the ``@stdlib/datasets-sotu`` npm package (``package/data/*.txt``)::

    curl -sO https://registry.npmjs.org/@stdlib/datasets-sotu/-/datasets-sotu-0.2.3.tgz
    tar xzf datasets-sotu-0.2.3.tgz
    python scripts/build_corpus.py package/data src/adapmixed/data

Private documents are drawn from 1993-2008 addresses, the held-out evaluation
text from 2009-2010, and the public split from 1850-1859, so the public model
sees a related but older register of English.
"""
import argparse
import re
from pathlib import Path

ALLOWED = re.compile(r"[^a-z0-9 .,;:'?!\-]")

PRIVATE_YEARS = range(1993, 2009)
EVAL_YEARS = range(2009, 2011)
PUBLIC_YEARS = range(1850, 1860)

DOC_CHARS = 480


def normalize(text):
    text = text.lower().replace("\u2014", " - ").replace('"', "")
    text = ALLOWED.sub(" ", text)
    return re.sub(r"\s+", " ", text).strip()


def chunk(text, size=DOC_CHARS):
    """Group whole sentences into documents of roughly ``size`` characters."""
    sentences = re.split(r"(?<=[.?!]) ", text)
    docs, cur = [], ""
    for s in sentences:
        cur = f"{cur} {s}".strip()
        if len(cur) >= size:
            docs.append(cur)
            cur = ""
    if len(cur) > size // 4:
        docs.append(cur)
    return docs


def collect(src, years, budget):
    docs = []
    for path in sorted(src.glob("*.txt")):
        if int(path.name[:4]) not in years:
            continue
        for d in chunk(normalize(path.read_text(encoding="utf-8"))):
            docs.append(d)
            budget -= len(d) + 1
            if budget <= 0:
                return docs
    return docs


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("src", type=Path)
    ap.add_argument("out", type=Path)
    ap.add_argument("--private-bytes", type=int, default=62_000)
    ap.add_argument("--public-bytes", type=int, default=30_000)
    ap.add_argument("--eval-bytes", type=int, default=8_000)
    args = ap.parse_args()

    splits = {
        "private.txt": collect(args.src, PRIVATE_YEARS, args.private_bytes),
        "public.txt": collect(args.src, PUBLIC_YEARS, args.public_bytes),
        "eval.txt": collect(args.src, EVAL_YEARS, args.eval_bytes),
    }
    args.out.mkdir(parents=True, exist_ok=True)
    for name, docs in splits.items():
        (args.out / name).write_text("\n".join(docs) + "\n", encoding="utf-8")
        print(f"{name}: {len(docs)} documents, {sum(map(len, docs))} chars")


if __name__ == "__main__":
    main()
