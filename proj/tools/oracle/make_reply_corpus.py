"""Builds tests/data/llm_replies.jsonl: chat-model reply shapes for the matrix
parser, each with the grid it must yield or the error kind it must raise.

Grids are drawn here and formatted into each reply shape, so the expected
grid never passes through the parser under test. Run from the repo root:

    python3 tools/oracle/make_reply_corpus.py
"""
import json

import numpy as np

rng = np.random.default_rng(20240612)


def grid(n=7):
    return rng.integers(0, 2, size=(n, n))


def rows(g, sep=" ", fmt=str):
    return [sep.join(fmt(v) for v in r) for r in g]


def text(g):
    return "\n".join("".join(str(v) for v in r) for r in g)


cases = []


def ok(name, reply, g):
    cases.append({"name": name, "reply": reply, "grid_size": len(g), "expect": "ok", "grid": text(g)})


def bad(name, reply, kind, n=7):
    cases.append({"name": name, "reply": reply, "grid_size": n, "expect": kind})


g = grid(); ok("plain-space", "\n".join(rows(g)), g)
g = grid(); ok("plain-trailing-newline", "\n".join(rows(g)) + "\n", g)
g = grid(); ok("packed", "\n".join(rows(g, sep="")), g)
g = grid(); ok("comma", "\n".join(rows(g, sep=",")), g)
g = grid(); ok("comma-space", "\n".join(rows(g, sep=", ")), g)
g = grid(); ok("tab", "\n".join(rows(g, sep="\t")), g)
g = grid(); ok("crlf", "\r\n".join(rows(g)), g)
g = grid(); ok("trailing-spaces", "\n".join(r + "   " for r in rows(g)), g)
g = grid(); ok("leading-indent", "\n".join("    " + r for r in rows(g)), g)
g = grid(); ok("blank-lines-between", "\n\n".join(rows(g)), g)
g = grid(); ok("fence", "```\n" + "\n".join(rows(g)) + "\n```", g)
g = grid(); ok("fence-python", "```python\n" + "\n".join(rows(g)) + "\n```", g)
g = grid(); ok("fence-text-prose", "Sure! Here is the grid:\n\n```text\n" + "\n".join(rows(g)) + "\n```\nEach 1 is a red tile.", g)
g = grid(); ok("prose-prefix", "Here is the matrix:\n" + "\n".join(rows(g)), g)
g = grid(); ok("prose-suffix", "\n".join(rows(g)) + "\n\nLet me know if you need anything else.", g)
g = grid(); ok("prose-both", "The grid as a matrix is:\n\n" + "\n".join(rows(g)) + "\n\nI hope this helps.", g)
g = grid(); ok("float-one-decimal", "\n".join(rows(g, fmt=lambda v: f"{v}.0")), g)
g = grid(); ok("float-numpy-dot", "\n".join(rows(g, fmt=lambda v: f"{v}.")), g)
g = grid(); ok("float-many-decimals", "\n".join(rows(g, fmt=lambda v: f"{v}.000000000000000000e+00"[:3] + "00")), g)
g = grid(); ok("pylist-one-line", "[" + ", ".join("[" + ", ".join(str(v) for v in r) + "]" for r in g) + "]", g)
g = grid(); ok("pylist-multiline", "[\n" + ",\n".join("  [" + ", ".join(str(v) for v in r) + "]" for r in g) + "\n]", g)
g = grid(); ok("pylist-compact", "[[" + "],[".join(",".join(str(v) for v in r) for r in g) + "]]", g)
g = grid(); ok("numpy-repr", "array([" + ",\n       ".join("[" + ", ".join(str(v) for v in r) + "]" for r in g) + "])", g)
g = grid(); ok("np-array-call", "np.array([" + ", ".join("[" + ", ".join(str(v) for v in r) + "]" for r in g) + "])", g)
g = grid(); ok("bracket-rows-space", "\n".join("[" + " ".join(str(v) for v in r) + "]" for r in g), g)
g = grid(); ok("matlab-semicolons", "[" + "; ".join(" ".join(str(v) for v in r) for r in g) + "]", g)
g = grid(); ok("row-labels", "\n".join(f"Row {i + 1}: " + r for i, r in enumerate(rows(g))), g)
g = grid(); ok("numbered-rows", "\n".join(f"{i + 1}. " + r for i, r in enumerate(rows(g))), g)
g = grid(); ok("pipes", "\n".join("| " + " | ".join(str(v) for v in r) + " |" for r in g), g)
g = grid(); ok("double-quoted-rows", "\n".join('"' + r + '"' for r in rows(g)), g)
g = grid(); ok("backtick-rows", "\n".join("`" + r + "`" for r in rows(g)), g)
g = grid(); ok("double-space", "\n".join(rows(g, sep="  ")), g)
g = grid(); ok("example-then-answer", "For example a 3x3 grid would be\n0 1 0\n1 0 1\n0 1 0\nFor your image:\n" + "\n".join(rows(g)), g)
g = grid(); ok("all-zero", "\n".join(rows(np.zeros((7, 7), dtype=int))), np.zeros((7, 7), dtype=int))
g = np.ones((7, 7), dtype=int); ok("all-one-fenced", "```\n" + "\n".join(rows(g)) + "\n```", g)
g = grid(3); ok("n3-plain", "\n".join(rows(g)), g)
g = grid(3); ok("n3-pylist", str(g.tolist()), g)
g = grid(5); ok("n5-packed-fence", "```\n" + "\n".join(rows(g, sep="")) + "\n```", g)
g = grid(4); ok("n4-comma-prose", "Matrix:\n" + "\n".join(rows(g, sep=",")), g)

bad("prose-only", "I'm sorry, but I can't determine the grid from this image.", "parse-failure")
bad("empty", "", "parse-failure")
bad("maybe-two-tokens", "maybe like this: 0 1", "parse-failure")
bad("non-binary-digits", "\n".join(" ".join(str(v) for v in r) for r in rng.integers(2, 9, size=(7, 7))), "parse-failure")
bad("words-grid", "\n".join(" ".join("red" if v else "white" for v in r) for r in grid()), "parse-failure")
bad("six-rows", "\n".join(rows(grid()[:6])), "size-mismatch")
bad("eight-rows", "\n".join(rows(np.vstack([grid(), grid()[:1]]))), "size-mismatch")
bad("short-row", "\n".join(rows(grid())[:6] + ["0 1 0 1 0 1"]), "size-mismatch")
bad("long-rows", "\n".join(rows(grid(8)[:7])), "size-mismatch")
bad("n7-for-n5", "\n".join(rows(grid())), "size-mismatch", n=5)
bad("fenced-six-rows", "```\n" + "\n".join(rows(grid()[:6])) + "\n```", "size-mismatch")

assert len(cases) == 50, len(cases)
with open("tests/data/llm_replies.jsonl", "w") as f:
    for c in cases:
        f.write(json.dumps(c, sort_keys=True) + "\n")
print(f"wrote {len(cases)} cases")
