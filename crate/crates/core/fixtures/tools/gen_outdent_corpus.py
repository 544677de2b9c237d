"""Builds fixtures/outdent_corpus.json from hand-labelled keystrokes.

Every hand label is checked against the reference labeller before the file
is written; a disagreement aborts generation.
"""

import json
import pathlib
import sys

from outdent_reference import label

B = lambda h, s, e: {"headerLine": h, "startLine": s, "endLine": e}

CASES = [
    ("simple-def", "def f():\n    x = 1\n", 2, 0, "y", B(0, 0, 1)),
    ("newline-only", "def f():\n    x = 1\n    ", 2, 4, "\n", None),
    ("comment-at-col0", "def f():\n    return 1\n", 2, 0, "#", None),
    ("method-to-class-body", "class A:\n    def m(self):\n        pass\n    ", 3, 4, "x", B(1, 1, 2)),
    ("two-scopes-innermost", "class A:\n    def m(self):\n        return 1\n", 3, 0, "z", B(1, 1, 2)),
    ("else-branch", "if x:\n    y()\nelse:\n    z()\n", 4, 0, "w", B(2, 2, 3)),
    ("retype-closing-line", "def f():\n    x = 1\ny", 2, 1, "z", None),
    ("docstring-only-body", 'def f():\n    """Doc."""\n', 2, 0, "x", None),
    ("docstring-then-code", 'def f():\n    """Doc."""\n    return 1\n', 3, 0, "x", B(0, 0, 2)),
    ("tab-indent", "def f():\n\tx = 1\n", 2, 0, "y", B(0, 0, 1)),
    ("comment-col0-inside", "def f():\n    x = 1\n# note\n", 3, 0, "y", B(0, 0, 1)),
    ("blank-lines-in-body", "def f():\n    x = 1\n\n    y = 2\n\n", 5, 0, "z", B(0, 0, 3)),
    ("for-loop", "for i in range(3):\n    print(i)\n", 2, 0, "p", B(0, 0, 1)),
    ("while-in-def", "def f():\n    while True:\n        break\n    ", 3, 4, "r", B(1, 1, 2)),
    ("still-inside-while", "def f():\n    while True:\n        break\n        ", 3, 8, "x", None),
    ("header-trailing-comment", "def f():  # entry\n    pass\n", 2, 0, "x", B(0, 0, 1)),
    ("colon-in-string", "s = 'a:'\nt = 1\n", 2, 0, "u", None),
    ("with-block", "with open(p) as fh:\n    data = fh.read()\n", 2, 0, "d", B(0, 0, 1)),
    ("except-branch", "try:\n    a()\nexcept E:\n    b()\n", 4, 0, "c", B(2, 2, 3)),
    ("try-body", "try:\n    a()\n", 2, 0, "e", B(0, 0, 1)),
    ("empty-body-header", "def f():\n", 1, 0, "x", None),
    ("edit-inside-body", "def f():\n    x = 1\n", 1, 9, "0", None),
    ("edit-header-name", "def f():\n    x = 1\ny = 2\n", 0, 5, "g", None),
    ("multiline-string-module", 'x = """a:\nb\n"""\ny = 1\n', 4, 0, "z", None),
    ("code-inside-string", 'def f():\n    s = """\nif x:\n    """\n', 4, 0, "y", B(0, 0, 1)),
    ("deep-body", "def f():\n        x = 1\n", 2, 0, "y", B(0, 0, 1)),
    ("nested-ifs-module", "if a:\n    if b:\n        c()\n", 3, 0, "d", B(1, 1, 2)),
    ("nested-ifs-outer-body", "if a:\n    if b:\n        c()\n    ", 3, 4, "d", B(1, 1, 2)),
    ("decorated-def", "@dec\ndef f():\n    pass\n", 3, 0, "x", B(1, 1, 2)),
    ("async-def", "async def f():\n    await g()\n", 2, 0, "h", B(0, 0, 1)),
    ("second-method", "class A:\n    def a(self):\n        pass\n\n    def b(self):\n        pass\n", 6, 0, "x", B(4, 4, 5)),
    ("space-is-blank", "def f():\n    x = 1\n", 2, 0, " ", None),
    ("after-blank-lines", "def f():\n    return 1\n\n\n", 4, 0, "x", B(0, 0, 1)),
    ("single-line-compound", "if x: y()\nz = 1\n", 2, 0, "w", None),
    ("colon-string-in-header", "if s == ':':\n    t()\n", 2, 0, "u", B(0, 0, 1)),
    ("comment-only-body", "def f():\n    # todo\n", 2, 0, "x", None),
    ("pass-body", "def f():\n    pass\n", 2, 0, "x", B(0, 0, 1)),
    ("typing-in-comment", "def f():\n    x = 1\n#\n", 2, 1, "a", None),
    ("method-after-attr", "class A:\n    x = 1\n    def m(self):\n        return self.x\n    ", 4, 4, "y", B(2, 2, 3)),
    ("elif-start", "if a:\n    b()\n", 2, 0, "e", B(0, 0, 1)),
    ("second-char-closing-line", "def f():\n    x = 1\nr", 2, 1, "e", None),
    ("mixed-tab-space", "def f():\n\t    x = 1\n", 2, 0, "y", B(0, 0, 1)),
    ("raw-docstring", "def f():\n    r'''doc'''\n    return 2\n", 3, 0, "x", B(0, 0, 2)),
    ("multiline-docstring", 'def f():\n    """\n    Doc\n    """\n    return 1\n', 5, 0, "x", B(0, 0, 4)),
    ("inside-open-docstring", 'def f():\n    """\n', 2, 0, "x", None),
    ("outer-after-inner", "def outer():\n    def inner():\n        pass\n    return inner\n", 4, 0, "x", B(0, 0, 3)),
    ("match-case", "match v:\n    case 1:\n        pass\n", 3, 0, "x", B(1, 1, 2)),
    ("while-loop", "while x:\n    x -= 1\n", 2, 0, "p", B(0, 0, 1)),
    ("partial-indent", "def f():\n    x = 1\n  ", 2, 2, "y", B(0, 0, 1)),
    ("for-else", "def f():\n    for x in y:\n        pass\n    else:\n        pass\n", 5, 0, "z", B(3, 3, 4)),
]


def main():
    out_path = pathlib.Path(__file__).resolve().parent.parent / "outdent_corpus.json"
    corpus = []
    bad = 0
    for name, before, line, column, typed, hand in CASES:
        ref = label(before, line, column, typed)
        if ref != hand:
            print(f"{name}: hand {hand} reference {ref}", file=sys.stderr)
            bad += 1
        corpus.append({
            "name": name,
            "before": before,
            "line": line,
            "column": column,
            "typed": typed,
            "expected": ref,
        })
    if bad:
        sys.exit(f"{bad} disagreement(s); corpus not written")
    if len({c["name"] for c in corpus}) != len(corpus):
        sys.exit("duplicate case names")
    out_path.write_text(json.dumps({"cases": corpus}, indent=2) + "\n")
    print(f"wrote {len(corpus)} cases to {out_path}")


if __name__ == "__main__":
    main()
