"""Reference outdent labeller for the scope corpus.

Line-by-line: classify each physical line, keep a stack of open scope
headers while walking structural lines, and record which headers each line
closes. A keystroke completes a block when the caret's line is structural,
the scope structure changed, and the line closes at least one non-empty
scope it did not already close.
"""

import re

TAB_WIDTH = 4
TRIVIAL = {"pass"}
DOC_START = re.compile(r"""^[rRbBuUfF]{0,2}("\"\"|''')""")


def find_close(s, delim, start):
    i = start
    while i + len(delim) <= len(s):
        if s[i] == "\\":
            i += 2
            continue
        if s.startswith(delim, i):
            return i
        i += 1
    return None


def scan(s):
    """Returns (code without strings/comments, unterminated triple delimiter)."""
    out = []
    i = 0
    while i < len(s):
        c = s[i]
        if c == "#":
            break
        if c in "\"'":
            if s.startswith(c * 3, i):
                end = find_close(s, c * 3, i + 3)
                out.append('""')
                if end is None:
                    return "".join(out), c * 3
                i = end + 3
                continue
            j = i + 1
            while j < len(s) and s[j] != c:
                if s[j] == "\\":
                    j += 1
                j += 1
            out.append('""')
            i = j + 1
            continue
        out.append(c)
        i += 1
    return "".join(out), None


def depth_of(raw):
    lead = raw[: len(raw) - len(raw.lstrip(" \t"))]
    return lead.count("\t") + lead.count(" ") // TAB_WIDTH


def classify(text):
    """One dict per physical line: structural, depth, opens."""
    if text == "":
        return []
    rows = []
    pending = None  # unterminated triple-quote delimiter
    for raw in text.split("\n"):
        row = {"structural": False, "depth": depth_of(raw), "opens": False}
        body = raw.strip()
        if pending is not None:
            at = raw.find(pending)
            if at >= 0:
                _, pending = scan(raw[at + 3 :])
            rows.append(row)
            continue
        if body == "" or body.startswith("#"):
            rows.append(row)
            continue
        m = DOC_START.match(body)
        if m:
            delim = m.group(1)
            after = body[m.end() :]
            close = after.find(delim)
            if close < 0:
                pending = delim
            else:
                _, pending = scan(after[close + 3 :])
            rows.append(row)
            continue
        code, pending = scan(body)
        row["structural"] = True
        row["opens"] = pending is None and code.rstrip().endswith(":")
        row["trivial"] = code.strip() in TRIVIAL
        rows.append(row)
    return rows


def frames(rows):
    """header -> (depth, last body line, closing line or None)."""
    stack = []
    result = {}
    for idx, row in enumerate(rows):
        if not row["structural"]:
            continue
        while stack and row["depth"] <= stack[-1]["depth"]:
            top = stack.pop()
            result[top["header"]] = (top["depth"], top["end"], idx)
        for open_frame in stack:
            open_frame["end"] = idx
        if row["opens"]:
            stack.append({"header": idx, "depth": row["depth"], "end": idx})
    for open_frame in stack:
        result[open_frame["header"]] = (open_frame["depth"], open_frame["end"], None)
    return result


def closed_by(rows, line):
    found = [
        (depth, header, end)
        for header, (depth, end, closer) in frames(rows).items()
        if closer == line and end > header
    ]
    found.sort(reverse=True)
    return [{"headerLine": h, "startLine": h, "endLine": e} for _, h, e in found]


def insert(text, line, column, typed):
    lines = text.split("\n")
    lines[line] = lines[line][:column] + typed + lines[line][column:]
    return "\n".join(lines)


def label(before, line, column, typed):
    after = insert(before, line, column, typed)
    caret_line = line + typed.count("\n")
    prev, curr = classify(before), classify(after)
    if caret_line >= len(curr) or not curr[caret_line]["structural"]:
        return None
    if frames(prev) == frames(curr):
        return None
    closed = closed_by(curr, caret_line)
    if not closed:
        return None
    if len(prev) == len(curr) and closed_by(prev, caret_line) == closed:
        return None
    return closed[0]
