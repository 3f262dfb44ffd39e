"""Independent reference implementations used as test oracles.

None of these import the code under test beyond plain data types; each
computes the expected value a different way (regex alternation instead of
a state machine, pairwise counting instead of ranks, finite differences
instead of the analytic gradient).
"""

from __future__ import annotations

import math
import random
import re

# comments


def java_comment_regex() -> re.Pattern:
    """One ordered alternation; Python's regex engine tries branches left to right."""
    return re.compile(
        r'''(?P<tblock>"""(?:\\[\s\S]|\\\Z|(?!""")[^\\])*(?:"""|\Z))'''
        r'''|(?P<dq>"(?:\\[\s\S]|\\\Z|[^"\\\n])*(?:"|(?=\n)|\Z))'''
        r"""|(?P<sq>'(?:\\[\s\S]|\\\Z|[^'\\\n])*(?:'|(?=\n)|\Z))"""
        r"|(?P<line>//[^\n]*)"
        r"|(?P<block>/\*[\s\S]*?\*/)"
        r"|(?P<open>/\*[\s\S]*\Z)"
    )


def oracle_spans(content: str) -> list[tuple[int, int, str]]:
    """(start, end, kind) of every comment; kind is 'Line' or 'Block'."""
    spans = []
    for m in java_comment_regex().finditer(content):
        kind = m.lastgroup
        if kind == "line":
            end = m.end()
            if end > m.start() and content[end - 1] == "\r":
                end -= 1
            spans.append((m.start(), end, "Line"))
        elif kind in ("block", "open"):
            spans.append((m.start(), m.end(), "Block"))
    return spans


_IDENTS = ["a", "b", "x1", "total", "url", "path", "Foo", "bar_baz", "i"]
_OPS = ["=", "+", "-", "/", "*", "(", ")", "{", "}", ";", ",", "<", ">", "==", "!", "?", ":", "."]
_TRICKY = ["//", "/*", "*/", "/**/", "http://x.org/y", "*", "/", "#12", "\\\\", "'", '\\"']


def _string_literal(rng: random.Random) -> str:
    parts = []
    for _ in range(rng.randint(0, 4)):
        r = rng.random()
        if r < 0.4:
            parts.append(rng.choice(_TRICKY))
        elif r < 0.6:
            parts.append(rng.choice(['\\"', "\\n", "\\\\", "\\t"]))
        else:
            parts.append(rng.choice(_IDENTS))
    body = "".join(parts).replace('"', '\\"').replace('\\\\"', '\\"')
    # every quote in body is now escaped; make sure no bare quote slipped through
    body = re.sub(r'(?<!\\)"', '\\"', body)
    if body.endswith("\\") and not body.endswith("\\\\"):
        body += "\\"
    body = _balance_backslashes(body)
    return '"' + body + '"'


def _balance_backslashes(body: str) -> str:
    """Ensure an even number of trailing backslashes so the closing quote is real."""
    m = re.search(r"\\+$", body)
    if m and len(m.group(0)) % 2:
        body += "\\"
    return body


def _char_literal(rng: random.Random) -> str:
    return rng.choice(["'/'", "'*'", "'\"'", "'\\''", "'\\\\'", "'a'", "'#'"])


def _text_block(rng: random.Random) -> str:
    lines = [rng.choice(["// not a comment", "/* nor this */", "plain", 'say "hi"', "*/"]) for _ in range(rng.randint(1, 3))]
    return '"""\n' + "\n".join(lines) + '\n"""'


def _line_comment(rng: random.Random) -> str:
    body = " ".join(rng.choice(_IDENTS + _TRICKY + ['"quoted"', "TODO", "issue #3"]) for _ in range(rng.randint(0, 5)))
    return "//" + (" " + body if body else "")


def _block_comment(rng: random.Random) -> str:
    words = []
    for _ in range(rng.randint(0, 8)):
        w = rng.choice(_IDENTS + ["//", '"', "'", "/", "*", "\n *", "#7", "/*"])
        words.append(w)
    text = " ".join(words)
    text = text.replace("*/", "* /")
    # joining "*" and "/" tokens must not close the comment early
    text = re.sub(r"\*(?=/)", "* ", text)
    opener = rng.choice(["/*", "/**"])
    if text.endswith("*"):
        text += " "
    return opener + " " + text + " */"


def generate_program(rng: random.Random, tokens: int = 60):
    """Java-like source plus the exact comment spans the generator placed.

    Tokens are separated by whitespace so adjacent tokens never fuse into a
    different lexeme; the returned spans are therefore ground truth.
    """
    out: list[str] = []
    spans = []
    pos = 0

    def emit(text: str, kind: str | None = None):
        nonlocal pos
        if kind is not None:
            spans.append((pos, pos + len(text), kind))
        out.append(text)
        pos += len(text)

    for _ in range(tokens):
        r = rng.random()
        if r < 0.35:
            emit(rng.choice(_IDENTS))
        elif r < 0.55:
            emit(rng.choice(_OPS))
        elif r < 0.65:
            emit(_string_literal(rng))
        elif r < 0.70:
            emit(_char_literal(rng))
        elif r < 0.73:
            emit(_text_block(rng))
        elif r < 0.85:
            emit(_line_comment(rng), "Line")
            emit("\n" + " " * rng.choice([0, 4, 8]))
            continue
        else:
            emit(_block_comment(rng), "Block")
        emit(rng.choice([" ", " ", "\n", "\n    ", "\t"]))
    if rng.random() < 0.1:
        # trailing unterminated block comment
        emit("/* never closed // \"x\"", "Block")
    return "".join(out), spans


# references


def oracle_refs(text: str, patterns):
    """Position-by-position scan: at each start, the first pattern that matches there wins."""
    found = []
    s = 0
    while s <= len(text):
        hit = None
        for p in patterns:
            m = p.regex.match(text, s)
            if m:
                hit = (m, p)
                break
        if hit is None:
            s += 1
            continue
        m, p = hit
        found.append((m.start(), m.end(), p.pattern_id))
        s = m.end() if m.end() > m.start() else s + 1
    return found


# metrics


def pairwise_auc(scores, labels) -> float:
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    if not pos or not neg:
        return 0.5
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def numeric_gradient(f, w, b, eps=1e-6):
    """Central differences of scalar ``f(w, b)`` with respect to every weight and the bias."""
    grad = []
    for i in range(len(w)):
        wp = w.copy()
        wm = w.copy()
        wp[i] += eps
        wm[i] -= eps
        grad.append((f(wp, b) - f(wm, b)) / (2 * eps))
    gb = (f(w, b + eps) - f(w, b - eps)) / (2 * eps)
    return grad, gb


def log_loss(w, b, X, y, l2) -> float:
    """Plain-python mean log loss plus l2/(2n)*|w|^2, written independently of the model code."""
    n = len(y)
    total = 0.0
    for row, target in zip(X, y):
        z = b + sum(wi * xi for wi, xi in zip(w, row))
        # log(1 + e^z) - y*z, stable
        total += (max(z, 0) + math.log1p(math.exp(-abs(z)))) - target * z
    return total / n + l2 / (2 * n) * sum(wi * wi for wi in w)
