#!/usr/bin/env python3
"""Character-level reference tokenizer: whitespace split, lowercase, strip edge punctuation.

Prints one JSON line per input sentence: {"in": ..., "tokens": [...]}.
"""
import json
import sys
import unicodedata


def is_punct(ch):
    return unicodedata.category(ch).startswith("P")


def simple_lower(ch):
    low = ch.lower()
    return low if len(low) == 1 else ch


def tokenize(sentence):
    out = []
    for run in sentence.split():
        chars = [simple_lower(c) for c in run]
        lo, hi = 0, len(chars)
        while lo < hi and is_punct(chars[lo]):
            lo += 1
        while hi > lo and is_punct(chars[hi - 1]):
            hi -= 1
        if lo < hi:
            out.append("".join(chars[lo:hi]))
    return out


CASES = [
    "The cat sat.",
    "",
    "¿Dónde está?",
    "  «Привет»,   МИР!  ",
    "ΟΔΥΣΣΕΥΣ (Ulysses) — “quoted” words…",
    "don't stop-words ... !!! ,",
    "Łódź Ärger　ＡＢＣ。",
    "tab\tseparated\nlines",
]

if __name__ == "__main__":
    for s in (sys.argv[1:] or CASES):
        print(json.dumps({"in": s, "tokens": tokenize(s)}, ensure_ascii=False))
