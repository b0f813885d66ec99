#!/usr/bin/env python3
"""Regenerates include/mdr/detail/unicode_tables.hpp from Python's unicodedata."""
import sys
import unicodedata

MAX_CP = 0x110000


def ranges(pred):
    out, start = [], None
    for cp in range(MAX_CP):
        hit = pred(cp)
        if hit and start is None:
            start = cp
        elif not hit and start is not None:
            out.append((start, cp - 1))
            start = None
    if start is not None:
        out.append((start, MAX_CP - 1))
    return out


def lower_runs():
    pairs = []
    for cp in range(MAX_CP):
        low = chr(cp).lower()
        if len(low) == 1 and ord(low) != cp:
            pairs.append((cp, ord(low)))
    runs = []
    for cp, low in pairs:
        delta = low - cp
        if runs:
            first, last, d, stride = runs[-1]
            step = cp - last
            if d == delta and step in (1, 2) and (stride == 0 or stride == step):
                runs[-1] = (first, cp, d, step)
                continue
        runs.append((cp, cp, delta, 0))
    return [(a, b, d, s if s else 1) for a, b, d, s in runs]


def main(path):
    space = ranges(lambda cp: chr(cp).isspace())
    punct = ranges(lambda cp: unicodedata.category(chr(cp)).startswith("P"))
    lower = lower_runs()
    with open(path, "w", encoding="utf-8") as f:
        f.write("// Generated by tools/gen_unicode_tables.py (Unicode %s). Do not edit.\n"
                % unicodedata.unidata_version)
        f.write("#pragma once\n\n#include <array>\n#include <cstdint>\n\n")
        f.write("namespace mdr::detail {\n\n")
        f.write("struct CodepointRange {\n  char32_t first;\n  char32_t last;\n};\n\n")
        f.write("struct LowerRun {\n  char32_t first;\n  char32_t last;\n"
                "  std::int32_t delta;\n  std::uint32_t stride;\n};\n\n")
        for name, rs in (("kSpaceRanges", space), ("kPunctRanges", punct)):
            f.write("inline constexpr std::array<CodepointRange, %d> %s{{\n" % (len(rs), name))
            for a, b in rs:
                f.write("    {0x%04X, 0x%04X},\n" % (a, b))
            f.write("}};\n\n")
        f.write("inline constexpr std::array<LowerRun, %d> kLowerRuns{{\n" % len(lower))
        for a, b, d, s in lower:
            f.write("    {0x%04X, 0x%04X, %d, %d},\n" % (a, b, d, s))
        f.write("}};\n\n}  // namespace mdr::detail\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "include/mdr/detail/unicode_tables.hpp")
