#!/usr/bin/env python3
"""Regenerates the frozen oracle fixtures used by the integration tests.

Requires numpy, scipy and mpmath. Output is deterministic:

    python3 crates/core/tests/fixtures/generate.py
"""

import json
import random
import struct
from pathlib import Path

import mpmath
import numpy as np
from scipy import stats

HERE = Path(__file__).resolve().parent
MASK32 = 0xFFFFFFFF
MASK64 = 0xFFFFFFFFFFFFFFFF


def dump(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1) + "\n")


def dump_jsonl(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))


# ---------------------------------------------------------------- statistics


def mean_se_cases(rng):
    mpmath.mp.dps = 60
    cases = []
    for i in range(60):
        n = 1 if i == 0 else rng.choice([2, 3, 5, 10, 30, 100, 500, 1000])
        scale = rng.choice([1.0, 5.0, 100.0])
        values = [rng.uniform(-scale, scale) for _ in range(n)]
        xs = [mpmath.mpf(v) for v in values]
        mean = mpmath.fsum(xs) / n
        if n == 1:
            se = mpmath.mpf(0)
        else:
            var = mpmath.fsum((x - mean) ** 2 for x in xs) / (n - 1)
            se = mpmath.sqrt(var / n)
        cases.append({"values": values, "mean": float(mean), "se": float(se)})
    return cases


def welch_cases(rng):
    cases = []
    np_rng = np.random.default_rng(38)
    for _ in range(100):
        nx, ny = rng.randint(2, 40), rng.randint(2, 40)
        xs = np_rng.normal(rng.uniform(1, 5), rng.uniform(0.1, 2.0), nx).tolist()
        ys = np_rng.normal(rng.uniform(1, 5), rng.uniform(0.1, 2.0), ny).tolist()
        r = stats.ttest_ind(xs, ys, equal_var=False)
        vx, vy = np.var(xs, ddof=1) / nx, np.var(ys, ddof=1) / ny
        df = (vx + vy) ** 2 / (vx**2 / (nx - 1) + vy**2 / (ny - 1))
        cases.append({"xs": xs, "ys": ys, "t": float(r.statistic), "p": float(r.pvalue), "df": float(df)})
    return cases


# ----------------------------------------------------------------- tokenizer


def reference_tokens(text):
    words, cur = set(), []
    for ch in text:
        if ch.isalnum():
            cur.append(ch)
        elif cur:
            words.add("".join(cur).lower())
            cur = []
    if cur:
        words.add("".join(cur).lower())
    return sorted(words)


def tokenizer_cases(rng):
    fixed = [
        "The cat, the CAT!",
        "",
        "x2 y-z",
        "Don't stop-believing!!",
        "e-mail: someone@example.com",
        "Café CAFÉ café",
        "Straße und STRASSE",
        "naïve résumé",
        "3.14159 is pi; 2,718 is e",
        "Ünïcode\tTabs\nNewlines",
        "emoji 🙂 between words 🙂",
        "__init__ snake_case",
        "ÀÉÎÕÜ àéîõü",
        "日本語 テキスト",
        "Ωmega ωMEGA",
        "   leading and trailing   ",
        "#1: Response",
        "(parenthesised) [bracketed] {braced}",
        "mixed123Digits 456",
        "a/b\\c|d",
    ]
    alphabet = list("abcXYZ019 -_,.!?'\"é日Ωß") + ["🙂", "\n", "\t"]
    generated = ["".join(rng.choice(alphabet) for _ in range(rng.randint(0, 30))) for _ in range(30)]
    return [{"text": t, "words": reference_tokens(t)} for t in fixed + generated]


# ------------------------------------------------------------ seeded shuffle


def pcg32_seed(state):
    mul, inc = 6364136223846793005, 11634580027462260723
    out = b""
    for _ in range(8):
        state = (state * mul + inc) & MASK64
        xorshifted = (((state >> 18) ^ state) >> 27) & MASK32
        rot = state >> 59
        x = ((xorshifted >> rot) | (xorshifted << ((32 - rot) & 31))) & MASK32
        out += struct.pack("<I", x)
    return out


def rotl(v, c):
    return ((v << c) | (v >> (32 - c))) & MASK32


def quarter(s, a, b, c, d):
    s[a] = (s[a] + s[b]) & MASK32
    s[d] = rotl(s[d] ^ s[a], 16)
    s[c] = (s[c] + s[d]) & MASK32
    s[b] = rotl(s[b] ^ s[c], 12)
    s[a] = (s[a] + s[b]) & MASK32
    s[d] = rotl(s[d] ^ s[a], 8)
    s[c] = (s[c] + s[d]) & MASK32
    s[b] = rotl(s[b] ^ s[c], 7)


class ChaCha8:
    def __init__(self, seed_u64):
        self.key = list(struct.unpack("<8I", pcg32_seed(seed_u64)))
        self.counter = 0
        self.buf = []

    def _block(self):
        init = [0x61707865, 0x3320646E, 0x79622D32, 0x6B206574] + self.key
        init += [self.counter & MASK32, self.counter >> 32, 0, 0]
        s = list(init)
        for _ in range(4):
            quarter(s, 0, 4, 8, 12)
            quarter(s, 1, 5, 9, 13)
            quarter(s, 2, 6, 10, 14)
            quarter(s, 3, 7, 11, 15)
            quarter(s, 0, 5, 10, 15)
            quarter(s, 1, 6, 11, 12)
            quarter(s, 2, 7, 8, 13)
            quarter(s, 3, 4, 9, 14)
        self.counter += 1
        return [(a + b) & MASK32 for a, b in zip(s, init)]

    def next_u32(self):
        if not self.buf:
            self.buf = self._block()
        return self.buf.pop(0)

    def next_u64(self):
        lo = self.next_u32()
        hi = self.next_u32()
        return (hi << 32) | lo


def first_u64s(seed, n):
    g = ChaCha8(seed)
    return [g.next_u64() for _ in range(n)]


def below(rng, n):
    rem = (MASK64 % n + 1) % n
    while True:
        x = rng.next_u64()
        if rem == 0 or x <= MASK64 - rem:
            return x % n


def shuffle(items, seed):
    items = list(items)
    rng = ChaCha8(seed)
    for i in range(len(items) - 1, 0, -1):
        j = below(rng, i + 1)
        items[i], items[j] = items[j], items[i]
    return items


def math_style_fixture():
    rows = []
    for i in range(100):
        level = i % 5 + 1
        rows.append(
            {
                "id": f"math-{i:03d}",
                "text": f"Problem {i}: compute {i} + {level}.",
                "gold_answer": str(i + level),
                "level": f"Level {level}",
            }
        )
    return rows


# ------------------------------------------------------ category tally table

TALLY = {
    # category: (community-alignment, math-500, novelty-bench, simple-qa, wild-bench)
    "A": (4, 13, 1, 50, 3),
    "B": (0, 0, 32, 0, 3),
    "C": (0, 0, 11, 0, 0),
    "D": (1, 37, 0, 0, 12),
    "F": (11, 0, 3, 0, 5),
    "G": (1, 0, 25, 0, 24),
    "H": (33, 0, 28, 0, 3),
}
DATASETS = ["community-alignment", "math-500", "novelty-bench", "simple-qa", "wild-bench"]


def tally_fixture():
    rows = []
    for cat, counts in TALLY.items():
        for ds, n in zip(DATASETS, counts):
            for i in range(n):
                rows.append({"id": f"{ds}-{cat}-{i:02d}", "text": f"{ds} prompt {cat}{i}", "category": cat, "source": ds})
    return rows


def main():
    rng = random.Random(38)
    dump(HERE / "oracles" / "mean_se.json", mean_se_cases(rng))
    dump(HERE / "oracles" / "welch.json", welch_cases(rng))
    dump(HERE / "oracles" / "tokenize.json", tokenizer_cases(rng))

    rows = math_style_fixture()
    dump_jsonl(HERE / "datasets" / "math_style_100.jsonl", rows)
    ids = [r["id"] for r in rows]
    strata = {}
    for r in rows:
        strata.setdefault(r["level"], []).append(r["id"])
    dump(
        HERE / "datasets" / "golden_seed38.json",
        {
            "seed": 38,
            "u64_stream": first_u64s(38, 8),
            "shuffled": shuffle(ids, 38),
            "stratified_10": {level: shuffle(members, 38)[:10] for level, members in sorted(strata.items())},
        },
    )
    dump_jsonl(HERE / "datasets" / "tally_300.jsonl", tally_fixture())


if __name__ == "__main__":
    main()
