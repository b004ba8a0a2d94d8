"""Dataset file I/O, synthetic corpus generation, and threshold selection.

File format: one vector per line, whitespace-separated dim:weight tokens,
0-based non-negative integer dimensions, positive decimal weights. Lines
starting with '#' are comments; an optional leading '# n=<N> m=<M>' header
declares the vector and dimension counts and is checked against the parsed
content. Blank lines are skipped. Vectors are normalized on load unless
told otherwise.
"""

from __future__ import annotations

import math
import re

import numpy as np

from .core import Dataset, DuplicateDimError, NegativeWeightError

_HEADER = re.compile(r"#\s*n=(\d+)\s+m=(\d+)\s*$")


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None) -> None:
        super().__init__(message)
        self.line = line


class InvalidParamsError(ValueError):
    pass


def load_dataset(path, normalize: bool = True) -> Dataset:
    rows = []
    declared = None
    with open(path, "r", encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                header = _HEADER.match(line)
                if header and declared is None:
                    declared = (int(header.group(1)), int(header.group(2)))
                continue
            entries = []
            seen = set()
            for tok in line.split():
                dim_s, sep, w_s = tok.partition(":")
                if not sep:
                    raise ParseError(f"line {ln}: token {tok!r} is not dim:weight", ln)
                try:
                    d = int(dim_s)
                    w = float(w_s)
                except ValueError:
                    raise ParseError(f"line {ln}: token {tok!r} is not dim:weight", ln) from None
                if d < 0:
                    raise ParseError(f"line {ln}: negative dimension {d}", ln)
                if w < 0:
                    raise NegativeWeightError(f"line {ln}: negative weight {w} at dimension {d}")
                if d in seen:
                    raise DuplicateDimError(f"line {ln}: dimension {d} repeated")
                seen.add(d)
                if w == 0:
                    continue  # zero entries are not stored
                entries.append((d, w))
            entries.sort()
            rows.append(entries)
    m = None
    if declared is not None:
        n_decl, m_decl = declared
        if n_decl != len(rows):
            raise ParseError(f"header declares n={n_decl} but file has {len(rows)} vectors")
        max_dim = max((r[-1][0] for r in rows if r), default=-1)
        if m_decl <= max_dim:
            raise ParseError(f"header declares m={m_decl} but dimension {max_dim} occurs")
        m = m_decl
    return Dataset.from_entries(rows, normalize_vectors=normalize, m=m)


def save_dataset(dataset: Dataset, path) -> None:
    """Write the canonical text form; weights use shortest round-trip repr."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n={dataset.n} m={dataset.m}\n")
        for v in dataset.vectors:
            fh.write(" ".join(f"{d}:{w!r}" for d, w in v.entries))
            fh.write("\n")


def gen_synthetic(n: int, m: int, avg_nnz: int, zipf_exponent: float, seed: int) -> Dataset:
    """Synthetic corpus with Zipf-like dimension popularity.

    Dimension d is drawn with probability proportional to (d+1)^-s; each
    vector's entry count is binomial around avg_nnz, its dimensions sampled
    without replacement, its weights uniform in (0, 1] then normalized. The
    stream is fully determined by the seed.
    """
    if n < 1 or m < 1:
        raise InvalidParamsError(f"need n, m >= 1 (got n={n}, m={m})")
    if not 1 <= avg_nnz <= m:
        raise InvalidParamsError(f"need 1 <= avg_nnz <= m (got {avg_nnz}, m={m})")
    if zipf_exponent < 0:
        raise InvalidParamsError(f"zipf exponent must be non-negative (got {zipf_exponent})")
    rng = np.random.default_rng(seed)
    pop = np.arange(1, m + 1, dtype=np.float64) ** -float(zipf_exponent)
    pop /= pop.sum()
    rows = []
    for _ in range(n):
        k = int(rng.binomial(m, avg_nnz / m))
        k = min(max(k, 1), m)
        dims = np.sort(rng.choice(m, size=k, replace=False, p=pop))
        weights = 1.0 - rng.random(k)
        rows.append([(int(d), float(w)) for d, w in zip(dims, weights)])
    return Dataset.from_entries(rows, normalize_vectors=True, m=m)


def threshold_advisor(n: int) -> float:
    """Match budget that keeps the similarity graph well connected: n*log2(n)."""
    if n < 2:
        raise ValueError("need at least two vectors")
    return n * math.log2(n)


def _pairwise_scores(vectors) -> np.ndarray:
    """All nonzero pair dot products among the given vectors."""
    from .par1d import LocalIndex
    from .profiling import RankStats

    lindex = LocalIndex(len(vectors))
    stats = RankStats()
    chunks = []
    for pos, v in enumerate(vectors):
        _, vals = lindex.scan(v.entries, stats)
        if vals.size:
            chunks.append(vals)
        lindex.index(pos, v.entries)
    return np.concatenate(chunks) if chunks else np.zeros(0)


def auto_threshold(dataset: Dataset, budget: float | None = None, sample_cap: int = 1024) -> float:
    """Bisect t on a vector sample until the match count is within 2x of budget.

    The sample is a deterministic stride over vector ids; the budget scales
    with the sampled pair count. Falls back to half the smallest positive
    score when even that admits fewer matches than the budget asks for.
    """
    n = dataset.n
    if n < 2:
        raise ValueError("need at least two vectors")
    if budget is None:
        budget = threshold_advisor(n)
    vectors = list(dataset.vectors)
    if n > sample_cap:
        step = -(-n // sample_cap)  # ceil
        vectors = vectors[::step]
    s = len(vectors)
    budget = budget * (s * (s - 1)) / (n * (n - 1))
    scores = _pairwise_scores(vectors)
    positive = scores[scores > 0]
    if positive.size == 0:
        return 1.0
    if positive.size <= 2 * budget:
        return float(positive.min()) / 2
    lo = 0.0
    hi = float(max(positive.max(), 1.0))
    mid = hi / 2
    for _ in range(64):
        mid = (lo + hi) / 2
        count = int((scores >= mid).sum())
        if count > 2 * budget:
            lo = mid
        elif 2 * count < budget:
            hi = mid
        else:
            break
    return mid
