"""Seeded synthetic corpora for sweeps and tests."""
import numpy as np


def zipf_probs(s, m):
    w = np.arange(1, m + 1, dtype=np.float64) ** (-float(s))
    return w / w.sum()


def zipf_counts(s, m, n, seed=0):
    """Multinomial counts of n draws from a truncated Zipf(s) law on m symbols."""
    rng = np.random.default_rng(seed)
    return rng.multinomial(n, zipf_probs(s, m))


def zipf_tokens(s, m, n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.choice(m, size=n, p=zipf_probs(s, m))


def uniform_tokens(m, n, seed=0):
    return np.random.default_rng(seed).integers(0, m, size=n)


def poisson_counts(lambdas, seed=0):
    return np.random.default_rng(seed).poisson(np.asarray(lambdas, dtype=np.float64))


def parse_synthetic(spec):
    """Parse "zipf:s,m,n" into (s, m, n)."""
    kind, _, args = spec.partition(":")
    if kind != "zipf":
        raise ValueError(f"unknown synthetic source {kind!r}")
    parts = args.split(",")
    if len(parts) != 3:
        raise ValueError("expected zipf:s,m,n")
    return float(parts[0]), int(parts[1]), int(parts[2])
