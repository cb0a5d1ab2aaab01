"""Independent brute-force oracles used to pin expected test values.

Every oracle takes a different computational route from the implementation
it checks: pair enumeration and exact rationals for the agreement measures,
binomial-coefficient hypergeometric terms for expected mutual information,
conditional entropies for the harmonic-mean measure, and a symmetric
eigen-decomposition for anything spectral.
"""

import itertools
import math
from collections import Counter
from fractions import Fraction

import numpy as np
import scipy.linalg


def ari_pairs(a, b) -> float:
    """Adjusted Rand index by enumerating all sample pairs exactly."""
    n = len(a)
    pairs = list(itertools.combinations(range(n), 2))
    same_a = sum(1 for i, j in pairs if a[i] == a[j])
    same_b = sum(1 for i, j in pairs if b[i] == b[j])
    both = sum(1 for i, j in pairs if a[i] == a[j] and b[i] == b[j])
    total = len(pairs)
    expected = Fraction(same_a * same_b, total)
    maximum = Fraction(same_a + same_b, 2)
    if maximum == expected:
        return 1.0
    return float((Fraction(both) - expected) / (maximum - expected))


def fmi_pairs(a, b) -> float:
    """Fowlkes-Mallows by pair enumeration."""
    n = len(a)
    pairs = list(itertools.combinations(range(n), 2))
    same_a = sum(1 for i, j in pairs if a[i] == a[j])
    same_b = sum(1 for i, j in pairs if b[i] == b[j])
    tp = sum(1 for i, j in pairs if a[i] == a[j] and b[i] == b[j])
    if same_a == 0 or same_b == 0:
        return 0.0
    return tp / math.sqrt(same_a * same_b)


def entropy_counts(counts) -> float:
    n = sum(counts)
    return -sum((c / n) * math.log(c / n) for c in counts if c > 0)


def mutual_information(a, b) -> float:
    n = len(a)
    joint = Counter(zip(a, b))
    ca = Counter(a)
    cb = Counter(b)
    mi = 0.0
    for (x, y), nij in joint.items():
        mi += (nij / n) * math.log(n * nij / (ca[x] * cb[y]))
    return mi


def expected_mi_hypergeometric(a, b) -> float:
    """E[MI] with exact-rational hypergeometric cell probabilities."""
    n = len(a)
    ca = Counter(a)
    cb = Counter(b)
    emi = 0.0
    for x in ca.values():
        for y in cb.values():
            for nij in range(max(1, x + y - n), min(x, y) + 1):
                prob = Fraction(math.comb(y, nij) * math.comb(n - y, x - nij),
                                math.comb(n, x))
                emi += float(prob) * (nij / n) * math.log(n * nij / (x * y))
    return emi


def ami_exact(a, b) -> float:
    mi = mutual_information(a, b)
    emi = expected_mi_hypergeometric(a, b)
    h_a = entropy_counts(list(Counter(a).values()))
    h_b = entropy_counts(list(Counter(b).values()))
    denom = 0.5 * (h_a + h_b) - emi
    if abs(denom) < 1e-15:
        return 0.0
    return (mi - emi) / denom


def v_measure_conditional(a, b) -> float:
    """V-Measure via explicit conditional entropies."""
    n = len(a)
    ca = Counter(a)
    cb = Counter(b)
    h_a = entropy_counts(list(ca.values()))
    h_b = entropy_counts(list(cb.values()))

    def cond_entropy(first, second):
        # H(first | second)
        joint = Counter(zip(second, first))
        by_cond = Counter(second)
        h = 0.0
        for (y, _x), nij in joint.items():
            h -= (nij / n) * math.log(nij / by_cond[y])
        return h

    hom = 1.0 if h_a == 0 else 1.0 - cond_entropy(a, b) / h_a
    com = 1.0 if h_b == 0 else 1.0 - cond_entropy(b, a) / h_b
    if hom + com == 0:
        return 0.0
    return 2 * hom * com / (hom + com)


def chi_direct(features, groups) -> float:
    """Dispersion ratio straight from its definition, plain loops."""
    X = [list(map(float, row)) for row in features]
    n = len(X)
    dims = len(X[0])
    uniq = sorted(set(groups))
    k = len(uniq)
    overall = [sum(row[j] for row in X) / n for j in range(dims)]
    between = 0.0
    within = 0.0
    for g in uniq:
        members = [X[i] for i in range(n) if groups[i] == g]
        center = [sum(row[j] for row in members) / len(members)
                  for j in range(dims)]
        between += len(members) * sum((center[j] - overall[j]) ** 2
                                      for j in range(dims))
        within += sum(sum((row[j] - center[j]) ** 2 for j in range(dims))
                      for row in members)
    if within == 0.0:
        return math.inf
    return (between / (k - 1)) / (within / (n - k))


def singular_values_eigh(X) -> np.ndarray:
    """Singular values via the symmetric block matrix [[0, X], [X.T, 0]],
    whose spectrum is exactly {+sigma, -sigma} plus structural zeros."""
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    block = np.zeros((n + d, n + d))
    block[:n, n:] = X
    block[n:, :n] = X.T
    eigvals = scipy.linalg.eigh(block, eigvals_only=True)
    return np.clip(eigvals[::-1][:min(n, d)], 0.0, None)


def nuclear_norm_eigh(X) -> float:
    return float(singular_values_eigh(X).sum())


def rankme_eigh(X, epsilon: float) -> float:
    sigma = singular_values_eigh(X)
    p = sigma / sigma.sum() + epsilon
    p = p / p.sum()
    p = p[p > 0]
    return float(np.exp(-np.sum(p * np.log(p))))


def entropy_rows_direct(P) -> tuple[list[float], float]:
    rows = []
    for row in P:
        h = 0.0
        for p in row:
            if p > 0:
                h -= p * math.log(p)
        rows.append(h)
    return rows, sum(rows) / len(rows)


def best_partition_inertia(X, k) -> float:
    """Exhaustive minimum within-cluster sum of squares over all partitions."""
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    best = math.inf
    for assignment in itertools.product(range(k), repeat=n):
        inertia = 0.0
        for j in range(k):
            members = X[[i for i in range(n) if assignment[i] == j]]
            if len(members):
                center = members.mean(axis=0)
                inertia += float(np.sum((members - center) ** 2))
        best = min(best, inertia)
    return best
