"""Classical distribution subroutines: the two-sample L2 tester and divergences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import ValidationError


@dataclass(frozen=True)
class SampleCounts:
    """Histogram of N samples over a finite domain."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "counts", c)
        if c.ndim != 1 or (c < 0).any():
            raise ValidationError("counts must be a 1-d nonnegative vector")

    @property
    def domain(self) -> int:
        return int(self.counts.size)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def from_samples(cls, samples, domain: int) -> "SampleCounts":
        return cls(np.bincount(np.asarray(samples, dtype=int), minlength=domain))


def l2_statistic(x: SampleCounts, y: SampleCounts) -> float:
    """Z = sum_i [(X_i - Y_i)^2 - X_i - Y_i].

    Under multinomial sampling of N draws from p and q,
    E[Z] = N^2 ||p - q||_2^2 - N(||p||_2^2 + ||q||_2^2); the O(N) term is the
    price of eschewing Poissonization and is dwarfed by the N^2 threshold.
    """
    if x.domain != y.domain:
        raise ValidationError("domain size mismatch")
    a = x.counts.astype(float)
    b = y.counts.astype(float)
    return float(((a - b) ** 2 - a - b).sum())


def l2_two_sample_test(x, y, eps: float, repetitions: int = 1) -> bool:
    """Accept/reject equality of two sampled distributions at L2 gap eps.

    ``x`` and ``y`` are SampleCounts (or sequences of them, one pair per
    repetition). A repetition rejects when Z > N^2 eps^2 / 2 (ties accept);
    the verdict is the majority, ties accepting. Returns True on accept.
    """
    if eps <= 0:
        raise ValidationError("eps must be positive")
    xs = [x] if isinstance(x, SampleCounts) else list(x)
    ys = [y] if isinstance(y, SampleCounts) else list(y)
    if len(xs) != repetitions or len(ys) != repetitions:
        raise ValidationError(f"expected {repetitions} count pairs, got {len(xs)}/{len(ys)}")
    rejects = 0
    for cx, cy in zip(xs, ys):
        n = cx.total
        if cy.total != n:
            raise ValidationError(f"sample sizes differ: {n} vs {cy.total}")
        if l2_statistic(cx, cy) > n**2 * eps**2 / 2:
            rejects += 1
    return rejects * 2 <= repetitions


def _check_dist(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if (arr < -1e-12).any() or abs(arr.sum() - 1.0) > 1e-9:
        raise ValidationError("not a probability vector")
    return np.clip(arr, 0.0, None)


def tv_distance(p, q) -> float:
    """Total variation distance, half the L1 difference."""
    a, b = _check_dist(p), _check_dist(q)
    if a.size != b.size:
        raise ValidationError("domain size mismatch")
    return float(np.abs(a - b).sum() / 2)


def chi_squared(p, q) -> float:
    """chi^2(p || q) = sum (p_i - q_i)^2 / q_i; requires supp(p) within supp(q)."""
    a, b = _check_dist(p), _check_dist(q)
    if a.size != b.size:
        raise ValidationError("domain size mismatch")
    bad = (b <= 0) & (a > 0)
    if bad.any():
        raise ValidationError("p puts mass outside the support of q")
    pos = b > 0
    return float(((a[pos] - b[pos]) ** 2 / b[pos]).sum())


def l23_functional(p, eps: float) -> float:
    """||p^{-max}_{-eps}||_{2/3}: drop the top entry, then the smallest entries
    greedily up to eps total mass, and return the 2/3-quasinorm of the rest."""
    arr = np.asarray(p, dtype=float).copy()
    if arr.size == 0:
        return 0.0
    arr[int(np.argmax(arr))] = 0.0
    support = np.flatnonzero(arr > 0)
    order = support[np.lexsort((support, arr[support]))]
    mass = np.cumsum(arr[order])
    take = int(np.searchsorted(mass, eps + 1e-12 * max(eps, 1.0), side="right"))
    arr[order[:take]] = 0.0
    total = float((arr ** (2 / 3)).sum())
    return total ** 1.5
