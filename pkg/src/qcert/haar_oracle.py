"""Exact Weingarten calculus and small-instance transcript-divergence oracles.

These are the ground-truth routes used to validate the Monte Carlo moment
estimates and the mixture-vs-product divergence bounds on instances small
enough to enumerate.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .linalg import DensityMatrix, ValidationError, check_hermitian
from .measurement import NonadaptiveSchedule, outcome_distribution
from .rng import as_generator

MAX_ORDER = 6


@dataclass(frozen=True)
class Permutation:
    """A permutation in one-line notation with its cycle type cached."""

    one_line: tuple[int, ...]

    @property
    def order(self) -> int:
        return len(self.one_line)

    @property
    def cycle_type(self) -> tuple[int, ...]:
        return _cycle_type(self.one_line)

    def compose(self, other: "Permutation") -> "Permutation":
        """self after other: (self*other)(i) = self(other(i))."""
        return Permutation(tuple(self.one_line[j] for j in other.one_line))

    def inverse(self) -> "Permutation":
        inv = [0] * len(self.one_line)
        for i, j in enumerate(self.one_line):
            inv[j] = i
        return Permutation(tuple(inv))


@lru_cache(maxsize=None)
def _cycle_type(one_line: tuple[int, ...]) -> tuple[int, ...]:
    seen = [False] * len(one_line)
    lengths = []
    for start in range(len(one_line)):
        if seen[start]:
            continue
        length, i = 0, start
        while not seen[i]:
            seen[i] = True
            i = one_line[i]
            length += 1
        lengths.append(length)
    return tuple(sorted(lengths, reverse=True))


@lru_cache(maxsize=None)
def _group(order: int) -> tuple[tuple[int, ...], ...]:
    return tuple(itertools.permutations(range(order)))


@lru_cache(maxsize=None)
def _relative_cycle_table(order: int) -> np.ndarray:
    """cycles[a, b] = number of cycles of pi_a * pi_b^{-1}."""
    perms = _group(order)
    index = {p: k for k, p in enumerate(perms)}
    n = len(perms)
    table = np.zeros((n, n), dtype=np.int64)
    for b, pb in enumerate(perms):
        inv = Permutation(pb).inverse()
        for a, pa in enumerate(perms):
            rel = Permutation(pa).compose(inv)
            table[a, b] = len(_cycle_type(rel.one_line))
    return table


class WeingartenTable:
    """Weingarten function values for S_order at dimension d, keyed by cycle type."""

    def __init__(self, order: int, d: int, values: dict[tuple[int, ...], float]):
        self.order = order
        self.d = d
        self.values = values

    def __call__(self, perm) -> float:
        if isinstance(perm, Permutation):
            key = perm.cycle_type
        else:
            parts = tuple(perm)
            is_cycle_type = (
                all(c >= 1 for c in parts)
                and sum(parts) == self.order
                and list(parts) == sorted(parts, reverse=True)
            )
            key = parts if is_cycle_type else _cycle_type(parts)
        return self.values[key]


@lru_cache(maxsize=None)
def weingarten_table(order: int, d: int) -> WeingartenTable:
    """Invert the Gram matrix G[a, b] = d^{#cycles(pi_a pi_b^{-1})} at the identity row.

    Requires d >= order so the Gram matrix is invertible.
    """
    if order < 1 or order > MAX_ORDER:
        raise ValidationError(f"order must be in 1..{MAX_ORDER}, got {order}")
    if d < order:
        raise ValidationError(f"need d >= order for an invertible Gram matrix (d={d}, order={order})")
    perms = _group(order)
    gram = np.power(float(d), _relative_cycle_table(order))
    identity_index = perms.index(tuple(range(order)))
    rhs = np.zeros(len(perms))
    rhs[identity_index] = 1.0
    wg = np.linalg.solve(gram, rhs)
    values: dict[tuple[int, ...], float] = {}
    for k, p in enumerate(perms):
        values.setdefault(_cycle_type(p), float(wg[k]))
    return WeingartenTable(order, d, values)


def bracket(m, perm) -> float:
    """<M>_pi = product over cycles of Tr(M^{|C|})."""
    mat = check_hermitian(m)
    cycles = perm.cycle_type if isinstance(perm, Permutation) else _cycle_type(tuple(perm))
    powers: dict[int, float] = {}
    acc = np.eye(mat.shape[0], dtype=complex)
    for k in range(1, max(cycles) + 1):
        acc = acc @ mat
        powers[k] = float(np.trace(acc).real)
    out = 1.0
    for c in cycles:
        out *= powers[c]
    return out


def haar_moment(a, b, order: int, d: int | None = None) -> float:
    """E_U[Tr(A U^dag B U)^order] as an exact double sum over S_order."""
    ma, mb = check_hermitian(a), check_hermitian(b)
    if ma.shape != mb.shape:
        raise ValidationError("A and B must share a dimension")
    if d is None:
        d = ma.shape[0]
    wg = weingarten_table(order, d)
    perms = _group(order)
    cyc = _relative_cycle_table(order)
    bra_a = np.array([bracket(ma, p) for p in perms])
    bra_b = np.array([bracket(mb, p) for p in perms])
    # value[a_idx, b_idx] = Wg of the relative permutation, looked up by cycle count is
    # not enough (distinct cycle types share counts), so map through types.
    wg_rel = np.empty_like(cyc, dtype=float)
    type_cache: dict[tuple[int, ...], float] = {}
    for bi, pb in enumerate(perms):
        inv = Permutation(pb).inverse()
        for ai, pa in enumerate(perms):
            t = _cycle_type(Permutation(pa).compose(inv).one_line)
            if t not in type_cache:
                type_cache[t] = wg(t)
            wg_rel[ai, bi] = type_cache[t]
    return float(bra_a @ wg_rel @ bra_b)


def _squared_overlap_moments_exact(m, d: int) -> tuple[float, float]:
    """Exact E[Z] and E[Z^2] for Z = sum_i (u_i^dag M u_i)^2 over Haar U.

    E[Z^2] needs the order-4 table, hence d >= 4.
    """
    mat = check_hermitian(m)
    tr = float(np.trace(mat).real)
    hs2 = float(np.trace(mat @ mat).real)
    ez = (tr**2 + hs2) / (d + 1)

    wg = weingarten_table(4, d)
    perms = _group(4)
    bra = {p: bracket(mat, p) for p in perms}
    # E[(u1 M u1)^4]: projector brackets are all 1.
    e4 = 0.0
    for pa in perms:
        inv = Permutation(pa).inverse()
        for pb in perms:
            e4 += bra[pb] * wg(_cycle_type(inv.compose(Permutation(pb)).one_line))
    # E[(u1 M u1)^2 (u2 M u2)^2]: only permutations preserving {0,1},{2,3} survive
    # on the projector side.
    block = [p for p in perms if {p[0], p[1]} == {0, 1} and {p[2], p[3]} == {2, 3}]
    e22 = 0.0
    for pa in block:
        inv = Permutation(pa).inverse()
        for pb in perms:
            e22 += bra[pb] * wg(_cycle_type(inv.compose(Permutation(pb)).one_line))
    ez2 = d * e4 + d * (d - 1) * e22
    return ez, ez2


@dataclass
class MomentsReport:
    """Monte Carlo check of the Haar-basis squared-overlap moments."""

    d: int
    samples: int
    hs_norm_sq: float
    ez_mc: float
    ez_se: float
    ez_exact: float
    ez2_mc: float
    ez2_se: float
    ez2_bound: float
    first_ok: bool
    second_ok: bool
    ez2_exact: float | None = None

    def to_json(self) -> str:
        return json.dumps(self.__dict__)


def verify_moments_basic(m, samples: int, rng, bound_multiplier: float = 1.5,
                         chunk: int = 100_000) -> MomentsReport:
    """Estimate E[Z], E[Z^2] for Z = sum_i (u_i^dag M u_i)^2 by Monte Carlo.

    The first clause passes when the estimate matches the exact mean within
    3 standard errors. The second compares E[Z^2] for traceless M against
    bound_multiplier * ||M||_HS^4 / d^4.
    """
    mat = check_hermitian(m)
    d = mat.shape[0]
    gen = as_generator(rng)
    tr = float(np.trace(mat).real)
    hs2 = float(np.trace(mat @ mat).real)

    z_sum = z2_sum = z4_sum = 0.0
    done = 0
    while done < samples:
        take = min(chunk, samples - done)
        shape = (take, d, d)
        g = (gen.standard_normal(shape) + 1j * gen.standard_normal(shape)) / np.sqrt(2)
        q, r = np.linalg.qr(g)
        ph = np.diagonal(r, axis1=-2, axis2=-1)
        q = q * (ph / np.abs(ph))[..., None, :]
        x = np.einsum("nji,jk,nki->ni", q.conj(), mat, q).real
        z = (x**2).sum(axis=1)
        z_sum += z.sum()
        z2_sum += (z**2).sum()
        z4_sum += (z**4).sum()
        done += take
    ez_mc = z_sum / samples
    ez2_mc = z2_sum / samples
    ez_se = math.sqrt(max(z2_sum / samples - ez_mc**2, 0.0) / samples)
    ez2_se = math.sqrt(max(z4_sum / samples - ez2_mc**2, 0.0) / samples)

    ez_exact = (tr**2 + hs2) / (d + 1)
    ez2_exact = _squared_overlap_moments_exact(mat, d)[1] if d >= 4 else None
    bound = bound_multiplier * hs2**2 / d**4
    return MomentsReport(
        d=d,
        samples=samples,
        hs_norm_sq=hs2,
        ez_mc=float(ez_mc),
        ez_se=float(ez_se),
        ez_exact=float(ez_exact),
        ez2_mc=float(ez2_mc),
        ez2_se=float(ez2_se),
        ez2_bound=float(bound),
        first_ok=bool(abs(ez_mc - ez_exact) <= 3 * ez_se),
        second_ok=bool(ez2_mc - 3 * ez2_se <= bound),
        ez2_exact=ez2_exact,
    )


@dataclass
class DivergenceReport:
    """Exact transcript-level divergences between the null product law and a mixture."""

    tv: float
    chi2: float
    kl: float
    num_transcripts: int
    min_likelihood_ratio: float
    p0: np.ndarray
    p1: np.ndarray

    def to_json(self) -> str:
        payload = {k: getattr(self, k) for k in ("tv", "chi2", "kl", "num_transcripts",
                                                 "min_likelihood_ratio")}
        return json.dumps(payload)


def _product_distribution(state, schedule: NonadaptiveSchedule) -> np.ndarray:
    out = np.ones(1)
    for m in schedule:
        out = np.outer(out, outcome_distribution(state, m)).ravel()
    return out


def exact_transcript_divergence(
    sigma: DensityMatrix,
    ensemble,
    schedule: NonadaptiveSchedule,
    *,
    param_draws: int = 1000,
    rng=None,
    max_transcripts: int = 10**6,
) -> DivergenceReport:
    """TV / chi-squared / KL between measuring sigma and measuring the mixture.

    ``ensemble`` is either a finite list of (state, weight) pairs, averaged
    exactly, or a callable(generator) -> DensityMatrix, averaged over
    ``param_draws`` Monte Carlo parameter draws with per-draw exact
    transcript products.
    """
    size = 1
    for m in schedule:
        size *= len(m)
        if size > max_transcripts:
            raise ValidationError(f"transcript space exceeds {max_transcripts}")
    p0 = _product_distribution(sigma, schedule)

    if callable(ensemble):
        gen = as_generator(rng)
        p1 = np.zeros_like(p0)
        for _ in range(param_draws):
            p1 += _product_distribution(ensemble(gen), schedule)
        p1 /= param_draws
    else:
        p1 = np.zeros_like(p0)
        total_w = 0.0
        for state, weight in ensemble:
            p1 += weight * _product_distribution(state, schedule)
            total_w += weight
        if abs(total_w - 1.0) > 1e-9:
            raise ValidationError(f"ensemble weights sum to {total_w}, not 1")

    tv = float(np.abs(p1 - p0).sum() / 2)
    pos = p0 > 0
    if ((~pos) & (p1 > 1e-15)).any():
        chi2 = math.inf
        kl = math.inf
    else:
        chi2 = float(((p1[pos] - p0[pos]) ** 2 / p0[pos]).sum())
        mask = pos & (p1 > 0)
        kl = float((p1[mask] * np.log(p1[mask] / p0[mask])).sum())
    ratios = p1[pos] / p0[pos]
    return DivergenceReport(
        tv=tv,
        chi2=chi2,
        kl=kl,
        num_transcripts=int(size),
        min_likelihood_ratio=float(ratios.min()) if ratios.size else 1.0,
        p0=p0,
        p1=p1,
    )


def phi_pairs_finite(m, sigma, ensemble) -> list[float]:
    """phi over all ordered alternative pairs of a finite ensemble (for the
    moment-method bound with exact pair averaging)."""
    from .measurement import phi as phi_fn

    out = []
    for state_u, _ in ensemble:
        for state_v, _ in ensemble:
            out.append(phi_fn(m, sigma, state_u, state_v))
    return out


def ingster_bound(phi_samples, num_copies: int) -> tuple[float, float]:
    """Moment-method chi-squared bound E[(1 + phi)^N] - 1 with its standard error."""
    arr = np.asarray(phi_samples, dtype=float)
    if arr.size == 0:
        raise ValidationError("need at least one phi sample")
    if (1 + arr <= 0).any():
        raise ValidationError("1 + phi must stay positive")
    vals = (1 + arr) ** num_copies
    est = float(vals.mean() - 1.0)
    se = float(vals.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return est, se


def kl_of(p, q) -> float:
    """KL(p || q) for distributions on a common finite domain."""
    a = np.asarray(p, float)
    b = np.asarray(q, float)
    mask = a > 0
    if (b[mask] <= 0).any():
        return math.inf
    return float((a[mask] * np.log(a[mask] / b[mask])).sum())
