"""State certification: the basic Haar-basis tester and the bucketwise certifier.

Both testers consume copies exclusively through a :class:`CopySource`
(physical randomness) plus an :class:`RngHandle` stream (classical
randomness), so verdicts and copy counts are reproducible bit-for-bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .classical import SampleCounts, l2_two_sample_test
from .linalg import DensityMatrix, ValidationError, hermitian_eig
from .measurement import (
    BudgetExhaustedError,
    Povm,
    basis_povm,
    outcome_distribution,
    projector_povm,
)
from .rng import RngHandle, as_generator, haar_unitary
from .spectrum import Spectrum, bucketize_values, remove_mass_upper

# Calibrated once so a single basic round has power >= 2/3 at d = 16,
# eps_HS = 0.3 (see tests/test_certify.py::test_single_round_calibration).
DEFAULT_C_BASIC = 48.0
DEFAULT_C_TRACE = 80.0
DEFAULT_L2_SCALE = 0.5


@dataclass(frozen=True)
class CertifyConfig:
    """Tunable constants for the certifiers; the defaults are calibrated."""

    eps: float = 0.3
    delta: float = 0.1
    c_basic: float = DEFAULT_C_BASIC
    c_trace: float = DEFAULT_C_TRACE
    l2_scale: float = DEFAULT_L2_SCALE
    seed: int = 0

    def __post_init__(self):
        if min(self.c_basic, self.c_trace, self.l2_scale) <= 0:
            raise ValidationError("constant multipliers must be positive")


DEFAULT_CONFIG = CertifyConfig()


@dataclass
class Verdict:
    answer: str  # "YES", "NO", or "INCONCLUSIVE"
    copies_used: int
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"answer": self.answer, "copies": self.copies_used, "diagnostics": self.diagnostics}
        )


def _rounds(delta: float) -> int:
    """Majority-vote round count: standard Chernoff margin for error delta."""
    return max(1, math.ceil(18 * math.log(1 / delta)))


def basic_certify(src, sigma: DensityMatrix, eps: float, delta: float,
                  cfg: CertifyConfig = DEFAULT_CONFIG, rng: RngHandle | None = None) -> Verdict:
    """Haar-basis tester: YES if rho = sigma, NO if ||rho - sigma||_HS > eps.

    Each round measures ceil(c_basic sqrt(d)/eps^2) copies in a fresh
    Haar-random basis, samples a same-size reference from sigma's outcome
    law, and runs the two-sample L2 test at gap l2_scale * eps / sqrt(d);
    the verdict is the majority over the rounds.
    """
    if not 0 < eps <= 2:
        raise ValidationError(f"eps must lie in (0, 2], got {eps}")
    d = src.dim
    if sigma.dim != d:
        raise ValidationError(f"source dim {d} != sigma dim {sigma.dim}")
    if rng is None:
        rng = RngHandle(cfg.seed).child("basic")
    start = src.copies_used
    if d == 1:
        return Verdict("YES", 0, {"trivial": "only one state exists in dimension 1"})

    n_copies = math.ceil(cfg.c_basic * math.sqrt(d) / eps**2)
    l2_gap = cfg.l2_scale * eps / math.sqrt(d)
    rounds = _rounds(delta)
    rejections = 0
    try:
        for t in range(rounds):
            gen = rng.child(t).generator()
            m = basis_povm(haar_unitary(d, gen))
            measured = SampleCounts(src.measure_batch(m, n_copies, gen))
            reference = SampleCounts(gen.multinomial(n_copies, outcome_distribution(sigma, m)))
            if not l2_two_sample_test(measured, reference, l2_gap):
                rejections += 1
    except BudgetExhaustedError as exc:
        return Verdict("INCONCLUSIVE", src.copies_used - start, {"budget": str(exc)})
    answer = "NO" if rejections * 2 > rounds else "YES"
    return Verdict(answer, src.copies_used - start, {
        "rounds": rounds, "rejections": rejections, "copies_per_round": n_copies,
    })


class ConditionalCopySource:
    """View of a parent source restricted to a coordinate subset.

    A measurement of the conditional state Pi rho Pi / Tr(Pi rho Pi) is
    realized by refining the requested POVM with the complement projector
    and discarding complement outcomes; every physical copy consumed,
    including discards, is charged to the parent.
    """

    def __init__(self, parent, indices):
        self.parent = parent
        self.indices = np.asarray(indices, dtype=int)
        if self.indices.size == 0:
            raise ValidationError("conditional subset must be nonempty")

    @property
    def dim(self) -> int:
        return int(self.indices.size)

    @property
    def copies_used(self) -> int:
        return self.parent.copies_used

    def _embed(self, m: Povm) -> Povm:
        d = self.parent.dim
        k = len(m)
        embedded = np.zeros((k + 1, d, d), dtype=complex)
        ix = np.ix_(self.indices, self.indices)
        for z in range(k):
            embedded[z][ix] = m.elements[z]
        embedded[k] = np.eye(d) - embedded[:k].sum(axis=0)
        return Povm(embedded, list(m.labels) + ["__discard__"], _validated=True)

    def measure(self, m: Povm, rng):
        gen = as_generator(rng)
        refined = self._embed(m)
        while True:
            outcome = self.parent.measure(refined, gen)
            if outcome != "__discard__":
                return outcome

    def measure_batch(self, m: Povm, n: int, rng) -> np.ndarray:
        """n accepted outcomes; discarded copies are simulated exactly and charged."""
        gen = as_generator(rng)
        p_full = outcome_distribution(self.parent.state, self._embed(m))
        accept = float(p_full[:-1].sum())
        if accept <= 0:
            raise BudgetExhaustedError("conditional acceptance probability is zero")
        if accept < 1.0 - 1e-12:
            discards = int(gen.negative_binomial(n, accept))
        else:
            discards = 0
        self.parent._charge(n + discards)
        return gen.multinomial(n, p_full[:-1] / accept)


def conditional_source(src, projector_indices) -> ConditionalCopySource:
    """Public constructor for the rejection-sampling view."""
    return ConditionalCopySource(src, projector_indices)


def _fraction_test(src, indices, n: int, rng) -> float:
    """Observed fraction of outcomes landing in the coordinate subset."""
    m = projector_povm(indices, src.dim)
    counts = src.measure_batch(m, n, rng)
    return counts[0] / n


@dataclass
class _Plan:
    """Measurement-basis preprocessing for a general (non-diagonal) sigma."""

    spectrum: Spectrum
    rotation: np.ndarray | None  # eigenbasis map; None when sigma is already diagonal


def _diagonalize(sigma: DensityMatrix) -> _Plan:
    off = np.abs(sigma.mat - np.diag(np.diag(sigma.mat))).max()
    if off <= 1e-12:
        lam = np.clip(sigma.diagonal(), 0.0, None)
        return _Plan(Spectrum(lam / lam.sum()), None)
    lam, vec = hermitian_eig(sigma.mat)
    lam = np.clip(lam, 0.0, None)
    return _Plan(Spectrum(lam / lam.sum()), vec)


class _RotatedSource:
    """Measures the parent with V M V^dagger so tests can work in sigma's eigenbasis."""

    def __init__(self, parent, v: np.ndarray):
        self.parent = parent
        self.v = v

    @property
    def dim(self):
        return self.parent.dim

    @property
    def copies_used(self):
        return self.parent.copies_used

    @property
    def state(self):
        return DensityMatrix(self.v.conj().T @ self.parent.state.mat @ self.v)

    def _charge(self, n):
        self.parent._charge(n)

    def measure(self, m: Povm, rng):
        return self.parent.measure(m.conjugated(self.v), rng)

    def measure_batch(self, m: Povm, n: int, rng):
        return self.parent.measure_batch(m.conjugated(self.v), n, rng)


def certify(src, sigma: DensityMatrix, eps: float, delta: float,
            cfg: CertifyConfig = DEFAULT_CONFIG, rng: RngHandle | None = None) -> Verdict:
    """Bucketwise certifier: YES if rho = sigma, NO if ||rho - sigma||_1 > eps.

    Scenario 1 checks the mass of the low-eigenvalue tail; scenario 3 runs a
    trace test plus a conditional basic test per bucket; scenario 4 does the
    same per bucket pair. The off-diagonal tail/bulk scenario needs no
    separate test: it is excluded once scenario 1 passes. The first NO wins.
    """
    if not 0 < eps < 1:
        raise ValidationError(f"eps must lie in (0, 1), got {eps}")
    if rng is None:
        rng = RngHandle(cfg.seed).child("certify")
    start = src.copies_used
    diag: dict = {"scenario1": None, "scenario3": [], "scenario4": []}

    plan = _diagonalize(sigma)
    if plan.rotation is not None:
        src = _RotatedSource(src, plan.rotation)
    spec = plan.spectrum
    d = spec.dim

    removal = remove_mass_upper(spec, eps)
    buckets = bucketize_values(removal.effective)
    lam = spec.lambdas
    m_factor = max(math.log(10 * d / eps**2), 1.0)
    tail = np.asarray(removal.tail, dtype=int)

    try:
        # Scenario 1: mass on the removed tail.
        n1 = math.ceil(cfg.c_trace * math.log(2 / delta) / eps**2)
        frac = _fraction_test(src, tail, n1, rng.child("s1").generator()) if tail.size else 0.0
        diag["scenario1"] = {"fraction": frac, "threshold": eps**2 / 5, "copies": n1}
        if frac >= eps**2 / 5:
            return Verdict("NO", src.copies_used - start, diag)

        levels = buckets.levels
        n_trace = math.ceil(
            20 * cfg.c_trace * m_factor**4 * math.log(4 * max(len(levels), 1) / delta) / eps**2
        )
        gate = eps / (40 * m_factor**2)

        # Scenario 3: one bucket drifted.
        for j in levels:
            idx = buckets.indices(j)
            bucket_trace = float(lam[idx].sum())
            gen = rng.child("s3", j)
            frac = _fraction_test(src, idx, n_trace, gen.child("trace").generator())
            entry = {"bucket": j, "trace": bucket_trace, "fraction": frac, "skipped": False}
            diag["scenario3"].append(entry)
            if frac >= bucket_trace + gate:
                return Verdict("NO", src.copies_used - start, diag)
            if frac < gate:
                entry["skipped"] = True  # conditional path pointless below the trace gate
                continue
            eps_prime = eps / (20 * m_factor**2 * bucket_trace)
            eps_hs = min(eps_prime / math.sqrt(len(idx)), 2.0)
            cond = conditional_source(src, idx)
            sub_sigma = DensityMatrix.from_diagonal(lam[idx] / bucket_trace)
            verdict = basic_certify(cond, sub_sigma, eps_hs, delta / m_factor, cfg,
                                    rng=gen.child("basic"))
            entry["basic"] = verdict.answer
            if verdict.answer != "YES":
                return Verdict(verdict.answer, src.copies_used - start, diag)

        # Scenario 4: an off-diagonal bucket pair drifted.
        pairs = []
        for a in range(len(levels)):
            for b in range(a + 1, len(levels)):
                j, jp = levels[a], levels[b]
                if buckets.size(jp) > buckets.size(j):
                    j, jp = jp, j
                pairs.append((j, jp))
        for j, jp in pairs:
            idx = np.concatenate([buckets.indices(j), buckets.indices(jp)])
            idx.sort()
            pair_trace = float(lam[idx].sum())
            gen = rng.child("s4", j, jp)
            frac = _fraction_test(src, idx, n_trace, gen.child("trace").generator())
            entry = {"pair": (j, jp), "trace": pair_trace, "fraction": frac, "skipped": False}
            diag["scenario4"].append(entry)
            if frac >= pair_trace + eps / (20 * m_factor**2):
                return Verdict("NO", src.copies_used - start, diag)
            if frac < gate:
                entry["skipped"] = True
                continue
            eps_second = eps / (10 * m_factor**2 * pair_trace)
            eps_hs = min(eps_second / math.sqrt(len(idx)), 2.0)
            cond = conditional_source(src, idx)
            sub_sigma = DensityMatrix.from_diagonal(lam[idx] / pair_trace)
            verdict = basic_certify(cond, sub_sigma, eps_hs, delta / m_factor**2, cfg,
                                    rng=gen.child("basic"))
            entry["basic"] = verdict.answer
            if verdict.answer != "YES":
                return Verdict(verdict.answer, src.copies_used - start, diag)
    except BudgetExhaustedError as exc:
        diag["budget"] = str(exc)
        return Verdict("INCONCLUSIVE", src.copies_used - start, diag)

    return Verdict("YES", src.copies_used - start, diag)
