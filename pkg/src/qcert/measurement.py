"""POVMs, copy-budgeted measurement sources, and likelihood-ratio quantities."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .linalg import PSD_TOL, DensityMatrix, ValidationError, _mat, hermitian_part
from .rng import as_generator

PROB_FLOOR = 1e-15

# Audited constants for the ensemble second-moment bounds, stored beside the
# checks that use them. The bucketwise bound E_U[g^2] <= C * 2^(2j) eps_j^2 / d_j
# is provable with C = 4 (the sharper form has d_j + 1 in the denominator); the
# nominal C = 2 fails for rank-1 elements aligned with eigenvalues at the lower
# bucket edge. The off-diagonal bound uses the default audited constant.
PANINSKI_G2_CONSTANT = 4.0
OFFDIAG_G2_CONSTANT = 16.0


class BudgetExhaustedError(RuntimeError):
    """The copy source has no copies left; certifiers surface this as inconclusive."""


class UndefinedOutcomeError(ValueError):
    """Likelihood ratio requested at an outcome with vanishing null probability."""


class Povm:
    """A finite POVM: PSD elements summing to the identity.

    Completeness and element positivity are validated once, at construction.
    ``labels`` defaults to 0..m-1.
    """

    __slots__ = ("elements", "labels", "dim")

    def __init__(self, elements, labels=None, *, _validated: bool = False):
        elems = np.asarray(elements, dtype=complex)
        if elems.ndim != 3 or elems.shape[1] != elems.shape[2]:
            raise ValidationError(f"elements must be a stack of square matrices, got {elems.shape}")
        self.elements = elems
        self.dim = elems.shape[1]
        self.labels = list(labels) if labels is not None else list(range(elems.shape[0]))
        if len(self.labels) != elems.shape[0]:
            raise ValidationError("one label per element required")
        if not _validated:
            total = elems.sum(axis=0)
            if np.abs(total - np.eye(self.dim)).max() > 1e-9:
                raise ValidationError("POVM elements do not sum to the identity within 1e-9")
            for k, e in enumerate(elems):
                herm = hermitian_part(e)
                if np.abs(e - herm).max() > 1e-9:
                    raise ValidationError(f"element {k} is not Hermitian")
                if np.linalg.eigvalsh(herm)[0] < -PSD_TOL:
                    raise ValidationError(f"element {k} is not PSD within {PSD_TOL:.0e}")

    def __len__(self):
        return self.elements.shape[0]

    def conjugated(self, v: np.ndarray) -> "Povm":
        """The POVM with every element mapped to V M V^dagger."""
        rotated = np.einsum("ij,zjk,lk->zil", v, self.elements, v.conj())
        return Povm(rotated, self.labels, _validated=True)


def basis_povm(u) -> Povm:
    """Rank-1 POVM from the columns of a unitary: elements |u_i><u_i|."""
    mat = np.asarray(u, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValidationError(f"expected a square matrix, got {mat.shape}")
    if np.abs(mat.conj().T @ mat - np.eye(mat.shape[0])).max() > 1e-10:
        raise ValidationError("matrix is not unitary within 1e-10")
    cols = mat.T  # row k is the k-th column vector
    elements = np.einsum("zi,zj->zij", cols, cols.conj())
    return Povm(elements, _validated=True)


def projector_povm(indices, dim: int, labels=("inside", "outside")) -> Povm:
    """Two-outcome POVM {Pi, I - Pi} for a coordinate-subset projector."""
    pi = np.zeros((dim, dim), dtype=complex)
    idx = np.asarray(indices, dtype=int)
    pi[idx, idx] = 1.0
    return Povm(np.stack([pi, np.eye(dim) - pi]), list(labels), _validated=True)


def outcome_distribution(rho, m: Povm) -> np.ndarray:
    """Born-rule outcome probabilities <M_z, rho>."""
    mat = _mat(rho)
    if mat.shape[0] != m.dim:
        raise ValidationError(f"state dim {mat.shape[0]} != POVM dim {m.dim}")
    p = np.einsum("zij,ji->z", m.elements, mat).real
    if p.min() < -1e-9 or abs(p.sum() - 1.0) > 1e-9:
        raise ValidationError(
            f"invalid outcome distribution (min {p.min():.2e}, sum {p.sum():.12f})"
        )
    return p


def _sampling_probs(p: np.ndarray) -> np.ndarray:
    q = np.clip(p, 0.0, None)
    return q / q.sum()


class CopySource:
    """Budget-tracked oracle yielding measurement outcomes on fresh copies.

    The hidden state is only ever touched through ``measure``/``measure_batch``;
    every consumed copy increments the counter, and exceeding the budget
    raises :class:`BudgetExhaustedError`.
    """

    def __init__(self, state: DensityMatrix, budget: int | None = None):
        self.state = state
        self.budget = budget
        self.copies_used = 0

    @property
    def dim(self) -> int:
        return self.state.dim

    def _charge(self, n: int):
        if self.budget is not None and self.copies_used + n > self.budget:
            raise BudgetExhaustedError(
                f"budget {self.budget} exhausted (used {self.copies_used}, requested {n})"
            )
        self.copies_used += n

    def measure(self, m: Povm, rng):
        """Measure one copy; returns the outcome label."""
        self._charge(1)
        p = _sampling_probs(outcome_distribution(self.state, m))
        gen = as_generator(rng)
        k = int(np.searchsorted(np.cumsum(p), gen.random(), side="right"))
        return m.labels[min(k, len(m.labels) - 1)]

    def measure_batch(self, m: Povm, n: int, rng) -> np.ndarray:
        """Measure n copies at once; returns outcome counts aligned with m.labels."""
        self._charge(n)
        p = _sampling_probs(outcome_distribution(self.state, m))
        return as_generator(rng).multinomial(n, p)


@dataclass
class Transcript:
    """Sequence of (povm id, outcome label) records, one per consumed copy."""

    records: list[tuple[str, object]] = field(default_factory=list)

    def append(self, povm_id: str, outcome):
        self.records.append((povm_id, outcome))

    def __len__(self):
        return len(self.records)

    def to_jsonl(self) -> str:
        return "\n".join(
            json.dumps({"povm": pid, "outcome": out}) for pid, out in self.records
        )


@dataclass(frozen=True)
class NonadaptiveSchedule:
    """A fixed sequence of single-copy POVMs."""

    povms: tuple[Povm, ...]

    @classmethod
    def repeat(cls, m: Povm, n: int) -> "NonadaptiveSchedule":
        return cls((m,) * n)

    def __len__(self):
        return len(self.povms)

    def __iter__(self):
        return iter(self.povms)


def project_povm_to_blocks(m: Povm, buckets):
    """Restrict every element to the bucket principal submatrices.

    Returns the refined POVM with elements Pi_j M_z Pi_j (plus a residual
    pseudo-bucket covering coordinates outside every bucket) and the outcome
    map sending refined labels (j, z) back to z. For block-diagonal states
    the pushforward of the refined outcome distribution equals the original.
    """
    d = m.dim
    groups: list[tuple[object, np.ndarray]] = []
    covered = np.zeros(d, dtype=bool)
    for j in buckets.levels:
        idx = buckets.indices(j)
        covered[idx] = True
        groups.append((j, idx))
    rest = np.flatnonzero(~covered)
    if rest.size:
        groups.append(("rest", rest))

    elements, labels, outcome_map = [], [], {}
    for j, idx in groups:
        sub = np.zeros((len(m), d, d), dtype=complex)
        sub[:, idx[:, None], idx[None, :]] = m.elements[:, idx[:, None], idx[None, :]]
        for z, e in enumerate(sub):
            if np.abs(e).max() == 0.0:
                continue
            label = (j, m.labels[z])
            elements.append(e)
            labels.append(label)
            outcome_map[label] = m.labels[z]
    refined = Povm(np.stack(elements), labels, _validated=True)
    return refined, outcome_map


def likelihood_g(m_z, rho, rho_alt) -> float:
    """Single-outcome likelihood deviation <M_z, rho_alt>/<M_z, rho> - 1."""
    e = np.asarray(m_z, dtype=complex)
    p0 = np.einsum("ij,ji->", e, _mat(rho)).real
    if p0 <= PROB_FLOOR:
        raise UndefinedOutcomeError(f"null outcome probability {p0:.2e} <= {PROB_FLOOR:.0e}")
    p1 = np.einsum("ij,ji->", e, _mat(rho_alt)).real
    return float(p1 / p0 - 1.0)


def phi(m: Povm, rho, rho_u, rho_v) -> float:
    """Correlation of likelihood deviations under the null outcome law.

    Outcomes with vanishing null probability are dropped when both
    alternatives also vanish there; otherwise the ratio is infinite and an
    error is raised.
    """
    p0 = outcome_distribution(rho, m)
    pu = np.einsum("zij,ji->z", m.elements, _mat(rho_u)).real
    pv = np.einsum("zij,ji->z", m.elements, _mat(rho_v)).real
    total = 0.0
    for z in range(len(m)):
        if p0[z] <= PROB_FLOOR:
            if pu[z] > 1e-12 or pv[z] > 1e-12:
                raise UndefinedOutcomeError(
                    f"outcome {m.labels[z]} has null probability ~0 but alternative mass"
                )
            continue
        gu = pu[z] / p0[z] - 1.0
        gv = pv[z] / p0[z] - 1.0
        total += p0[z] * gu * gv
    return float(total)


def summed_deviation_second_moment(m: Povm, rho, rho_u, rho_v) -> float:
    """E_z[(g_u + g_v)^2]: the derived quantity g_u^2 + g_v^2 + 2 phi.

    No adaptive pipeline consumes it here; it is exposed for completeness of
    the likelihood framework.
    """
    return (
        phi(m, rho, rho_u, rho_u)
        + phi(m, rho, rho_v, rho_v)
        + 2 * phi(m, rho, rho_u, rho_v)
    )
