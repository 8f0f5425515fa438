"""POVMs, the design matrix, sampling simulators and weight matrices.

Two sampling modes are supported:

* ``separate``: every effect ``E_m`` is measured on its own batch of ``n``
  copies, so ``#m ~ Binomial(n, p_m)`` independently across outcomes.
* ``collective``: ``n`` copies are measured with the full POVM, giving
  ``counts ~ Multinomial(n, p)``.  Only valid for complete POVMs.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateProbability, DimensionMismatch, IncompleteMeasurement, InvalidOperator
from .linalg import TAU_HERM, TAU_ORTH, TAU_PSD, HermitianBasis, pauli_word

logger = logging.getLogger(__name__)

TAU_POVM = 1e-10
EPS_CLAMP = 1e-8

SEPARATE = "separate"
COLLECTIVE = "collective"


@dataclass(frozen=True)
class Povm:
    """A set of effects ``E_m = M_m^dag M_m`` stored as an array of shape (M, d, d)."""

    effects: np.ndarray
    complete: bool = False
    labels: tuple = field(default=(), compare=False)

    def __post_init__(self):
        effects = np.asarray(self.effects, dtype=complex)
        if effects.ndim != 3 or effects.shape[1] != effects.shape[2]:
            raise DimensionMismatch(f"effects must have shape (M, d, d), got {effects.shape}")
        if not np.allclose(effects, effects.conj().transpose(0, 2, 1), rtol=0, atol=TAU_HERM):
            raise InvalidOperator("POVM effects must be Hermitian")
        lam_min = np.linalg.eigvalsh((effects + effects.conj().transpose(0, 2, 1)) / 2)[:, 0]
        if lam_min.min() < -TAU_PSD:
            raise InvalidOperator(f"POVM effect has negative eigenvalue {lam_min.min():.3e}")
        if self.complete:
            resid = np.linalg.norm(effects.sum(axis=0) - np.eye(effects.shape[1]))
            if resid > TAU_POVM:
                raise IncompleteMeasurement(f"effects flagged complete but ||sum E_m - I||_F = {resid:.3e}")
        effects.setflags(write=False)
        object.__setattr__(self, "effects", effects)

    @property
    def dim(self) -> int:
        return self.effects.shape[1]

    @property
    def num_outcomes(self) -> int:
        return self.effects.shape[0]

    @classmethod
    def from_kraus(cls, kraus, complete: bool = False, labels=()) -> "Povm":
        kraus = np.asarray(kraus, dtype=complex)
        return cls(kraus.conj().transpose(0, 2, 1) @ kraus, complete, labels)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "complete": bool(self.complete),
            "effects": np.stack([self.effects.real, self.effects.imag], axis=-1).tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Povm":
        raw = np.asarray(doc["effects"], dtype=float)
        effects = raw[..., 0] + 1j * raw[..., 1]
        if effects.shape[1] != doc.get("dim", effects.shape[1]):
            raise DimensionMismatch("'dim' does not match the effect matrices")
        return cls(effects, bool(doc.get("complete", False)))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "Povm":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class DesignMatrix:
    """Real M x d**2 matrix ``A[m, i] = Tr(E_m B_i)``.

    Behaves like an ndarray through ``__array__``.
    """

    entries: np.ndarray
    rank: int

    @property
    def rank_full(self) -> bool:
        return self.rank == self.entries.shape[1]

    @property
    def shape(self):
        return self.entries.shape

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def numerical_rank(a: np.ndarray) -> int:
    """Rank with the threshold ``sigma > d2 * eps * sigma_max`` (d2 = number of columns)."""
    a = np.asarray(a, dtype=float)
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > a.shape[1] * np.finfo(float).eps * s[0]))


def design_matrix(povm: Povm, basis: HermitianBasis) -> DesignMatrix:
    if povm.dim != basis.dim:
        raise DimensionMismatch(f"POVM dimension {povm.dim} != basis dimension {basis.dim}")
    a = povm.effects.reshape(povm.num_outcomes, -1) @ basis.elements.reshape(basis.size, -1).conj().T
    if np.abs(a.imag).max() > TAU_HERM:
        raise InvalidOperator("Tr(E_m B_i) is not real; check that effects and basis are Hermitian")
    entries = np.ascontiguousarray(a.real)
    entries.setflags(write=False)
    return DesignMatrix(entries, numerical_rank(entries))


def probabilities(a, theta, return_clipped: bool = False):
    """Outcome probabilities ``p = A theta`` clipped to [0, 1].

    Roundoff can push a probability slightly outside [0, 1]; values beyond
    ``TAU_PSD`` indicate an invalid state and raise.
    """
    p = np.asarray(a, dtype=float) @ np.asarray(theta, dtype=float)
    if p.min() < -TAU_PSD or p.max() > 1 + TAU_PSD:
        raise InvalidOperator(f"probabilities out of range [{p.min():.3e}, {p.max():.3e}]")
    clipped = int(np.sum((p < 0) | (p > 1)))
    if clipped:
        logger.debug("clipped %d probabilities from roundoff", clipped)
    p = np.clip(p, 0.0, 1.0)
    return (p, clipped) if return_clipped else p


@dataclass(frozen=True)
class MeasurementRecord:
    """Raw outcome counts of one tomography run.

    ``n`` is the number of copies per effect in separate mode and the total
    number of copies in collective mode; either way ``frequencies = counts / n``.
    """

    counts: np.ndarray
    n: int
    mode: str = SEPARATE
    seed: int | None = None

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if self.mode not in (SEPARATE, COLLECTIVE):
            raise ValueError(f"unknown sampling mode {self.mode!r}")
        if self.n < 1 or counts.min(initial=0) < 0 or counts.max(initial=0) > self.n:
            raise ValueError("counts must lie in [0, n]")
        if self.mode == COLLECTIVE and counts.sum() != self.n:
            raise ValueError("collective counts must sum to n")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.n

    def to_dict(self) -> dict:
        return {"mode": self.mode, "n": int(self.n), "counts": self.counts.tolist(), "seed": self.seed}

    @classmethod
    def from_dict(cls, doc: dict) -> "MeasurementRecord":
        return cls(np.asarray(doc["counts"]), int(doc["n"]), doc.get("mode", SEPARATE), doc.get("seed"))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "MeasurementRecord":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed, None
    return np.random.default_rng(seed), (int(seed) if isinstance(seed, (int, np.integer)) else None)


def sample_separate(p, n: int, seed=None) -> MeasurementRecord:
    """Independent ``Binomial(n, p_m)`` counts for every outcome."""
    p = np.asarray(p, dtype=float)
    if n < 1:
        raise ValueError("n must be >= 1")
    if p.min() < 0 or p.max() > 1:
        raise ValueError("probabilities must lie in [0, 1]")
    rng, recorded = _rng(seed)
    return MeasurementRecord(rng.binomial(n, p), n, SEPARATE, recorded)


def sample_collective(p, n: int, seed=None) -> MeasurementRecord:
    """``Multinomial(n, p)`` counts; ``p`` must sum to one within TAU_POVM."""
    p = np.asarray(p, dtype=float)
    if n < 1:
        raise ValueError("n must be >= 1")
    if abs(p.sum() - 1) > TAU_POVM:
        raise IncompleteMeasurement(f"collective sampling needs sum(p) = 1, got {p.sum()!r}")
    rng, recorded = _rng(seed)
    return MeasurementRecord(rng.multinomial(n, p / p.sum()), n, COLLECTIVE, recorded)


def simulate(povm: Povm, a, theta, n: int, mode: str = SEPARATE, seed=None) -> MeasurementRecord:
    """Sample a record for the state with coordinates ``theta``."""
    p = probabilities(a, theta)
    if mode == COLLECTIVE:
        if not povm.complete:
            raise IncompleteMeasurement("collective sampling requires a POVM flagged complete")
        return sample_collective(p, n, seed)
    return sample_separate(p, n, seed)


@dataclass(frozen=True)
class WeightMatrix:
    """Diagonal weight ``W = n diag(1 / (p_m - p_m^2))``."""

    diag: np.ndarray
    n: int
    source: str
    clamp_count: int = 0

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.diag)

    @property
    def noise_var(self) -> np.ndarray:
        """Diagonal of ``P = W^-1``."""
        return 1.0 / self.diag


def weight_matrix_true(p, n: int, eps: float = EPS_CLAMP) -> WeightMatrix:
    p = np.asarray(p, dtype=float)
    if np.any(p <= eps) or np.any(p >= 1 - eps):
        raise DegenerateProbability("true weights need every p_m strictly inside (0, 1)")
    return WeightMatrix(n / (p - p * p), n, "true")


def weight_matrix_empirical(record: MeasurementRecord, eps_clamp: float = EPS_CLAMP) -> WeightMatrix:
    """Plug-in weight from the observed frequencies, clamped into [eps, 1 - eps]."""
    f = record.frequencies
    clamped = np.clip(f, eps_clamp, 1 - eps_clamp)
    count = int(np.sum(clamped != f))
    return WeightMatrix(record.n / (clamped - clamped * clamped), record.n, "empirical", count)


def pauli_projector_povm(num_qubits: int, num_projectors: int, seed=None, both_signs: bool | None = None) -> Povm:
    """Scaled eigenspace projectors of distinct random full-weight Pauli words.

    Words come from ``{X, Y, Z}^q`` and the effect for word ``P`` and sign
    ``s`` is ``(I + s P) / 2 / num_projectors``.  By default only ``s = +1`` is
    used; when more projectors are requested than there are such words
    (``3^q``), both eigenprojectors are drawn from (``2 * 3^q`` candidates).
    Labels are ``(word, sign)`` pairs.  The result is not complete.
    """
    words = 3**num_qubits
    if both_signs is None:
        both_signs = num_projectors > words
    total = 2 * words if both_signs else words
    if not 1 <= num_projectors <= total:
        raise ValueError(f"num_projectors must be in [1, {total}]")
    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(total, size=num_projectors, replace=False))
    d = 2**num_qubits
    labels = []
    effects = np.empty((num_projectors, d, d), dtype=complex)
    for k, idx in enumerate(picks):
        widx, sign = (idx // 2, 1 - 2 * (idx % 2)) if both_signs else (idx, 1)
        word = tuple(int(c) + 1 for c in np.base_repr(int(widx), 3).zfill(num_qubits))
        labels.append((word, int(sign)))
        effects[k] = (np.eye(d) + sign * pauli_word(word)) / 2 / num_projectors
    return Povm(effects, complete=False, labels=tuple(labels))


def reconstructs_effects(a, povm: Povm, basis: HermitianBasis) -> bool:
    """Check that every row of ``A`` maps back to its effect under the basis."""
    back = np.tensordot(np.asarray(a), basis.elements, axes=1)
    return bool(np.abs(back - povm.effects).max() < TAU_ORTH * basis.size)
