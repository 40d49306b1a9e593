"""Eigenstructure of reversible walk matrices in the pi-weighted inner product.

For a reversible P with stationary law pi, the symmetrized matrix
S = D^{1/2} P D^{-1/2} (D = diag(pi)) shares its eigenvalues, and mapping
eigenvectors back through D^{-1/2} yields a basis orthonormal under
<f, g>_pi = sum_i f(i) g(i) pi(i). The leading pair is always (1, constant).

Also provides the offspring/eigenvalue regime classifier and the
trait-aligned bottleneck statistic of a weighted graph.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .graph import STOCHASTIC_TOL, GraphError

ORTHO_TOL = 1e-9
REPEATED_EIGENVALUE_TOL = 1e-9


class SpectralError(ValueError):
    """Invalid input to a spectral computation."""


class RepeatedSecondEigenvalueWarning(UserWarning):
    """The second eigenvalue is (numerically) repeated; single-direction
    limit formulas do not apply."""


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues sorted by descending |lambda| (ties: descending value)
    with pi-orthonormal eigenvectors as columns.

    vectors[:, 0] is exactly the constant 1 with eigenvalue exactly 1.
    Signs are fixed so each column's largest-magnitude entry is positive
    (first such entry on ties).
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        for name in ("eigenvalues", "vectors", "pi"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def state_count(self):
        return self.pi.shape[0]

    @property
    def lambda2(self):
        if self.eigenvalues.shape[0] < 2:
            return 0.0
        return float(self.eigenvalues[1])

    @property
    def repeated_second(self):
        """True when |lambda2 - lambda3| falls below the detection threshold."""
        if self.eigenvalues.shape[0] < 3:
            return False
        gap = abs(self.eigenvalues[1] - self.eigenvalues[2])
        return bool(gap < REPEATED_EIGENVALUE_TOL)

    def inner(self, f, g):
        return float(np.sum(np.asarray(f) * np.asarray(g) * self.pi))


def _orthonormalize_unit_eigenspace(F, vals, pi):
    """Rotate the eigenvalue-1 subspace so its first basis vector is the
    exact constant; remaining directions are re-orthonormalized in the
    pi inner product."""
    unit = np.flatnonzero(np.abs(vals - 1.0) < 1e-8)
    if unit.size == 0:
        raise SpectralError("no unit eigenvalue found; input is not stochastic")
    n = F.shape[0]
    ones = np.ones(n)
    basis = [ones]
    for idx in unit:
        v = F[:, idx].copy()
        for b in basis:
            v = v - np.sum(v * b * pi) * b
        norm = np.sqrt(np.sum(v * v * pi))
        if norm > 1e-8:
            basis.append(v / norm)
    basis = basis[: unit.size]
    for k, idx in enumerate(unit):
        F[:, idx] = basis[k]
        vals[idx] = 1.0
    return unit[0]


def decompose(tm):
    """Full pi-orthonormal eigendecomposition of a reversible TransitionMatrix.

    Raises SpectralError on a non-reversible input or eigensolver failure,
    and emits RepeatedSecondEigenvalueWarning when the second eigenvalue is
    repeated within 1e-9.
    """
    P = np.asarray(tm.matrix, dtype=float)
    pi = np.asarray(tm.stationary, dtype=float)
    flow = pi[:, None] * P
    if np.max(np.abs(flow - flow.T)) > STOCHASTIC_TOL * 10:
        raise SpectralError("transition matrix is not reversible under pi")

    s = np.sqrt(pi)
    S = s[:, None] * P / s[None, :]
    S = 0.5 * (S + S.T)
    try:
        vals, U = scipy.linalg.eigh(S)
    except scipy.linalg.LinAlgError as exc:
        raise SpectralError(f"eigensolver failed: {exc}") from exc

    F = U / s[:, None]
    _orthonormalize_unit_eigenspace(F, vals, pi)

    order = np.lexsort((-vals, -np.abs(vals)))
    vals = vals[order]
    F = F[:, order]

    # the constant must come first: its eigenvalue is +1, beating any tie at |.|=1
    F[:, 0] = 1.0
    vals[0] = 1.0

    for j in range(1, F.shape[1]):
        col = F[:, j]
        lead = np.argmax(np.abs(col))
        if col[lead] < 0:
            F[:, j] = -col

    dec = SpectralDecomposition(eigenvalues=vals, vectors=F, pi=pi)
    if dec.repeated_second:
        warnings.warn(
            "second eigenvalue is repeated within 1e-9; mixture-limit "
            "formulas that assume a simple second eigenvalue do not apply",
            RepeatedSecondEigenvalueWarning,
            stacklevel=2,
        )
    return dec


def expand_in_eigenbasis(y, dec):
    """Coefficients c_j = <y, f_j>_pi; sum_j c_j f_j reconstructs y."""
    y = np.asarray(y, dtype=float)
    if y.shape != (dec.state_count,):
        raise SpectralError(
            f"trait length {y.shape} does not match state count {dec.state_count}"
        )
    return dec.vectors.T @ (dec.pi * y)


class Regime(enum.Enum):
    LOW_VARIANCE = "LowVariance"
    HIGH_VARIANCE = "HighVariance"
    CRITICAL = "Critical"

    def __str__(self):
        return self.value


def classify_regime(m, lambda2):
    """HighVariance iff m*lambda2^2 > 1, LowVariance iff < 1, Critical at
    equality within 1e-12."""
    if m < 1:
        raise SpectralError("mean offspring must be at least 1")
    if abs(lambda2) >= 1:
        raise SpectralError("second eigenvalue must satisfy |lambda2| < 1")
    x = m * lambda2 * lambda2
    if abs(x - 1.0) <= 1e-12:
        return Regime.CRITICAL
    return Regime.HIGH_VARIANCE if x > 1.0 else Regime.LOW_VARIANCE


@dataclass(frozen=True)
class BottleneckStat:
    """Trait-aligned bottleneck value with the standardized trait used."""

    lambda_tilde: float
    standardized_trait: np.ndarray


def bottleneck(graph, y):
    """lambda_tilde = y~' D^{-1/2} A D^{-1/2} y~ for the standardized trait
    y~ = (y - mean) / ||y - mean||_2. Errors on a constant trait."""
    y = np.asarray(y, dtype=float)
    if y.shape != (graph.node_count,):
        raise SpectralError("trait length does not match node count")
    centered = y - y.mean()
    norm = np.linalg.norm(centered)
    if norm == 0:
        raise SpectralError("trait is constant; standardization undefined")
    ytil = centered / norm
    d = graph.degrees
    if np.any(d <= 0):
        raise GraphError("zero-degree node; bottleneck undefined")
    scaled = ytil / np.sqrt(d)
    lam = float(scaled @ graph.weights @ scaled)
    ytil.setflags(write=False)
    return BottleneckStat(lambda_tilde=lam, standardized_trait=ytil)


def decomposition_to_csv(dec):
    """Audit export: one row per eigenpair, columns j, lambda, f entries."""
    n = dec.state_count
    header = "j,lambda," + ",".join(f"f_{i}" for i in range(n))
    lines = [header]
    for j in range(n):
        entries = ",".join(repr(float(v)) for v in dec.vectors[:, j])
        lines.append(f"{j + 1},{float(dec.eigenvalues[j])!r},{entries}")
    return "\n".join(lines) + "\n"
