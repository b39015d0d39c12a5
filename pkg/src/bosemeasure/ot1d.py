"""Exact optimal transport between finitely supported measures on the line.

Everything is computed on merged jump grids of the CDFs or quantile
functions, so the results carry only floating-point round-off.
"""
import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels

MERGE_TOL = 1e-12
RENORMALIZE_TOL = 1e-9


@dataclass(frozen=True)
class DiscreteMeasure:
    """Probability measure ``sum_i weights[i] * delta(atoms[i])``.

    Construction sorts the atoms, merges atoms closer than ``MERGE_TOL``
    (summing their weights) and renormalizes weights whose total is off by
    less than ``RENORMALIZE_TOL``. Larger deviations raise ``ValueError``.
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __init__(self, atoms, weights):
        x = np.asarray(atoms, dtype=np.float64).ravel()
        w = np.asarray(weights, dtype=np.float64).ravel()
        if x.size == 0:
            raise ValueError("a measure needs at least one atom")
        if x.shape != w.shape:
            raise ValueError("atoms and weights must have the same length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
            raise ValueError("atoms and weights must be finite")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        total = w.sum()
        if abs(total - 1.0) >= RENORMALIZE_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")
        # leave sums that are already 1 up to round-off alone, so rebuilding is exact
        if abs(total - 1.0) > w.size * np.finfo(np.float64).eps:
            w = w / total

        order = np.argsort(x, kind="stable")
        x, w = x[order], w[order]
        # merge clusters whose consecutive gaps are within tolerance
        starts = np.concatenate([[True], np.diff(x) > MERGE_TOL])
        group = np.cumsum(starts) - 1
        merged_w = np.bincount(group, weights=w)
        merged_x = x[starts]
        merged_x.setflags(write=False)
        merged_w.setflags(write=False)
        object.__setattr__(self, "atoms", merged_x)
        object.__setattr__(self, "weights", merged_w)

    def __len__(self):
        return self.atoms.size

    def __eq__(self, other):
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return (np.array_equal(self.atoms, other.atoms)
                and np.array_equal(self.weights, other.weights))

    __hash__ = None

    @property
    def cumulative(self):
        return np.cumsum(self.weights)

    def mean(self):
        return float(self.atoms @ self.weights)

    def expect(self, f):
        """Integral of ``f`` against the measure (``f`` vectorized or scalar)."""
        values = np.asarray([f(a) for a in self.atoms], dtype=np.float64)
        return float(values @ self.weights)

    def shifted(self, s):
        return DiscreteMeasure(self.atoms + s, self.weights)

    def scaled(self, lam):
        if lam <= 0:
            raise ValueError("scale factor must be positive")
        return DiscreteMeasure(self.atoms * lam, self.weights)

    def to_csv(self):
        """Two-column ``atom,weight`` text with 17 significant digits."""
        buf = io.StringIO()
        buf.write("atom,weight\n")
        for a, w in zip(self.atoms, self.weights):
            buf.write(f"{a:.17g},{w:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames != ["atom", "weight"]:
            raise ValueError(f"expected header atom,weight, got {reader.fieldnames}")
        rows = list(reader)
        return cls([float(r["atom"]) for r in rows], [float(r["weight"]) for r in rows])


def dirac(a):
    return DiscreteMeasure([a], [1.0])


@dataclass(frozen=True)
class TransportPlan:
    """Coupling given as ``(source index, target index, mass)`` entries."""

    source: DiscreteMeasure
    target: DiscreteMeasure
    entries: tuple = field(default_factory=tuple)

    def as_matrix(self):
        pi = np.zeros((len(self.source), len(self.target)))
        for i, j, m in self.entries:
            pi[i, j] += m
        return pi

    def marginal_defect(self):
        pi = self.as_matrix()
        return max(np.max(np.abs(pi.sum(axis=1) - self.source.weights)),
                   np.max(np.abs(pi.sum(axis=0) - self.target.weights)))

    def cost(self, p=1.0):
        x, y = self.source.atoms, self.target.atoms
        return float(sum(m * abs(x[i] - y[j]) ** p for i, j, m in self.entries))


@dataclass(frozen=True)
class LipschitzFunction:
    """A test function with a declared Lipschitz constant."""

    fn: Callable[[float], float]
    lipschitz: float


def empirical_from_samples(samples: Sequence[float]) -> DiscreteMeasure:
    """Empirical measure ``(1/N) sum_i delta(samples[i])``."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("empty sample")
    values, counts = np.unique(x, return_counts=True)
    return DiscreteMeasure(values, counts / x.size)


def cdf(m: DiscreteMeasure, x: float) -> float:
    """``m((-inf, x])``; right-continuous."""
    k = np.searchsorted(m.atoms, x, side="right")
    if k == 0:
        return 0.0
    if k == len(m):
        return 1.0
    return float(min(1.0, m.cumulative[k - 1]))


def quantile(m: DiscreteMeasure, t: float) -> float:
    """Generalized inverse ``sup{x : F(x) <= t}`` for ``t`` in (0, 1)."""
    if not 0.0 < t < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {t!r}")
    k = np.searchsorted(m.cumulative, t, side="right")
    return float(m.atoms[min(k, len(m) - 1)])


def wasserstein_p(m1: DiscreteMeasure, m2: DiscreteMeasure, p: float = 1.0) -> float:
    """``W_p`` as the L^p distance of quantile functions, integrated exactly."""
    if not p >= 1.0:
        raise ValueError(f"p must be >= 1, got {p!r}")
    integral = kernels.wp_quantile_sorted(m1.atoms, m1.weights, m2.atoms, m2.weights, p)
    return float(integral ** (1.0 / p))


def wasserstein_1_cdf(m1: DiscreteMeasure, m2: DiscreteMeasure) -> float:
    """``W_1`` as the L^1 distance of CDFs over the merged atom grid."""
    return kernels.w1_cdf_sorted(m1.atoms, m1.weights, m2.atoms, m2.weights)


def w1_dual_bound(m1: DiscreteMeasure, m2: DiscreteMeasure, test_fns) -> float:
    """Best lower bound on ``W_1`` from the given Lipschitz test functions.

    Each entry of ``test_fns`` is a :class:`LipschitzFunction` or a
    ``(fn, lipschitz)`` pair. Functions with zero Lipschitz constant are
    constants and contribute nothing.
    """
    best = 0.0
    for item in test_fns:
        fn, lip = (item.fn, item.lipschitz) if isinstance(item, LipschitzFunction) else item
        if lip < 0:
            raise ValueError("Lipschitz constant must be nonnegative")
        if lip == 0:
            continue
        gap = abs(m1.expect(fn) - m2.expect(fn)) / lip
        best = max(best, gap)
    return float(best)


def optimal_plan(m1: DiscreteMeasure, m2: DiscreteMeasure) -> TransportPlan:
    """Monotone (north-west corner) coupling, optimal for every convex cost."""
    wa = m1.weights.copy()
    wb = m2.weights.copy()
    entries = []
    i = j = 0
    # tiny residues from round-off are pushed onto the last atoms
    while i < len(wa) and j < len(wb):
        mass = min(wa[i], wb[j])
        if mass > 0:
            entries.append((i, j, float(mass)))
        wa[i] -= mass
        wb[j] -= mass
        if i == len(wa) - 1 and j == len(wb) - 1:
            break
        if (wa[i] <= wb[j] and i < len(wa) - 1) or j == len(wb) - 1:
            i += 1
        else:
            j += 1
    return TransportPlan(m1, m2, tuple(entries))
