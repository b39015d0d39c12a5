"""Momentum lattice, one-particle observables and Bogoliubov covariances.

Plane waves ``exp(i p x)`` with ``p`` in ``2 pi Z^3`` are orthonormal on the
unit torus. Fourier coefficients of ``v`` are ``<exp(i p x), v>``, so the
condensate ``phi = 1`` is the zero mode with coefficient 1. Momenta are
stored as integer triples ``n`` with ``p = 2 pi n``.
"""
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi
HERMITIAN_TOL = 1e-12
DEGENERACY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MomentumLattice:
    """Nonzero momenta ``p = 2 pi n`` with ``|p| <= cutoff``, closed under ``p -> -p``."""

    cutoff: float
    integer_points: np.ndarray

    def __init__(self, cutoff: float):
        if not cutoff > 0:
            raise ValueError("cutoff must be positive")
        nmax = int(np.floor(cutoff / TWO_PI + 1e-9))
        rng = np.arange(-nmax, nmax + 1)
        grid = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
        sq = (grid ** 2).sum(axis=1)
        keep = (sq > 0) & (TWO_PI * np.sqrt(sq) <= cutoff * (1 + 1e-12))
        pts = grid[keep]
        order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0], (pts ** 2).sum(axis=1)))
        pts = np.ascontiguousarray(pts[order], dtype=np.int64)
        pts.setflags(write=False)
        object.__setattr__(self, "cutoff", float(cutoff))
        object.__setattr__(self, "integer_points", pts)

    def __len__(self):
        return self.integer_points.shape[0]

    @property
    def points(self):
        return TWO_PI * self.integer_points

    @property
    def norms(self):
        return TWO_PI * np.sqrt((self.integer_points ** 2).sum(axis=1))

    @property
    def partner(self):
        """Index of ``-p`` for every point."""
        lookup = {tuple(n): i for i, n in enumerate(self.integer_points)}
        return np.array([lookup[tuple(-n)] for n in self.integer_points], dtype=np.int64)


def plane_wave_modes(cutoff: float) -> np.ndarray:
    """Zero mode followed by the lattice points of :class:`MomentumLattice`."""
    lattice = MomentumLattice(cutoff)
    return np.vstack([np.zeros((1, 3), dtype=np.int64), lattice.integer_points])


def _mode_lookup(modes):
    return {tuple(int(c) for c in n): i for i, n in enumerate(modes)}


@dataclass(frozen=True, eq=False)
class SpectralObservable:
    """Hermitian one-particle operator in a plane-wave basis, diagonalized.

    Eigenvalues within ``DEGENERACY_TOL`` of each other are snapped to their
    cluster mean so that spectral projectors and ``f(O)`` see one value per
    eigenspace.
    """

    modes: np.ndarray
    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __init__(self, modes, matrix):
        modes = np.asarray(modes, dtype=np.int64).reshape(-1, 3)
        m = np.asarray(matrix, dtype=np.complex128)
        d = modes.shape[0]
        if m.shape != (d, d):
            raise ValueError(f"matrix shape {m.shape} does not match {d} modes")
        defect = np.max(np.abs(m - m.conj().T)) if d else 0.0
        if defect > HERMITIAN_TOL:
            raise ValueError(f"observable is not Hermitian (defect {defect:.2e})")
        if len(_mode_lookup(modes)) != d:
            raise ValueError("duplicate plane-wave modes")
        m = 0.5 * (m + m.conj().T)
        lam, vecs = np.linalg.eigh(m)
        lam = _snap_clusters(lam)
        for name, value in (("modes", modes), ("matrix", m), ("eigenvalues", lam),
                            ("eigenvectors", vecs)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def dimension(self):
        return self.modes.shape[0]

    @property
    def zero_index(self):
        idx = _mode_lookup(self.modes).get((0, 0, 0))
        if idx is None:
            raise ValueError("observable's mode list lacks the zero mode")
        return idx

    def index_of(self, n):
        return _mode_lookup(self.modes).get(tuple(int(c) for c in n))

    def distinct_eigenvalues(self):
        return np.unique(self.eigenvalues)

    def spectral_projector(self, value):
        sel = self.eigenvalues == value
        v = self.eigenvectors[:, sel]
        return v @ v.conj().T

    def reconstruction_defect(self):
        rebuilt = (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.conj().T
        return float(np.max(np.abs(rebuilt - self.matrix)))


def _snap_clusters(lam):
    lam = np.array(lam, dtype=np.float64)
    starts = np.concatenate([[True], np.diff(lam) > DEGENERACY_TOL])
    group = np.cumsum(starts) - 1
    means = np.bincount(group, weights=lam) / np.bincount(group)
    return means[group]


def multiplication_cosine(modes, axis: int = 0, amplitude: float = 1.0, harmonic: int = 1):
    """Multiplication by ``amplitude * cos(2 pi harmonic x_axis)``, truncated to ``modes``."""
    modes = np.asarray(modes, dtype=np.int64).reshape(-1, 3)
    if axis not in (0, 1, 2):
        raise ValueError("axis must be 0, 1 or 2")
    shift = np.zeros(3, dtype=np.int64)
    shift[axis] = harmonic
    diff = modes[:, None, :] - modes[None, :, :]
    hit = np.all(diff == shift, axis=2) | np.all(diff == -shift, axis=2)
    return SpectralObservable(modes, 0.5 * amplitude * hit.astype(np.float64))


def mu_p(a0: float, p) -> np.ndarray:
    """``(1/4) log(p^2 / (p^2 + 16 pi a0))`` for momentum vectors ``p``.

    ``p`` is one 3-vector or an array of them (last axis of length 3).
    """
    p = np.asarray(p, dtype=np.float64)
    p2 = (p ** 2).sum(axis=-1)
    if np.any(p2 == 0):
        raise ValueError("mu_p is undefined at p = 0")
    if a0 < 0:
        raise ValueError("scattering length must be nonnegative")
    return -0.25 * np.log1p(16.0 * np.pi * a0 / p2)


def _apply_elementwise(f, values):
    try:
        out = np.asarray(f(values), dtype=np.float64)
        if out.shape == values.shape:
            return out
    except Exception:
        pass
    return np.array([f(float(v)) for v in values], dtype=np.float64)


def functional_calculus(O: SpectralObservable, f: Callable) -> np.ndarray:
    """``f(O)`` through the eigendecomposition of ``O``."""
    fl = _apply_elementwise(f, O.eigenvalues)
    if not np.all(np.isfinite(fl)):
        raise ValueError("f must be finite on the spectrum")
    # split off a constant so that constant functions give exactly c * I
    c = fl[0]
    out = (O.eigenvectors * (fl - c)) @ O.eigenvectors.conj().T
    out = 0.5 * (out + out.conj().T)
    out[np.diag_indices_from(out)] += c
    return out


def _lattice_indices(O: SpectralObservable, lattice: MomentumLattice):
    lookup = _mode_lookup(O.modes)
    idx = []
    for n in lattice.integer_points:
        key = tuple(int(c) for c in n)
        if key not in lookup:
            raise ValueError(f"lattice point {key} is missing from the observable's modes")
        idx.append(lookup[key])
    return np.array(idx, dtype=np.int64)


def sigma_f(O: SpectralObservable, f: Callable, a0: float, lattice: MomentumLattice) -> np.ndarray:
    """Fluctuation vector ``cosh(mu_p) v(p) + sinh(mu_p) v(-p)`` with ``v = q f(O) phi``."""
    zero = O.zero_index
    v = functional_calculus(O, f)[:, zero].copy()
    v[zero] = 0.0
    idx = _lattice_indices(O, lattice)
    v_plus = v[idx]
    v_minus = v[idx[lattice.partner]]
    mu = mu_p(a0, lattice.points)
    return np.cosh(mu) * v_plus + np.sinh(mu) * v_minus


def gram_matrix(sigmas: Sequence[np.ndarray]) -> np.ndarray:
    """Hermitian Gram matrix ``G_ij = sum_p conj(s_i(p)) s_j(p)``."""
    s = np.asarray(sigmas, dtype=np.complex128)
    if s.ndim != 2:
        raise ValueError("sigma vectors must share one lattice")
    return s.conj() @ s.T


def covariance_matrix(sigmas: Sequence[np.ndarray]) -> np.ndarray:
    """Real part of the Gram matrix of the fluctuation vectors."""
    lengths = {len(s) for s in sigmas}
    if len(lengths) != 1:
        raise ValueError("sigma vectors have different lengths")
    sigma = gram_matrix(sigmas).real
    return 0.5 * (sigma + sigma.T)


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    functions: tuple
    sigma_vectors: np.ndarray
    Sigma: np.ndarray
    gram: np.ndarray
    lattice: MomentumLattice
    a0: float


def covariance_spec(O: SpectralObservable, functions: Sequence[Callable], a0: float,
                    lattice: MomentumLattice) -> CovarianceSpec:
    sig = np.array([sigma_f(O, f, a0, lattice) for f in functions])
    return CovarianceSpec(tuple(functions), sig, covariance_matrix(sig), gram_matrix(sig),
                          lattice, float(a0))


def sigma_csv(spec: CovarianceSpec, j: int = 0) -> str:
    lines = ["px,py,pz,re,im"]
    for p, s in zip(spec.lattice.points, spec.sigma_vectors[j]):
        lines.append(f"{p[0]:.17g},{p[1]:.17g},{p[2]:.17g},{s.real:.17g},{s.imag:.17g}")
    return "\n".join(lines) + "\n"


def covariance_csv(Sigma: np.ndarray) -> str:
    lines = ["i,j,sigma_ij"]
    for i in range(Sigma.shape[0]):
        for j in range(Sigma.shape[1]):
            lines.append(f"{i},{j},{Sigma[i, j]:.17g}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class DressedDispersion:
    F: np.ndarray
    G: np.ndarray
    tau: np.ndarray
    convolution: np.ndarray

    @property
    def tau_l2(self):
        return float(np.linalg.norm(self.tau))

    @property
    def tau_linf(self):
        return float(np.max(np.abs(self.tau))) if self.tau.size else 0.0


def dressed_dispersion(vhat: Callable, eta, fhat_zero: float, fhat, lattice: MomentumLattice,
                       N: int) -> DressedDispersion:
    """Quadratic-form coefficients ``F_p, G_p`` and the angles ``tau_p``.

    ``vhat`` is the transform of the unscaled potential (a function of
    ``|k|``), ``eta`` and ``fhat`` are aligned with ``lattice.points`` and
    ``fhat_zero`` is the zero-momentum coefficient of ``f_{N,ell}``. The
    convolution ``(vhat(./N) * fhat)_p`` is summed over the truncated lattice
    plus the origin.
    """
    eta = np.asarray(eta, dtype=np.float64)
    fhat = np.asarray(fhat, dtype=np.float64)
    if eta.shape != (len(lattice),) or fhat.shape != (len(lattice),):
        raise ValueError("eta and fhat must be aligned with the lattice")
    p = lattice.points
    p2 = (p ** 2).sum(axis=1)
    q = np.vstack([np.zeros((1, 3)), p])
    fq = np.concatenate([[fhat_zero], fhat])
    dist = np.linalg.norm(p[:, None, :] - q[None, :, :], axis=2)
    conv = (np.asarray(vhat(dist.ravel() / N), dtype=np.float64).reshape(dist.shape) * fq).sum(axis=1)

    s, c = np.sinh(eta), np.cosh(eta)
    F = p2 * (s ** 2 + c ** 2) + conv * (s + c) ** 2
    G = p2 * s * c + conv * (s + c) ** 2
    bad = np.flatnonzero(np.abs(G) >= F)
    if bad.size:
        n = tuple(int(x) for x in lattice.integer_points[bad[0]])
        raise ValueError(f"|G_p| >= F_p at p = 2pi*{n}; tau is undefined")
    tau = 0.5 * np.arctanh(-G / F)
    return DressedDispersion(F=F, G=G, tau=tau, convolution=conv)
