"""Exact small-system simulation on a truncated plane-wave basis.

The N-boson Hamiltonian on the unit torus is projected onto the plane waves
in ``TorusModel.modes`` (zero mode first). Measurements of a one-particle
observable on every particle are sampled exactly from the joint law by
rotating the state into the observable's eigenbasis.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fockspace as fs
from .bogoliubov import TWO_PI, SpectralObservable, functional_calculus
from .ot1d import DiscreteMeasure
from .scattering import RadialPotential

RESIDUAL_TOL = 1e-10
DENSE_LIMIT = 1000
START_SEED = 20240
WEIGHT_FLOOR = 1e-14
MAX_DIM = 200_000


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True, eq=False)
class TorusModel:
    """``N`` bosons, plane waves ``modes`` (integer triples, zero first), potential ``V``.

    Pair interaction in momentum space is ``vhat(|k| / N)`` with ``vhat`` the
    transform of the unscaled potential, so that ``V_N = N^3 V(N .)``.
    """

    modes: np.ndarray
    N: int
    potential: RadialPotential

    def __post_init__(self):
        modes = np.asarray(self.modes, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "modes", modes)
        if tuple(modes[0]) != (0, 0, 0):
            raise ValueError("the zero mode must come first")
        keys = {tuple(n) for n in modes}
        if len(keys) != len(modes):
            raise ValueError("duplicate modes")
        if any(tuple(-n) not in keys for n in modes):
            raise ValueError("mode list must be closed under p -> -p")
        if self.N < 1:
            raise ValueError("need at least one particle")

    @property
    def d(self):
        return self.modes.shape[0]

    def vhat(self, k):
        """Transform of ``V_N`` at momentum magnitudes ``k``."""
        return self.potential.fourier(np.asarray(k, dtype=np.float64) / self.N)

    def sector(self):
        return fs.OccupationBasis(self.d, self.N, fixed=True, modes=self.modes)


def _interaction_terms(model):
    modes = model.modes
    lookup = {tuple(n): i for i, n in enumerate(modes)}
    d = model.d
    terms, coeffs = [], []
    for ip in range(d):
        for iq in range(d):
            total = modes[ip] + modes[iq]
            for ir in range(d):
                is_ = lookup.get(tuple(total - modes[ir]))
                if is_ is None:
                    continue
                k = TWO_PI * np.linalg.norm(modes[ir] - modes[ip])
                terms.append((ir, is_, iq, ip))
                coeffs.append(float(model.vhat(np.array([k]))[0]) / (2.0 * model.N))
    return np.array(terms, dtype=np.int64).reshape(-1, 4), np.array(coeffs)


def build_hamiltonian(model: TorusModel, basis: fs.OccupationBasis = None) -> fs.ModeOperator:
    """Kinetic ``dGamma(p^2)`` plus ``(1/2N) sum vhat_N(k) a*_{p+k} a*_{q-k} a_q a_p``."""
    basis = basis or model.sector()
    if basis.d != model.d or basis.N != model.N or not basis.fixed:
        raise ValueError("basis does not match the model's modes and particle number")
    if basis.dim > MAX_DIM:
        raise ValueError(f"sector dimension {basis.dim} exceeds the desk-scale limit {MAX_DIM}")
    p2 = TWO_PI ** 2 * (model.modes ** 2).sum(axis=1)
    H = fs.second_quantize(basis, np.diag(p2)).matrix
    terms, coeffs = _interaction_terms(model)
    if np.any(coeffs != 0):
        H = H + fs._coo(basis, terms, [True, True, False, False], coeffs)
    H = H.tocsr()
    H.sum_duplicates()
    op = fs.ModeOperator(basis, H, "H_N")
    if op.hermiticity_defect() > 1e-10:
        raise ValueError("assembled Hamiltonian is not Hermitian")
    return op


@dataclass(frozen=True, eq=False)
class GroundStateResult:
    energy: float
    state: fs.FockVector
    residual: float
    gamma1: np.ndarray


def _fix_phase(v):
    k = int(np.argmax(np.abs(v)))
    return v * (abs(v[k]) / v[k])


def ground_state(H: fs.ModeOperator, tol: float = 1e-12, maxiter: int = 20_000) -> GroundStateResult:
    """Lowest eigenpair.

    Small sectors use dense ``eigh``. Larger ones use Lanczos (ARPACK) from a
    fixed-seed Gaussian start vector: a structured start such as all-ones can
    lie in an invariant subspace that misses the ground state.
    """
    basis = H.basis
    M = H.matrix
    if abs(M.imag).max() == 0 if M.nnz else True:
        M = M.real
    dim = basis.dim
    diag = M.diagonal().real
    if (M - sp.diags(M.diagonal())).count_nonzero() == 0:
        # Krylov methods break down on a diagonal matrix with few distinct values
        k = int(np.argmin(diag))
        energy, vec = diag[k], np.eye(1, dim, k)[0]
    elif dim <= DENSE_LIMIT:
        w, v = np.linalg.eigh(M.toarray())
        energy, vec = w[0], v[:, 0]
    else:
        v0 = np.random.default_rng(START_SEED).standard_normal(dim)
        v0 /= np.linalg.norm(v0)
        try:
            w, v = spla.eigsh(M, k=1, which="SA", v0=v0, tol=tol, maxiter=maxiter)
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError("Lanczos iteration did not converge") from exc
        energy, vec = w[0], v[:, 0]
    if energy > diag.min() + RESIDUAL_TOL * max(1.0, abs(diag.min())):
        raise ConvergenceError("eigensolver returned an excited state (above the smallest diagonal entry)")
    vec = _fix_phase(vec.astype(np.complex128))
    vec /= np.linalg.norm(vec)
    residual = float(np.linalg.norm(H.matrix @ vec - energy * vec))
    if residual > RESIDUAL_TOL:
        raise ConvergenceError(f"ground-state residual {residual:.2e} above tolerance", residual)
    state = fs.FockVector(basis, vec)
    return GroundStateResult(float(energy), state, residual, reduced_density(state))


def reduced_density(psi: fs.FockVector) -> np.ndarray:
    """One-particle density matrix ``gamma_kl = <psi, a*_l a_k psi> / N`` (trace one)."""
    basis = psi.basis
    if not basis.fixed:
        raise ValueError("reduced density is defined on a fixed-N sector")
    d = basis.d
    gamma = np.zeros((d, d), dtype=np.complex128)
    x = psi.amplitudes
    for k in range(d):
        for l in range(k, d):
            val = np.vdot(x, fs.hopping(basis, l, k).matrix @ x) / basis.N
            gamma[k, l] = val
            gamma[l, k] = np.conj(val)
    return gamma


def gamma_csv(gamma) -> str:
    lines = ["k,l,re,im"]
    for k in range(gamma.shape[0]):
        for l in range(gamma.shape[1]):
            lines.append(f"{k},{l},{gamma[k, l].real:.17g},{gamma[k, l].imag:.17g}")
    return "\n".join(lines) + "\n"


def _check_modes(basis, O):
    if basis.modes is None or O.modes.shape != basis.modes.shape or np.any(O.modes != basis.modes):
        raise ValueError("observable and state must use the same plane-wave modes in the same order")


def _log_unitary(W):
    """Hermitian ``K`` with ``W = exp(-iK)`` for a unitary ``W``."""
    from scipy.linalg import schur

    T, Z = schur(W, output="complex")
    theta = np.angle(np.diag(T))
    K = -(Z * theta) @ Z.conj().T
    return 0.5 * (K + K.conj().T)


def rotate_to_eigenbasis(psi: fs.FockVector, O: SpectralObservable) -> np.ndarray:
    """Amplitudes of ``psi`` in the occupation basis of the eigenmodes of ``O``."""
    basis = psi.basis
    _check_modes(basis, O)
    K = _log_unitary(O.eigenvectors.conj().T)
    generator = fs.second_quantize(basis, K).matrix * (-1j)
    return fs.expm_apply(generator, psi.amplitudes)


@dataclass(frozen=True, eq=False)
class MeasurementLaw:
    """Exact law of the outcome multiset.

    ``atoms`` are the distinct eigenvalues of the observable; outcome
    configuration ``i`` has ``counts[i, k]`` outcomes equal to ``atoms[k]``
    and probability ``probs[i]``. When ``product_weights`` is set the law is
    multinomial and ``counts``/``probs`` are not materialized.
    """

    atoms: np.ndarray
    N: int
    counts: np.ndarray = None
    probs: np.ndarray = None
    product_weights: np.ndarray = None

    def sample_counts(self, rng, size=None):
        if self.product_weights is not None:
            return rng.multinomial(self.N, self.product_weights, size=size)
        idx = rng.choice(self.probs.size, p=self.probs, size=size)
        return self.counts[idx]

    def expand(self, counts, rng):
        """Outcome sequence for one count vector, uniformly permuted."""
        outcomes = np.repeat(self.atoms, counts)
        return rng.permutation(outcomes)


def _atom_map(O):
    atoms = O.distinct_eigenvalues()
    return atoms, np.searchsorted(atoms, O.eigenvalues)


def measurement_law(psi: fs.FockVector, O: SpectralObservable) -> MeasurementLaw:
    """Exact joint law of the outcome multiset for a normalized state on a fixed sector."""
    basis = psi.basis
    if not basis.fixed:
        raise ValueError("measurements act on a fixed-N sector")
    if abs(psi.norm - 1.0) > 1e-10:
        raise ValueError("state must be normalized")
    amp = rotate_to_eigenbasis(psi, O)
    probs = np.abs(amp) ** 2
    atoms, which = _atom_map(O)
    counts = np.zeros((basis.dim, atoms.size), dtype=np.int64)
    for j in range(basis.d):
        counts[:, which[j]] += basis.states[:, j]
    # merge occupation vectors that give the same multiset
    uniq, inverse = np.unique(counts, axis=0, return_inverse=True)
    merged = np.bincount(inverse.ravel(), weights=probs, minlength=uniq.shape[0])
    keep = merged > 0
    merged = merged[keep] / merged[keep].sum()
    return MeasurementLaw(atoms=atoms, N=basis.N, counts=uniq[keep], probs=merged)


def product_measurement_law(O: SpectralObservable, N: int) -> MeasurementLaw:
    """Law for the condensate product state: multinomial over eigenvalues."""
    atoms, which = _atom_map(O)
    w = np.abs(O.eigenvectors[O.zero_index, :]) ** 2
    weights = np.bincount(which, weights=w, minlength=atoms.size)
    return MeasurementLaw(atoms=atoms, N=int(N), product_weights=weights / weights.sum())


@dataclass(frozen=True, eq=False)
class MeasurementSample:
    outcomes: np.ndarray
    stream: tuple = ()


def sample_measurement(psi, O: SpectralObservable, rng, stream=()) -> MeasurementSample:
    """One draw of ``(Y_1, ..., Y_N)``; ``psi`` may be a state or a precomputed law."""
    law = psi if isinstance(psi, MeasurementLaw) else measurement_law(psi, O)
    counts = law.sample_counts(rng)
    return MeasurementSample(law.expand(counts, rng), tuple(stream))


def samples_csv(samples) -> str:
    lines = ["replica,particle_index,outcome"]
    for r, s in enumerate(samples):
        for i, y in enumerate(s.outcomes):
            lines.append(f"{r},{i},{y:.17g}")
    return "\n".join(lines) + "\n"


def nu_phi(O: SpectralObservable) -> DiscreteMeasure:
    """Outcome law of one measurement on the condensate ``phi``."""
    atoms, which = _atom_map(O)
    w = np.abs(O.eigenvectors[O.zero_index, :]) ** 2
    weights = np.bincount(which, weights=w, minlength=atoms.size)
    keep = weights > WEIGHT_FLOOR
    return DiscreteMeasure(atoms[keep], weights[keep] / weights[keep].sum())


# ---------------------------------------------------------------------------
# model states
# ---------------------------------------------------------------------------

def product_state(sector: fs.OccupationBasis) -> fs.FockVector:
    occ = np.zeros(sector.d, dtype=np.int64)
    occ[0] = sector.N
    return fs.basis_vector(sector, occ)


def model_state(kind: str, sector: fs.OccupationBasis, tau=None, eta=None) -> fs.FockVector:
    """``product``, ``quasifree`` (``U* e^{B(tau)} Omega``) or ``dressed`` (``U* e^{B(eta)} e^{B(tau)} Omega``)."""
    if kind == "product":
        return product_state(sector)
    ex = fs.excitation_basis(sector)
    xi = fs.vacuum(ex).amplitudes
    if kind == "quasifree":
        if tau is None:
            raise ValueError("quasifree state needs tau")
        xi = fs.expm_apply(fs.bogoliubov_generator(ex, tau).matrix, xi)
    elif kind == "dressed":
        if tau is None or eta is None:
            raise ValueError("dressed state needs eta and tau")
        xi = fs.expm_apply(fs.bogoliubov_generator(ex, tau).matrix, xi)
        xi = fs.expm_apply(fs.bogoliubov_generator(ex, eta).matrix, xi)
    else:
        raise ValueError(f"unknown model state {kind!r}")
    psi = fs.excitation_pullback(sector, fs.FockVector(ex, xi))
    return psi.normalized()


# ---------------------------------------------------------------------------
# variance of linear statistics
# ---------------------------------------------------------------------------

def _centered(O, g):
    G = functional_calculus(O, g)
    z = O.zero_index
    return G - G[z, z].real * np.eye(O.dimension)


def variance_lhs(psi: fs.FockVector, O: SpectralObservable, g) -> float:
    """``<psi, [(1/N) sum_i g(O^(i)) - <phi, g(O) phi>]^2 psi>`` via ``dGamma``."""
    basis = psi.basis
    _check_modes(basis, O)
    if abs(psi.norm - 1.0) > 1e-10:
        raise ValueError("state must be normalized")
    D = fs.second_quantize(basis, _centered(O, g)).matrix
    v = D @ psi.amplitudes
    return float(np.vdot(v, v).real) / basis.N ** 2


def fluctuation_parts(O: SpectralObservable, g):
    """``h = q g~(O) phi`` and ``H = q g~(O) q`` restricted to the excited modes."""
    z = O.zero_index
    if z != 0:
        raise ValueError("the condensate must be mode 0")
    gt = _centered(O, g)
    return gt[1:, 0].copy(), gt[1:, 1:].copy()


@dataclass(frozen=True)
class VarianceTerms:
    leading: float
    cross: float
    square: float

    @property
    def total(self):
        return self.leading + self.cross + self.square


def variance_terms(psi: fs.FockVector, O: SpectralObservable, g) -> VarianceTerms:
    """Split of the variance after the excitation map.

    ``leading = (1/N) <xi, [b*(h) + b(h)]^2 xi>``, ``cross`` the
    ``N^{-3/2}`` mixed term with ``dGamma(H)``, ``square`` the ``N^{-2}``
    term, where ``xi = U_N psi``.
    """
    sector = psi.basis
    _check_modes(sector, O)
    N = sector.N
    ex = fs.excitation_basis(sector)
    xi = fs.excitation_map(sector, psi, ex).amplitudes
    h, Hm = fluctuation_parts(O, g)
    phi_op = (fs.modified_b(ex, h).matrix + fs.modified_bstar(ex, h).matrix)
    dH = fs.second_quantize(ex, Hm).matrix
    a = phi_op @ xi
    c = dH @ xi
    leading = float(np.vdot(a, a).real) / N
    cross = float(2.0 * np.vdot(a, c).real) / N ** 1.5
    square = float(np.vdot(c, c).real) / N ** 2
    return VarianceTerms(leading, cross, square)
