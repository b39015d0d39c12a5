"""Bosonic occupation bases and ladder-operator algebra as sparse matrices.

Two kinds of basis are used:

* the fixed-N sector over ``d`` modes, where mode 0 is the condensate
  ``phi``; this is ``L^2_s`` restricted to the plane waves kept;
* the truncated space ``F^{<=N}`` over the excited modes, holding every
  occupation vector with at most ``N`` particles.

Both are ordered lexicographically in the occupation vector.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels

HERMITIAN_TOL = 1e-10


class OccupationBasis:
    """Occupation vectors of ``d`` modes with total ``== N`` or ``<= N``.

    ``modes`` optionally labels each mode by its integer momentum triple.
    """

    def __init__(self, d, N, fixed=True, modes=None):
        if d < 1 or N < 0:
            raise ValueError("need d >= 1 and N >= 0")
        self.d = int(d)
        self.N = int(N)
        self.fixed = bool(fixed)
        width = self.d if self.fixed else self.d + 1
        self._padded = kernels.enumerate_sector(width, self.N)
        self._padded.setflags(write=False)
        self._off = kernels.rank_offsets(width, self.N)
        if modes is not None:
            modes = np.asarray(modes, dtype=np.int64).reshape(-1, 3)
            if modes.shape[0] != self.d:
                raise ValueError("one momentum label per mode is required")
            modes.setflags(write=False)
        self.modes = modes

    def __repr__(self):
        kind = "==" if self.fixed else "<="
        return f"OccupationBasis(d={self.d}, N{kind}{self.N}, dim={self.dim})"

    @property
    def states(self):
        return self._padded if self.fixed else self._padded[:, :-1]

    @property
    def dim(self):
        return self._padded.shape[0]

    @property
    def slack_col(self):
        return -1 if self.fixed else self.d

    def index(self, occupation):
        """Position of one occupation vector (or rows of them)."""
        occ = np.atleast_2d(np.asarray(occupation, dtype=np.int64))
        if occ.shape[1] != self.d:
            raise ValueError(f"expected {self.d} occupation numbers")
        totals = occ.sum(axis=1)
        if np.any(occ < 0) or (np.any(totals != self.N) if self.fixed else np.any(totals > self.N)):
            raise ValueError("occupation vector is outside this basis")
        if not self.fixed:
            occ = np.hstack([occ, (self.N - totals)[:, None]])
        idx = kernels.rank_states(occ, self.N, self._off)
        return int(idx[0]) if np.ndim(occupation) == 1 else idx

    def number_of_particles(self):
        return self.states.sum(axis=1)

    def pair_partner(self):
        """Index of the mode carrying ``-p`` for every mode."""
        if self.modes is None:
            raise ValueError("basis has no momentum labels")
        lookup = {tuple(n): i for i, n in enumerate(self.modes)}
        partner = []
        for n in self.modes:
            key = tuple(-n)
            if key not in lookup:
                raise ValueError(f"mode {tuple(n)} has no partner -p in the basis")
            partner.append(lookup[key])
        return np.array(partner, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class FockVector:
    basis: OccupationBasis
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.amplitudes.shape != (self.basis.dim,):
            raise ValueError("amplitude vector does not match the basis")

    @property
    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self):
        return FockVector(self.basis, self.amplitudes / self.norm)

    def inner(self, other):
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True, eq=False)
class ModeOperator:
    """Sparse matrix acting on one occupation basis."""

    basis: OccupationBasis
    matrix: sp.csr_matrix
    label: str = ""

    def adjoint(self, label=None):
        return ModeOperator(self.basis, self.matrix.conj().T.tocsr(), label or f"({self.label})*")

    def __matmul__(self, other):
        if isinstance(other, ModeOperator):
            return ModeOperator(self.basis, (self.matrix @ other.matrix).tocsr(),
                                f"{self.label} {other.label}")
        if isinstance(other, FockVector):
            return FockVector(self.basis, self.matrix @ other.amplitudes)
        return self.matrix @ other

    def dense(self):
        return self.matrix.toarray()

    def hermiticity_defect(self):
        diff = self.matrix - self.matrix.conj().T
        return float(abs(diff).max()) if diff.nnz else 0.0


def vacuum(basis: OccupationBasis) -> FockVector:
    amp = np.zeros(basis.dim, dtype=np.complex128)
    amp[basis.index(np.zeros(basis.d, dtype=np.int64))] = 1.0
    return FockVector(basis, amp)


def basis_vector(basis: OccupationBasis, occupation) -> FockVector:
    amp = np.zeros(basis.dim, dtype=np.complex128)
    amp[basis.index(occupation)] = 1.0
    return FockVector(basis, amp)


def _coo(basis, term_modes, daggers, coeffs):
    rows, cols, vals = kernels.monomial_coo(basis._padded, basis.N, basis._off,
                                            term_modes, daggers, coeffs, basis.slack_col)
    return sp.csr_matrix((vals, (rows, cols)), shape=(basis.dim, basis.dim))


def _check_mode(basis, k):
    if not 0 <= k < basis.d:
        raise IndexError(f"mode {k} out of range for {basis.d} modes")


def annihilation(basis: OccupationBasis, k: int) -> ModeOperator:
    """``a_k`` on a truncated (``<= N``) basis."""
    _check_mode(basis, k)
    if basis.fixed:
        raise ValueError("single ladder operators leave a fixed-N sector; use fixed=False")
    return ModeOperator(basis, _coo(basis, [[k]], [False], [1.0]), f"a_{k}")


def creation(basis: OccupationBasis, k: int) -> ModeOperator:
    """``a*_k`` on a truncated basis; the image of the top sector is dropped."""
    _check_mode(basis, k)
    if basis.fixed:
        raise ValueError("single ladder operators leave a fixed-N sector; use fixed=False")
    return ModeOperator(basis, _coo(basis, [[k]], [True], [1.0]), f"a*_{k}")


def hopping(basis: OccupationBasis, k: int, l: int) -> ModeOperator:
    """``a*_k a_l``; preserves particle number, so valid on either basis kind."""
    _check_mode(basis, k)
    _check_mode(basis, l)
    return ModeOperator(basis, _coo(basis, [[k, l]], [True, False], [1.0]), f"a*_{k} a_{l}")


def second_quantize(basis: OccupationBasis, A) -> ModeOperator:
    """``dGamma(A) = sum_kl A_kl a*_k a_l`` for a Hermitian d x d matrix."""
    A = np.asarray(A, dtype=np.complex128)
    if A.shape != (basis.d, basis.d):
        raise ValueError(f"matrix must be {basis.d} x {basis.d}")
    defect = np.max(np.abs(A - A.conj().T))
    if defect > HERMITIAN_TOL:
        raise ValueError(f"dGamma needs a Hermitian matrix (defect {defect:.2e})")
    k, l = np.nonzero(A)
    if k.size == 0:
        return ModeOperator(basis, sp.csr_matrix((basis.dim, basis.dim), dtype=np.complex128), "dGamma")
    terms = np.stack([k, l], axis=1)
    return ModeOperator(basis, _coo(basis, terms, [True, False], A[k, l]), "dGamma")


def number_operator(basis: OccupationBasis) -> ModeOperator:
    n = basis.number_of_particles().astype(np.complex128)
    return ModeOperator(basis, sp.diags(n, format="csr"), "N")


def number_plus(basis: OccupationBasis) -> ModeOperator:
    """Number of excitations.

    On a truncated basis every mode is an excitation; on a fixed-N sector
    mode 0 is the condensate and is not counted.
    """
    st = basis.states
    n = st.sum(axis=1) if not basis.fixed else st[:, 1:].sum(axis=1)
    return ModeOperator(basis, sp.diags(n.astype(np.complex128), format="csr"), "N_+")


# ---------------------------------------------------------------------------
# excitation map
# ---------------------------------------------------------------------------

def excitation_basis(sector: OccupationBasis) -> OccupationBasis:
    """The truncated space ``F^{<=N}`` over the excited modes of ``sector``."""
    if not sector.fixed:
        raise ValueError("the excitation map starts from a fixed-N sector")
    if sector.d < 2:
        raise ValueError("need at least one excited mode")
    modes = None if sector.modes is None else sector.modes[1:]
    if modes is not None and tuple(sector.modes[0]) != (0, 0, 0):
        raise ValueError("mode 0 of the sector must be the condensate (zero momentum)")
    return OccupationBasis(sector.d - 1, sector.N, fixed=False, modes=modes)


def excitation_unitary(sector: OccupationBasis, target: OccupationBasis = None) -> sp.csr_matrix:
    """Matrix of ``U_N``: drop the condensate occupation of each vector."""
    target = target or excitation_basis(sector)
    rows = target.index(sector.states[:, 1:])
    cols = np.arange(sector.dim)
    data = np.ones(sector.dim, dtype=np.complex128)
    return sp.csr_matrix((data, (rows, cols)), shape=(target.dim, sector.dim))


def excitation_map(sector: OccupationBasis, psi: FockVector, target: OccupationBasis = None) -> FockVector:
    """``U_N psi`` as a vector on the truncated excitation space."""
    if psi.basis is not sector:
        if psi.basis.dim != sector.dim or psi.basis.d != sector.d or psi.basis.N != sector.N:
            raise ValueError("vector does not live on this sector")
    target = target or excitation_basis(sector)
    amp = np.zeros(target.dim, dtype=np.complex128)
    amp[target.index(sector.states[:, 1:])] = psi.amplitudes
    return FockVector(target, amp)


def excitation_pullback(sector: OccupationBasis, xi: FockVector) -> FockVector:
    """``U_N^* xi``: restore the condensate occupation ``N - N_+``."""
    U = excitation_unitary(sector, xi.basis)
    return FockVector(sector, U.conj().T @ xi.amplitudes)


# ---------------------------------------------------------------------------
# modified ladder operators and Bogoliubov generators
# ---------------------------------------------------------------------------

def _condensate_weight(basis, shift=0):
    """Diagonal ``sqrt((N - N_+ - shift) / N)`` clipped at zero."""
    n_plus = basis.number_of_particles() + shift
    w = np.sqrt(np.clip(basis.N - n_plus, 0, None) / basis.N)
    return sp.diags(w.astype(np.complex128), format="csr")


def _excited_check(basis):
    if basis.fixed:
        raise ValueError("modified operators act on the truncated excitation space")
    if basis.N < 1:
        raise ValueError("need N >= 1")


def modified_b(basis: OccupationBasis, h) -> ModeOperator:
    """``b(h) = sum_p conj(h_p) sqrt((N - N_+)/N) a_p``."""
    _excited_check(basis)
    h = np.asarray(h, dtype=np.complex128)
    if h.shape != (basis.d,):
        raise ValueError("h needs one entry per excited mode")
    k = np.nonzero(h)[0]
    if k.size == 0:
        return ModeOperator(basis, sp.csr_matrix((basis.dim, basis.dim), dtype=np.complex128), "b(h)")
    a = _coo(basis, k[:, None], [False], h[k].conj())
    return ModeOperator(basis, (_condensate_weight(basis) @ a).tocsr(), "b(h)")


def modified_bstar(basis: OccupationBasis, h) -> ModeOperator:
    """``b*(h) = sum_p h_p a*_p sqrt((N - N_+)/N)``."""
    return modified_b(basis, h).adjoint("b*(h)")


def b_mode(basis: OccupationBasis, k: int) -> ModeOperator:
    e = np.zeros(basis.d, dtype=np.complex128)
    e[k] = 1.0
    op = modified_b(basis, e)
    return ModeOperator(basis, op.matrix, f"b_{k}")


def bogoliubov_generator(basis: OccupationBasis, eta) -> ModeOperator:
    """``B(eta) = 1/2 sum_p eta_p (b*_p b*_{-p} - b_p b_{-p})`` (anti-Hermitian)."""
    _excited_check(basis)
    eta = np.asarray(eta, dtype=np.float64)
    if eta.shape != (basis.d,):
        raise ValueError("eta needs one entry per excited mode")
    partner = basis.pair_partner()
    if not np.allclose(eta, eta[partner], rtol=0, atol=1e-14):
        raise ValueError("eta must be even: eta_{-p} = eta_p")
    b = [b_mode(basis, k).matrix for k in range(basis.d)]
    total = sp.csr_matrix((basis.dim, basis.dim), dtype=np.complex128)
    for k in range(basis.d):
        if eta[k] == 0:
            continue
        pair = b[k] @ b[partner[k]]
        total = total + 0.5 * eta[k] * (pair.conj().T - pair)
    return ModeOperator(basis, total.tocsr(), "B(eta)")


def expm_scaled(A, tol=1e-16, max_terms=80):
    """Dense matrix exponential by scaling and squaring of a Taylor series.

    The series is summed until the next term falls below ``tol`` times the
    running sum (in max-norm); ``A`` is first scaled by ``2^-s`` so that its
    1-norm is at most 1/2.
    """
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=np.complex128)
    norm = np.max(np.sum(np.abs(A), axis=0)) if A.size else 0.0
    s = 0 if norm <= 0.5 else int(np.ceil(np.log2(norm / 0.5)))
    X = A / 2.0 ** s
    out = np.eye(A.shape[0], dtype=np.complex128)
    term = out.copy()
    for j in range(1, max_terms + 1):
        term = term @ X / j
        out += term
        if np.max(np.abs(term)) <= tol * np.max(np.abs(out)):
            break
    else:
        raise RuntimeError("Taylor series did not reach the requested tolerance")
    for _ in range(s):
        out = out @ out
    return out


def expm_apply(A, v, tol=1e-16, max_terms=80):
    """``exp(A) v`` by stepping the Taylor series on vectors (sparse ``A``)."""
    v = np.asarray(v, dtype=np.complex128)
    norm = abs(A).sum(axis=0).max() if sp.issparse(A) else np.max(np.sum(np.abs(A), axis=0))
    steps = max(1, int(np.ceil(norm / 0.5)))
    for _ in range(steps):
        term = v.copy()
        acc = v.copy()
        for j in range(1, max_terms + 1):
            term = (A @ term) / (steps * j)
            acc += term
            if np.max(np.abs(term)) <= tol * np.max(np.abs(acc)):
                break
        else:
            raise RuntimeError("Taylor series did not reach the requested tolerance")
        v = acc
    return v


def unitary(generator: ModeOperator) -> ModeOperator:
    """``exp(B)`` for an anti-Hermitian generator, as a dense-backed operator."""
    U = expm_scaled(generator.matrix)
    return ModeOperator(generator.basis, sp.csr_matrix(U), f"exp({generator.label})")


def operator_csv(op: ModeOperator) -> str:
    """Coordinate-list dump ``row,col,re,im``."""
    coo = op.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = ["row,col,re,im"]
    for i in order:
        v = coo.data[i]
        lines.append(f"{coo.row[i]},{coo.col[i]},{v.real:.17g},{v.imag:.17g}")
    return "\n".join(lines) + "\n"
