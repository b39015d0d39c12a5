"""Zero-energy scattering and the finite-ball Neumann problem for radial V.

With ``u(r) = r f(r)`` the three-dimensional equation ``[-Laplace + V/2] f =
lam f`` becomes ``u'' = (V/2 - lam) u`` with ``u(0) = 0``. The interior
``[0, R]`` (R = support radius) is integrated with fixed-step RK4; outside
the support the solution is known in closed form.
"""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq

from . import kernels

RESIDUAL_TOL = 1e-8
# first positive root of tan(x) = x: the lowest nonzero radial Neumann mode
_FREE_NEUMANN_ROOT = 4.493409457909064


class ScatteringError(RuntimeError):
    """Integration or root finding failed; ``defect`` carries the size of the miss."""

    def __init__(self, message, defect=float("nan")):
        super().__init__(message)
        self.defect = defect


@dataclass(frozen=True, eq=False)
class RadialPotential:
    """Nonnegative, spherically symmetric, compactly supported potential."""

    support_radius: float
    profile: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    kind: str = "soft-sphere"
    params: tuple = ()

    def __post_init__(self):
        if not self.support_radius > 0:
            raise ValueError("support radius must be positive")
        if self.kind not in ("soft-sphere", "tabulated"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        probe = self(np.linspace(0.0, self.support_radius, 257))
        if np.any(probe < 0) or not np.all(np.isfinite(probe)):
            raise ValueError("potential profile must be finite and nonnegative")

    def __eq__(self, other):
        if not isinstance(other, RadialPotential):
            return NotImplemented
        if self.kind == "tabulated" or other.kind == "tabulated":
            return self is other
        return (self.kind, self.support_radius, self.params) == \
            (other.kind, other.support_radius, other.params)

    def __hash__(self):
        return hash((self.kind, self.support_radius, self.params))

    def __call__(self, r):
        r = np.asarray(r, dtype=np.float64)
        inside = r <= self.support_radius
        out = np.zeros_like(r)
        out[inside] = self.profile(r[inside])
        return out

    @property
    def is_zero(self):
        return self.kind == "soft-sphere" and self.params[0] == 0.0

    def fourier(self, k):
        """Radial transform ``int V(x) exp(ikx) dx`` at wave numbers ``|k|``."""
        k = np.abs(np.asarray(k, dtype=np.float64))
        radius = self.support_radius
        if self.kind == "soft-sphere":
            v0 = self.params[0]
            kr = k * radius
            out = np.empty_like(k)
            small = kr < 1e-3
            out[small] = 4.0 * np.pi * v0 * radius ** 3 * (1.0 / 3.0 - kr[small] ** 2 / 30.0)
            ks = k[~small]
            out[~small] = 4.0 * np.pi * v0 * (np.sin(ks * radius) - ks * radius * np.cos(ks * radius)) / ks ** 3
            return out
        r = np.linspace(0.0, radius, 4097)
        v = self(r)
        return np.array([4.0 * np.pi * simpson(v * r ** 2 * np.sinc(kk * r / np.pi), x=r)
                         for kk in np.atleast_1d(k)]).reshape(k.shape)


def soft_sphere(v0, radius):
    """``V(r) = v0`` for ``r <= radius`` and zero beyond."""
    if v0 < 0:
        raise ValueError("soft-sphere height must be nonnegative")
    return RadialPotential(float(radius), lambda r, v0=float(v0): np.full_like(r, v0),
                           "soft-sphere", (float(v0),))


def zero_potential(radius=1.0):
    return soft_sphere(0.0, radius)


def tabulated(r, v):
    """Piecewise-linear potential through samples ``(r[i], v[i])``; zero past ``r[-1]``."""
    r = np.asarray(r, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if r.ndim != 1 or r.shape != v.shape or r.size < 2 or np.any(np.diff(r) <= 0):
        raise ValueError("tabulated potential needs increasing radii and matching values")
    return RadialPotential(float(r[-1]), lambda x, r=r, v=v: np.interp(x, r, v),
                           "tabulated", ())


@dataclass(frozen=True, eq=False)
class ScatteringSolution:
    r: np.ndarray
    f_values: np.ndarray
    a0: float
    residual: float
    potential: RadialPotential
    inner_nodes: int

    def to_csv(self):
        lines = ["r,f,V"]
        v = self.potential(self.r)
        lines += [f"{a:.17g},{b:.17g},{c:.17g}" for a, b, c in zip(self.r, self.f_values, v)]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class NeumannSolution:
    rho: float
    r: np.ndarray
    f_ell: np.ndarray
    lambda_ell: float
    boundary_derivative: float
    potential: RadialPotential
    inner_nodes: int

    @property
    def w_ell(self):
        return 1.0 - self.f_ell

    def w_hat(self, k):
        """``int_{|x| <= rho} w(x) exp(ikx) dx`` for wave numbers ``|k|``."""
        k = np.atleast_1d(np.abs(np.asarray(k, dtype=np.float64)))
        return _radial_transform(self.r, self.w_ell, k, self.inner_nodes - 1)


def _radial_transform(r, values, k, cut):
    """``4 pi int values(r) r^2 sinc(k r) dr``; Simpson on ``r[:cut+1]`` and ``r[cut:]``."""
    kernel = r[None, :] ** 2 * np.sinc(k[:, None] * r[None, :] / np.pi)
    integrand = values[None, :] * kernel
    out = simpson(integrand[:, :cut + 1], x=r[:cut + 1], axis=1)
    if cut < r.size - 1:
        out = out + simpson(integrand[:, cut:], x=r[cut:], axis=1)
    return 4.0 * np.pi * out


def _inner_grid(radius, n):
    r = np.linspace(0.0, radius, n + 1)
    mid = 0.5 * (r[:-1] + r[1:])
    return r, mid


def _integrate_inner(V, n, lam=0.0):
    r, mid = _inner_grid(V.support_radius, n)
    u, du = kernels.rk4_radial(r, V(r), V(mid), lam)
    return r, u, du


def solve_zero_energy(V: RadialPotential, r_max: float, grid_size: int = 2048) -> ScatteringSolution:
    """Scattering solution ``f`` (``f -> 1`` at infinity) and scattering length.

    ``grid_size`` intervals resolve ``[0, R]``; the same count covers the
    affine tail ``[R, r_max]``. The residual is the Richardson estimate of
    the interior RK4 error, relative to ``max |u|``.
    """
    radius = V.support_radius
    if r_max < 4.0 * radius:
        raise ValueError("r_max must be at least four support radii")
    if grid_size < 64:
        raise ValueError("grid_size must be at least 64")

    r_in, u, du = _integrate_inner(V, 2 * grid_size)
    _, u_coarse, _ = _integrate_inner(V, grid_size)
    # error of the fine solution on shared nodes (RK4: ratio 16)
    residual = float(np.max(np.abs(u[::2] - u_coarse)) / 15.0 / np.max(np.abs(u)))
    if not np.isfinite(residual) or residual > RESIDUAL_TOL:
        raise ScatteringError(f"radial integration did not converge (defect {residual:.3e})",
                              residual)

    slope = du[-1]
    a0 = float(radius - u[-1] / slope)
    r_in = r_in[::2]
    f_in = np.empty_like(r_in)
    f_in[0] = 1.0 / slope
    f_in[1:] = u[::2][1:] / (slope * r_in[1:])
    r_out = np.linspace(radius, r_max, grid_size + 1)[1:]
    f_out = 1.0 - a0 / r_out
    return ScatteringSolution(
        r=np.concatenate([r_in, r_out]),
        f_values=np.concatenate([f_in, f_out]),
        a0=a0,
        residual=residual,
        potential=V,
        inner_nodes=r_in.size,
    )


def scattering_length_integral(sol: ScatteringSolution, V: RadialPotential) -> float:
    """``(1/8pi) int V f dx`` by Simpson quadrature on the solution's interior grid."""
    if sol.potential != V:
        raise ValueError("solution was computed for a different potential")
    r = sol.r[:sol.inner_nodes]
    if r[-1] != V.support_radius:
        raise ValueError("solution grid does not end its interior at the support radius")
    integrand = V(r) * sol.f_values[:sol.inner_nodes] * r ** 2
    return float(0.5 * simpson(integrand, x=r))


def solve_neumann(V: RadialPotential, N: int, ell: float = 0.25, grid_size: int = 2048) -> NeumannSolution:
    """Lowest Neumann eigenpair of ``-Laplace + V/2`` on the ball of radius ``N * ell``."""
    if not 0.0 < ell < 0.5:
        raise ValueError("ell must lie in (0, 1/2)")
    rho = float(N * ell)
    radius = V.support_radius
    if rho <= radius:
        raise ValueError("ball radius N*ell must exceed the support radius")

    def outer(lam, u_r, du_r, r):
        # u'' = -lam u outside the support
        if lam == 0.0:
            return u_r + du_r * (r - radius), np.full_like(r, du_r)
        k = np.sqrt(lam)
        s, c = np.sin(k * (r - radius)), np.cos(k * (r - radius))
        return u_r * c + du_r / k * s, -u_r * k * s + du_r * c

    def mismatch(lam):
        _, u, du = _integrate_inner(V, grid_size, lam)
        ub, dub = outer(lam, u[-1], du[-1], np.array([rho]))
        return float(rho * dub[0] - ub[0]) / max(abs(ub[0]), 1e-300)

    lam_hi = (_FREE_NEUMANN_ROOT / rho) ** 2
    if V.is_zero:
        lam = 0.0
    else:
        grid = np.linspace(0.0, lam_hi, 401)
        values = np.array([mismatch(x) for x in grid])
        change = np.flatnonzero(np.sign(values[:-1]) * np.sign(values[1:]) <= 0)
        if change.size == 0:
            raise ScatteringError("no Neumann eigenvalue bracketed", float(np.min(np.abs(values))))
        i = int(change[0])
        if values[i] == 0.0:
            lam = float(grid[i])
        else:
            lam = brentq(mismatch, grid[i], grid[i + 1], xtol=1e-300, rtol=1e-15, maxiter=500)

    r_in, u, du = _integrate_inner(V, grid_size, lam)
    r_out = np.linspace(radius, rho, grid_size + 1)[1:]
    u_out, du_out = outer(lam, u[-1], du[-1], r_out)
    r = np.concatenate([r_in, r_out])
    u_all = np.concatenate([u, u_out])
    norm = u_all[-1] / rho
    f = np.empty_like(r)
    f[0] = du[0] / norm
    f[1:] = u_all[1:] / (r[1:] * norm)
    du_rho = du_out[-1]
    deriv = float((du_rho * rho - u_all[-1]) / rho ** 2 / norm)
    if abs(deriv) > 1e-8:
        raise ScatteringError(f"Neumann condition missed by {deriv:.3e}", abs(deriv))
    return NeumannSolution(rho=rho, r=r, f_ell=f, lambda_ell=float(lam),
                           boundary_derivative=deriv, potential=V,
                           inner_nodes=r_in.size)


def eta_coefficients(neu: NeumannSolution, lattice, N: int, convention: str = "as-written"):
    """Pair-correlation coefficients ``eta_p`` on the lattice points.

    ``"as-written"`` evaluates ``-(1/N^2) w_hat(p/N)`` with the transform of
    the unscaled ``w = 1 - f_ell`` on the ball of radius ``N*ell``.
    ``"rescaled"`` evaluates ``-N`` times the transform of the scaled profile
    ``x -> w(N x)`` on the ball of radius ``ell`` at momentum ``p``, on its own
    scaled radial grid. Returns an array aligned with ``lattice.points``.
    """
    p = np.asarray(lattice.norms, dtype=np.float64)
    if convention == "as-written":
        return -neu.w_hat(p / N) / N ** 2
    if convention == "rescaled":
        s = neu.r / N
        return -N * _radial_transform(s, neu.w_ell, p, neu.inner_nodes - 1)
    raise ValueError(f"unknown convention {convention!r}")


def fhat_coefficients(neu: NeumannSolution, lattice, N: int):
    """Torus Fourier coefficients of ``f_{N,ell}(x) = f_ell(N x)``.

    Returns ``(value at 0, values on lattice.points)``.
    """
    p = np.asarray(lattice.norms, dtype=np.float64)
    zero = 1.0 - float(neu.w_hat(0.0)[0]) / N ** 3
    return zero, -neu.w_hat(p / N) / N ** 3
