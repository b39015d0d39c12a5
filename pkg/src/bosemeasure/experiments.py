"""Monte Carlo harness for empirical measures of measurement outcomes.

Every replica draws from its own counter-based stream keyed by
``(seed, N, replica)``, and results are reduced in replica order, so outputs
do not depend on the number of worker threads.
"""
import io
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from . import fockspace as fs
from . import kernels
from .bogoliubov import MomentumLattice, SpectralObservable, covariance_matrix, mu_p, sigma_f, TWO_PI
from .ot1d import DiscreteMeasure
from .quantum_sim import (MeasurementLaw, TorusModel, build_hamiltonian, ground_state, measurement_law,
                          model_state, nu_phi, product_measurement_law, variance_lhs)
from .scattering import RadialPotential, solve_zero_energy

MODELS = ("exact-ground-state", "product", "quasifree", "iid-surrogate")
DEFAULT_DELTAS = (0.05, 0.1, 0.2)
MIN_CLT_REPLICAS = 100
MIN_KS_SAMPLES = 200


# ---------------------------------------------------------------------------
# function registry
# ---------------------------------------------------------------------------

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


def make_function(name: str) -> Callable:
    """Test function from its registry name.

    ``identity``; ``constant(c)``; ``indicator(t)`` for ``1{x <= t}``;
    ``pwl(x0:y0;x1:y1;...)`` for the piecewise-linear interpolant, constant
    beyond the end nodes.
    """
    name = name.strip()
    if name in ("identity", "identity-on-spectrum"):
        return lambda x: np.asarray(x, dtype=np.float64)
    m = re.fullmatch(rf"constant\(({_NUM})\)", name)
    if m:
        c = float(m.group(1))
        return lambda x: np.full(np.shape(x), c)
    m = re.fullmatch(rf"indicator\(({_NUM})\)", name)
    if m:
        t = float(m.group(1))
        return lambda x: (np.asarray(x, dtype=np.float64) <= t).astype(np.float64)
    m = re.fullmatch(r"pwl\((.+)\)", name)
    if m:
        try:
            nodes = [tuple(float(v) for v in item.split(":")) for item in m.group(1).split(";")]
        except ValueError as exc:
            raise ValueError(f"bad piecewise-linear definition {name!r}") from exc
        if any(len(n) != 2 for n in nodes) or len(nodes) < 2:
            raise ValueError(f"bad piecewise-linear definition {name!r}")
        xs, ys = map(np.array, zip(*nodes))
        if np.any(np.diff(xs) <= 0):
            raise ValueError("piecewise-linear nodes must be strictly increasing")
        return lambda x: np.interp(np.asarray(x, dtype=np.float64), xs, ys)
    raise ValueError(f"unknown function {name!r}")


# ---------------------------------------------------------------------------
# configuration and records
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Inputs of one experiment.

    ``a0`` feeds the quasifree angles ``mu_p(a0)`` and the model covariance;
    when a ``potential`` is given its scattering length is used instead.
    ``surrogate`` replaces the single-particle law of the i.i.d. model
    (default: the condensate law of the observable).
    """

    model: str
    n_grid: tuple
    replicas: int
    observable: SpectralObservable
    functions: tuple = ("identity",)
    seed: int = 0
    deltas: tuple = DEFAULT_DELTAS
    threads: int = 1
    a0: float = 0.0
    potential: Optional[RadialPotential] = None
    surrogate: Optional[DiscreteMeasure] = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        grid = tuple(int(n) for n in self.n_grid)
        if not grid or any(n < 1 for n in grid):
            raise ValueError("N grid must hold positive integers")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("N grid must be strictly increasing")
        object.__setattr__(self, "n_grid", grid)
        if self.replicas < 1:
            raise ValueError("replica count must be positive")
        if self.threads < 1:
            raise ValueError("thread count must be positive")
        if self.a0 < 0:
            raise ValueError("scattering length must be nonnegative")
        if any(d <= 0 for d in self.deltas):
            raise ValueError("deltas must be positive")
        object.__setattr__(self, "deltas", tuple(float(d) for d in self.deltas))
        object.__setattr__(self, "functions", tuple(self.functions))
        for name in self.functions:
            make_function(name)
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    def callables(self):
        return [make_function(n) for n in self.functions]

    def scattering_length(self) -> float:
        if self.potential is None:
            return float(self.a0)
        if self.potential.is_zero:
            return 0.0
        return float(solve_zero_energy(self.potential, 4.0 * self.potential.support_radius).a0)

    def snapshot(self) -> dict:
        return {
            "model": self.model, "n_grid": list(self.n_grid), "replicas": self.replicas,
            "functions": list(self.functions), "seed": int(self.seed), "deltas": list(self.deltas),
            "a0": self.scattering_length(), "d": self.observable.dimension,
        }


@dataclass(eq=False)
class RunRecord:
    """Raw per-replica rows plus a summary derived from them."""

    config: dict
    n_values: tuple
    w1: dict = field(default_factory=dict)
    statistics: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def replica_rng(seed: int, N: int, replica: int) -> np.random.Generator:
    """Counter-based stream for one replica."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(N), int(replica)))
    return np.random.Generator(np.random.Philox(ss))


def draw_counts(law: MeasurementLaw, seed: int, N: int, replicas: int, threads: int = 1) -> np.ndarray:
    """Outcome counts per atom for every replica, in replica order."""
    def one(r):
        return law.sample_counts(replica_rng(seed, N, r))

    if threads == 1:
        rows = [one(r) for r in range(replicas)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, range(replicas)))
    return np.asarray(rows, dtype=np.int64).reshape(replicas, law.atoms.size)


# ---------------------------------------------------------------------------
# states and laws
# ---------------------------------------------------------------------------

def reference_law(config: ExperimentConfig) -> DiscreteMeasure:
    if config.model == "iid-surrogate" and config.surrogate is not None:
        return config.surrogate
    return nu_phi(config.observable)


def model_vector(config: ExperimentConfig, N: int, product_if_iid: bool = False) -> fs.FockVector:
    """The N-particle state of ``config.model`` (the i.i.d. surrogate has none)."""
    O = config.observable
    sector = fs.OccupationBasis(O.dimension, N, fixed=True, modes=O.modes)
    if config.model == "product" or (product_if_iid and config.model == "iid-surrogate"):
        return model_state("product", sector)
    if config.model == "quasifree":
        tau = mu_p(config.scattering_length(), TWO_PI * O.modes[1:])
        return model_state("quasifree", sector, tau=tau)
    if config.model == "exact-ground-state":
        if config.potential is None:
            raise ValueError("exact ground state needs a potential")
        H = build_hamiltonian(TorusModel(O.modes, N, config.potential), sector)
        return ground_state(H).state
    raise ValueError(f"model {config.model!r} has no state vector")


def model_law(config: ExperimentConfig, N: int) -> MeasurementLaw:
    if config.model == "iid-surrogate":
        nu = reference_law(config)
        return MeasurementLaw(atoms=np.asarray(nu.atoms), N=N, product_weights=np.asarray(nu.weights))
    if config.model == "product":
        return product_measurement_law(config.observable, N)
    return measurement_law(model_vector(config, N), config.observable)


def _reference_on_grid(nu: DiscreteMeasure, grid):
    """Weights of ``nu`` on ``grid`` (every atom of ``nu`` must sit on the grid)."""
    idx = np.searchsorted(grid, nu.atoms)
    idx = np.clip(idx, 0, grid.size - 1)
    if np.any(np.abs(grid[idx] - nu.atoms) > 1e-12):
        raise ValueError("reference atoms are not outcomes of the observable")
    w = np.zeros(grid.size)
    np.add.at(w, idx, nu.weights)
    return w


# ---------------------------------------------------------------------------
# law of large numbers
# ---------------------------------------------------------------------------

def summarize_lln(w1: dict, deltas) -> list:
    """Rows ``(N, replicas, delta, p_exceed, mean_w1, stderr_w1, sqrtN_mean_w1)``."""
    rows = []
    for N in sorted(w1):
        v = np.asarray(w1[N], dtype=np.float64)
        R = v.size
        mean = float(np.mean(v))
        stderr = float(np.std(v, ddof=1) / np.sqrt(R)) if R > 1 else float("nan")
        for d in deltas:
            rows.append((int(N), R, float(d), float(np.mean(v > d)), mean, stderr, float(np.sqrt(N) * mean)))
    return rows


def lln_run(config: ExperimentConfig) -> RunRecord:
    """W1 between the empirical and the condensate measure for every replica and N."""
    nu = reference_law(config)
    record = RunRecord(config.snapshot(), config.n_grid)
    for N in config.n_grid:
        law = model_law(config, N)
        ref_cdf = np.cumsum(_reference_on_grid(nu, law.atoms))
        counts = draw_counts(law, config.seed, N, config.replicas, config.threads)
        try:
            record.w1[N] = kernels.w1_counts_batch(counts, N, law.atoms, ref_cdf)
        except Exception as exc:  # pragma: no cover - numeric kernels do not raise on valid input
            raise RuntimeError(f"W1 evaluation failed at N={N}") from exc
    record.summary["lln"] = summarize_lln(record.w1, config.deltas)
    return record


def lln_csv(record: RunRecord) -> str:
    buf = io.StringIO()
    buf.write("N,replicas,delta,p_exceed,mean_w1,stderr_w1,sqrtN_mean_w1\n")
    for N, R, d, p, m, s, q in record.summary["lln"]:
        buf.write(f"{N},{R},{d:.17g},{p:.17g},{m:.17g},{s:.17g},{q:.17g}\n")
    return buf.getvalue()


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    nonincreasing: bool
    top_half_variation: float


def scaling_fit(record_or_means, level: float = 0.95) -> ScalingFit:
    """OLS slope of ``log E[W1]`` against ``log N``.

    Accepts a :class:`RunRecord` from :func:`lln_run` or a mapping
    ``N -> (mean, stderr)``. ``nonincreasing`` reports whether
    ``sqrt(N) E[W1]`` never rises by more than two combined standard errors
    between consecutive grid points; ``top_half_variation`` is
    ``(max - min) / min`` of ``sqrt(N) E[W1]`` over the upper half of the grid.
    """
    if isinstance(record_or_means, RunRecord):
        table = {}
        for N, _, _, _, m, s, _ in record_or_means.summary["lln"]:
            table[N] = (m, s)
    else:
        table = {int(k): tuple(v) if np.ndim(v) else (float(v), 0.0) for k, v in record_or_means.items()}
    Ns = np.array(sorted(table), dtype=np.float64)
    if Ns.size < 4:
        raise ValueError("need at least four N values for a slope fit")
    means = np.array([table[int(n)][0] for n in Ns])
    errs = np.array([table[int(n)][1] for n in Ns])
    if np.any(means <= 0):
        raise ValueError("mean W1 must be positive for a log-log fit")
    x, y = np.log(Ns), np.log(means)
    fit = stats.linregress(x, y)
    tq = stats.t.ppf(0.5 + level / 2, Ns.size - 2)
    scaled = np.sqrt(Ns) * means
    scaled_err = np.sqrt(Ns) * np.nan_to_num(errs)
    steps = np.diff(scaled) <= 2.0 * np.hypot(scaled_err[1:], scaled_err[:-1])
    top = scaled[Ns.size // 2:]
    return ScalingFit(float(fit.slope), float(fit.intercept), float(fit.slope - tq * fit.stderr),
                      float(fit.slope + tq * fit.stderr), bool(np.all(steps)),
                      float((top.max() - top.min()) / top.min()))


# ---------------------------------------------------------------------------
# central limit theorem
# ---------------------------------------------------------------------------

def _lattice_for(O: SpectralObservable) -> MomentumLattice:
    norms = TWO_PI * np.sqrt((O.modes ** 2).sum(axis=1))
    return MomentumLattice(float(norms.max()))


def model_covariance(config: ExperimentConfig) -> np.ndarray:
    """Limiting covariance of the linear statistics for ``config.model``."""
    fns = config.callables()
    if config.model == "iid-surrogate":
        nu = reference_law(config)
        vals = np.array([f(nu.atoms) for f in fns], dtype=np.float64).reshape(len(fns), -1)
        centered = vals - vals @ nu.weights[:, None]
        return (centered * nu.weights) @ centered.T
    O = config.observable
    if O.dimension < 2:
        raise ValueError("observable needs excited modes for a covariance")
    lattice = _lattice_for(O)
    a0 = 0.0 if config.model == "product" else config.scattering_length()
    return covariance_matrix([sigma_f(O, f, a0, lattice) for f in fns])


def linear_statistics(counts, N, grid, ref_weights, fns) -> np.ndarray:
    """``sqrt(N) (<nu_N, f_j> - <nu_ref, f_j>)`` for each replica row and function."""
    vals = np.array([f(grid) for f in fns], dtype=np.float64).reshape(len(fns), -1)
    emp = counts @ vals.T / N
    ref = vals @ ref_weights
    return np.sqrt(N) * (emp - ref)


def summarize_clt(statistics: np.ndarray, sigma_model: np.ndarray) -> list:
    """Rows ``(j, k, sigma_model, sigma_sample, stderr)`` for the sample covariance."""
    x = np.asarray(statistics, dtype=np.float64)
    R, m = x.shape
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (R - 1)
    rows = []
    for j in range(m):
        for k in range(m):
            z = centered[:, j] * centered[:, k]
            rows.append((j, k, float(sigma_model[j, k]), float(cov[j, k]), float(np.std(z, ddof=1) / np.sqrt(R))))
    return rows


def clt_run(config: ExperimentConfig) -> RunRecord:
    """Samples of the centered, sqrt(N)-scaled linear statistics."""
    if config.replicas < MIN_CLT_REPLICAS:
        raise ValueError(f"CLT runs need at least {MIN_CLT_REPLICAS} replicas")
    sigma_model = model_covariance(config)
    nu = reference_law(config)
    fns = config.callables()
    record = RunRecord(config.snapshot(), config.n_grid)
    for N in config.n_grid:
        law = model_law(config, N)
        ref_w = _reference_on_grid(nu, law.atoms)
        counts = draw_counts(law, config.seed, N, config.replicas, config.threads)
        record.statistics[N] = linear_statistics(counts, N, law.atoms, ref_w, fns)
    top = record.statistics[config.n_grid[-1]]
    record.summary["sigma_model"] = sigma_model
    record.summary["clt"] = summarize_clt(top, sigma_model)
    record.summary["mean"] = top.mean(axis=0)
    record.summary["second_moment"] = (top ** 2).mean(axis=0)
    return record


def clt_samples_csv(record: RunRecord) -> str:
    buf = io.StringIO()
    buf.write("N,replica,j,value\n")
    for N in record.n_values:
        x = record.statistics[N]
        for r in range(x.shape[0]):
            for j in range(x.shape[1]):
                buf.write(f"{N},{r},{j},{x[r, j]:.17g}\n")
    return buf.getvalue()


def clt_summary_csv(record: RunRecord) -> str:
    buf = io.StringIO()
    buf.write("j,k,sigma_model,sigma_sample,stderr\n")
    for j, k, a, b, s in record.summary["clt"]:
        buf.write(f"{j},{k},{a:.17g},{b:.17g},{s:.17g}\n")
    return buf.getvalue()


@dataclass(frozen=True)
class NormalityResult:
    statistic: float
    pvalue: float


def normality_test(samples, variance: float) -> NormalityResult:
    """Kolmogorov-Smirnov test against ``N(0, variance)`` with the exact null law."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < MIN_KS_SAMPLES:
        raise ValueError(f"normality test needs at least {MIN_KS_SAMPLES} samples, got {x.size}")
    if not variance > 0:
        raise ValueError("model variance must be positive")
    res = stats.kstest(x, "norm", args=(0.0, np.sqrt(variance)), method="exact")
    return NormalityResult(float(res.statistic), float(res.pvalue))


# ---------------------------------------------------------------------------
# variance comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VarianceReport:
    rows: tuple
    decay_exponent: Optional[float]
    magnitude_decreasing: bool


def variance_comparison(config: ExperimentConfig, g: Callable) -> VarianceReport:
    """Exact ``N * variance`` of the g-statistic against ``||sigma_g||^2`` on the N grid."""
    O = config.observable
    lattice = _lattice_for(O)
    a0 = config.scattering_length()
    sigma_sq = float(np.linalg.norm(sigma_f(O, g, a0, lattice)) ** 2)
    rows = []
    for N in config.n_grid:
        # the i.i.d. surrogate shares its one-body law with the product state
        psi = model_vector(config, N, product_if_iid=True)
        lhs = N * variance_lhs(psi, O, g)
        rows.append((int(N), float(lhs), sigma_sq, float(lhs - sigma_sq)))
    gaps = np.abs([r[3] for r in rows])
    exponent = None
    if len(rows) >= 2 and np.all(gaps > 1e-14):
        exponent = float(stats.linregress(np.log([r[0] for r in rows]), np.log(gaps)).slope)
    decreasing = bool(np.all(np.diff(gaps) < 0)) if len(rows) >= 2 else False
    return VarianceReport(tuple(rows), exponent, decreasing)


def variance_csv(report: VarianceReport) -> str:
    buf = io.StringIO()
    buf.write("N,lhs_times_N,sigma_norm_sq,gap\n")
    for N, lhs, s2, gap in report.rows:
        buf.write(f"{N},{lhs:.17g},{s2:.17g},{gap:.17g}\n")
    return buf.getvalue()
