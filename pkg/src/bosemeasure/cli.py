"""Command-line front end.

Plots are drawn from the CSV files just written, never from in-memory state.

Usage::

    bosemeasure <scattering|covariance|lln|clt|variance> --config run.ini \
        [--out-dir DIR] [--seed U64] [--threads K]

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 non-convergence.
"""
import argparse
import configparser
import re
import sys
from pathlib import Path

import numpy as np

from . import bogoliubov as bg
from . import experiments as ex
from . import scattering as sc
from .quantum_sim import ConvergenceError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CONVERGENCE = 0, 2, 3, 4

SCHEMA = {
    "potential": {"kind", "v0", "radius", "r_max", "grid_size"},
    "lattice": {"cutoff"},
    "model": {"n_particles", "modes", "state_kind", "a0"},
    "observable": {"kind", "axis", "amplitude", "harmonic", "path"},
    "experiment": {"n_grid", "replicas", "deltas", "functions", "seed", "variance_function"},
    "output": {"directory", "plots"},
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def load_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        extra = set(cp[section]) - SCHEMA[section]
        if extra:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(extra))}")
    return cp


def _section(cp, name):
    if not cp.has_section(name):
        raise ConfigError(f"missing section [{name}]")
    return cp[name]


def _float(sec, key, default=None, positive=False, nonnegative=False):
    if key not in sec:
        if default is None:
            raise ConfigError(f"missing key {key!r} in [{sec.name}]")
        return default
    try:
        value = _parse_number(sec[key])
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {key} is not a number: {sec[key]!r}") from exc
    if positive and not value > 0:
        raise ConfigError(f"[{sec.name}] {key} must be positive")
    if nonnegative and not value >= 0:
        raise ConfigError(f"[{sec.name}] {key} must be nonnegative")
    return value


def _int(sec, key, default=None, positive=False):
    value = _float(sec, key, default, positive=positive)
    if value != int(value):
        raise ConfigError(f"[{sec.name}] {key} must be an integer")
    return int(value)


def _parse_number(text):
    """Float, optionally with a trailing ``pi`` factor (``4pi``, ``2*pi``)."""
    text = text.strip().lower().replace(" ", "")
    m = re.fullmatch(r"(.*?)\*?pi", text)
    if m:
        return (float(m.group(1)) if m.group(1) else 1.0) * np.pi
    return float(text)


def _list(sec, key, cast, default):
    if key not in sec:
        return default
    items = sec[key].replace(",", " ").split()
    try:
        return tuple(cast(v) for v in items)
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {key} has a bad entry: {sec[key]!r}") from exc


def _seed(sec):
    try:
        seed = int(sec.get("seed", "0").strip())
    except ValueError as exc:
        raise ConfigError(f"[experiment] seed must be an integer: {sec['seed']!r}") from exc
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("[experiment] seed must fit in an unsigned 64-bit integer")
    return seed


def build_potential(cp) -> sc.RadialPotential:
    sec = _section(cp, "potential")
    kind = sec.get("kind", "soft-sphere").strip()
    if kind == "zero":
        return sc.zero_potential()
    if kind == "soft-sphere":
        v0, radius = _float(sec, "v0", nonnegative=True), _float(sec, "radius", positive=True)
        try:
            return sc.soft_sphere(v0, radius)
        except ValueError as exc:
            raise ConfigError(f"[potential] {exc}") from exc
    raise ConfigError(f"[potential] kind must be soft-sphere or zero, got {kind!r}")


def build_modes(cp):
    cutoff = _float(_section(cp, "lattice"), "cutoff", positive=True)
    if cutoff < bg.TWO_PI * (1 - 1e-12):
        raise ConfigError("[lattice] cutoff must be at least 2pi to contain excited modes")
    if cp.has_section("model") and cp["model"].get("modes", "lattice").strip() != "lattice":
        raise ConfigError("[model] modes supports only 'lattice'")
    return bg.plane_wave_modes(cutoff)


def _read_matrix_csv(path, d):
    import csv

    m = np.zeros((d, d), dtype=np.complex128)
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["k", "l", "re", "im"]:
                raise ConfigError(f"matrix file header must be k,l,re,im, got {reader.fieldnames}")
            for row in reader:
                m[int(row["k"]), int(row["l"])] = float(row["re"]) + 1j * float(row["im"])
    except (OSError, IndexError, ValueError) as exc:
        raise ConfigError(f"cannot read observable matrix {path}: {exc}") from exc
    return m


def build_observable(cp, modes) -> bg.SpectralObservable:
    sec = _section(cp, "observable")
    kind = sec.get("kind", "multiplication-cosine").strip()
    if kind == "multiplication-cosine":
        axis = _int(sec, "axis", 0)
        harmonic = _int(sec, "harmonic", 1, positive=True)
        try:
            return bg.multiplication_cosine(modes, axis=axis, amplitude=_float(sec, "amplitude", 1.0),
                                            harmonic=harmonic)
        except ValueError as exc:
            raise ConfigError(f"[observable] {exc}") from exc
    if kind == "custom-matrix-file":
        if "path" not in sec:
            raise ConfigError("[observable] custom-matrix-file needs path")
        matrix = _read_matrix_csv(sec["path"], len(modes))
        try:
            return bg.SpectralObservable(modes, matrix)
        except ValueError as exc:
            raise ConfigError(f"[observable] {exc}") from exc
    raise ConfigError(f"[observable] unknown kind {kind!r}")


def build_experiment(cp, args) -> ex.ExperimentConfig:
    modes = build_modes(cp)
    O = build_observable(cp, modes)
    model = _section(cp, "model")
    kind = model.get("state_kind", "product").strip()
    exp = _section(cp, "experiment")
    n_default = (_int(model, "n_particles", positive=True),) if "n_particles" in model else None
    n_grid = _list(exp, "n_grid", int, n_default)
    if n_grid is None:
        raise ConfigError("[experiment] n_grid (or [model] n_particles) is required")
    seed = args.seed if args.seed is not None else _seed(exp)
    potential = build_potential(cp) if cp.has_section("potential") else None
    if kind == "exact-ground-state" and potential is None:
        raise ConfigError("missing section [potential] for the exact ground state")
    try:
        return ex.ExperimentConfig(
            model=kind, n_grid=n_grid, replicas=_int(exp, "replicas", 100, positive=True), observable=O,
            functions=_list(exp, "functions", str, ("identity",)), seed=seed,
            deltas=_list(exp, "deltas", float, ex.DEFAULT_DELTAS), threads=args.threads or 1,
            a0=_float(model, "a0", 0.0, nonnegative=True), potential=potential)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def output_dir(cp, args) -> Path:
    if args.out_dir:
        out = Path(args.out_dir)
    elif cp.has_section("output") and "directory" in cp["output"]:
        out = Path(cp["output"]["directory"])
    else:
        out = Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def plots_enabled(cp) -> bool:
    if not cp.has_section("output"):
        return False
    try:
        return cp["output"].getboolean("plots", fallback=False)
    except ValueError as exc:
        raise ConfigError(f"[output] plots must be a boolean: {exc}") from exc


def _write(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _table(path: Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_scattering(cp, args):
    V = build_potential(cp)
    sec = cp["potential"]
    r_max = _float(sec, "r_max", 4.0 * max(V.support_radius, 1.0), positive=True)
    sol = sc.solve_zero_energy(V, r_max, grid_size=_int(sec, "grid_size", 2048, positive=True))
    integral = sc.scattering_length_integral(sol, V)
    out = output_dir(cp, args)
    _write(out / "scattering.csv", sol.to_csv())
    _write(out / "a0.txt", f"a0_slope {sol.a0:.17g}\na0_integral {integral:.17g}\n"
                           f"gap {abs(sol.a0 - integral):.17g}\n")
    if plots_enabled(cp):
        data = _table(out / "scattering.csv")
        plt = _pyplot()
        fig, ax = plt.subplots()
        ax.plot(data[:, 0], data[:, 1])
        ax.set_xlabel("r")
        ax.set_ylabel("f(r)")
        fig.savefig(out / "scattering.png", dpi=100)
        plt.close(fig)


def cmd_covariance(cp, args):
    modes = build_modes(cp)
    O = build_observable(cp, modes)
    lattice = bg.MomentumLattice(_float(cp["lattice"], "cutoff", positive=True))
    if cp.has_section("potential"):
        V = build_potential(cp)
        a0 = 0.0 if V.is_zero else sc.solve_zero_energy(V, 4.0 * V.support_radius).a0
    else:
        a0 = _float(_section(cp, "model"), "a0", 0.0, nonnegative=True)
    names = _list(cp["experiment"], "functions", str, ("identity",)) if cp.has_section("experiment") \
        else ("identity",)
    try:
        fns = [ex.make_function(n) for n in names]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    spec = bg.covariance_spec(O, fns, a0, lattice)
    out = output_dir(cp, args)
    for j in range(len(fns)):
        _write(out / f"sigma_{j}.csv", bg.sigma_csv(spec, j))
    _write(out / "covariance.csv", bg.covariance_csv(spec.Sigma))
    lam_min = float(np.linalg.eigvalsh(spec.gram).min())
    _write(out / "gram_report.txt", f"a0 {a0:.17g}\nmin_eigenvalue {lam_min:.17g}\n"
                                    f"psd {lam_min >= -1e-12}\n")
    if plots_enabled(cp):
        pts = _table(out / "sigma_0.csv")[:, :3]
        report = dict(line.split() for line in (out / "gram_report.txt").read_text().splitlines())
        plt = _pyplot()
        fig, ax = plt.subplots()
        ax.plot(np.linalg.norm(pts, axis=1), bg.mu_p(float(report["a0"]), pts), "o")
        ax.set_xlabel("|p|")
        ax.set_ylabel("mu_p")
        fig.savefig(out / "mu_p.png", dpi=100)
        plt.close(fig)


def cmd_lln(cp, args):
    cfg = build_experiment(cp, args)
    rec = ex.lln_run(cfg)
    out = output_dir(cp, args)
    _write(out / "lln_results.csv", ex.lln_csv(rec))
    if plots_enabled(cp):
        data = _table(out / "lln_results.csv")
        Ns, first = np.unique(data[:, 0], return_index=True)
        plt = _pyplot()
        fig, ax = plt.subplots()
        ax.loglog(Ns, data[first, 4], "o-")
        ax.set_xlabel("N")
        ax.set_ylabel("mean W1")
        fig.savefig(out / "lln_w1.png", dpi=100)
        plt.close(fig)


def cmd_clt(cp, args):
    cfg = build_experiment(cp, args)
    rec = ex.clt_run(cfg)
    out = output_dir(cp, args)
    _write(out / "clt_samples.csv", ex.clt_samples_csv(rec))
    _write(out / "clt_summary.csv", ex.clt_summary_csv(rec))
    if plots_enabled(cp):
        samples = _table(out / "clt_samples.csv")
        summary = _table(out / "clt_summary.csv")
        x = samples[(samples[:, 0] == samples[:, 0].max()) & (samples[:, 2] == 0), 3]
        var = summary[(summary[:, 0] == 0) & (summary[:, 1] == 0), 2][0]
        plt = _pyplot()
        fig, ax = plt.subplots()
        if var > 0:
            z = x / np.sqrt(var)
            ax.hist(z, bins=30, density=True)
            t = np.linspace(-4, 4, 200)
            ax.plot(t, np.exp(-t ** 2 / 2) / np.sqrt(2 * np.pi))
        ax.set_xlabel("standardized statistic")
        fig.savefig(out / "clt_hist.png", dpi=100)
        plt.close(fig)


def cmd_variance(cp, args):
    cfg = build_experiment(cp, args)
    exp = cp["experiment"]
    name = exp.get("variance_function", cfg.functions[0]).strip()
    try:
        g = ex.make_function(name)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    report = ex.variance_comparison(cfg, g)
    _write(output_dir(cp, args) / "variance_report.csv", ex.variance_csv(report))


COMMANDS = {
    "scattering": cmd_scattering,
    "covariance": cmd_covariance,
    "lln": cmd_lln,
    "clt": cmd_clt,
    "variance": cmd_variance,
}


def _common_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", metavar="PATH", default=default, help="INI configuration file")
    parser.add_argument("--out-dir", metavar="PATH", default=default, help="output directory")
    parser.add_argument("--seed", type=int, metavar="U64", default=default, help="master seed override")
    parser.add_argument("--threads", type=int, metavar="K", default=default, help="worker threads")


def build_parser():
    parser = argparse.ArgumentParser(prog="bosemeasure",
                                     description="Empirical measures of Bose gas measurements.")
    _common_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        _common_flags(p, suppress=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if not args.config:
            raise ConfigError("--config is required")
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must fit in an unsigned 64-bit integer")
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be positive")
        cp = load_config(args.config)
        COMMANDS[args.command](cp, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (sc.ScatteringError, ValueError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
