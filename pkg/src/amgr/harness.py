"""Experiment driver: convergence factors, complexities and table presets.

An experiment config is a JSON object whose list-valued fields (``grids``,
``thetas``, ``etas``, ``zetas``, ``problems``, ``variants``) are expanded as a
cartesian product.  Each expanded case produces one CSV row.
"""

import csv
import io
import itertools
import json
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .coarsen import CoarsenConfig, GeometricParams, SAParams
from .hierarchy import CycleConfig, RelaxConfig, build_hierarchy, cycle, pcg
from .interp import InterpConfig
from .problems import build_matrix, parse_angle, problem_from_dict
from .sparse import a_norm
from .strength import StrengthConfig

__all__ = [
    "ConfigError",
    "RhoEstimate",
    "ConvergenceReport",
    "BoundParams",
    "CSV_COLUMNS",
    "PRESETS",
    "random_vector",
    "estimate_rho",
    "complexities",
    "theory_bound",
    "expand_config",
    "run_case",
    "run_experiment",
    "load_config",
    "preset",
    "write_csv",
]

CSV_COLUMNS = ["problem", "disc", "grid", "theta", "eta", "zeta", "scaling", "relax", "cycle",
               "rho", "rho_V", "rho_W", "c_grid", "c_op", "n_l", "pcg_iters", "guards", "seed",
               "error"]

UNDERFLOW = 1e-150
DIVERGENCE = 1e10


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# ---------------------------------------------------------------- measurement


def random_vector(n, seed):
    """Uniform [-1, 1] entries from a counter-based Philox stream."""
    return np.random.Generator(np.random.Philox(seed)).uniform(-1.0, 1.0, n)


@dataclass
class RhoEstimate:
    rho: float
    fast_convergence: bool = False
    diverged: bool = False
    window: tuple = (10, 50)


def estimate_rho(apply_cycle, A, seed=0, n_iter=50, skip=10, x0=None):
    """Asymptotic factor ``(||e_n||_A / ||e_skip||_A)^(1/(n - skip))`` on ``A x = 0``.

    If the error falls below ``1e-150`` times its initial size the window is
    shortened to end at the last iterate above that level (starting at 0 if
    needed) and ``fast_convergence`` is set.  Growth beyond ``1e10`` stops the
    iteration and sets ``diverged``.
    """
    x = random_vector(A.shape[0], seed) if x0 is None else np.array(x0, dtype=np.float64)
    norms = [a_norm(A, x)]
    if norms[0] == 0.0:
        return RhoEstimate(0.0, fast_convergence=True, window=(0, 0))
    floor = UNDERFLOW * norms[0]
    for k in range(1, n_iter + 1):
        x = apply_cycle(x)
        norms.append(a_norm(A, x))
        if norms[-1] > DIVERGENCE * norms[0]:
            return RhoEstimate((norms[-1] / norms[0]) ** (1.0 / k), diverged=True, window=(0, k))
        if norms[-1] < floor:
            break
    if norms[-1] >= floor and len(norms) == n_iter + 1:
        return RhoEstimate((norms[n_iter] / norms[skip]) ** (1.0 / (n_iter - skip)))
    last = max(k for k, v in enumerate(norms) if v >= floor)
    if last == 0:
        return RhoEstimate(0.0, fast_convergence=True, window=(0, 0))
    lo = skip if last >= 2 * skip else 0
    return RhoEstimate((norms[last] / norms[lo]) ** (1.0 / (last - lo)),
                       fast_convergence=True, window=(lo, last))


def complexities(h):
    """Grid and operator complexity of a hierarchy (exact-zero entries excluded)."""
    ops = h.operators()
    c_grid = sum(M.shape[0] for M in ops) / ops[0].shape[0]
    c_op = sum(M.count_nonzero() for M in ops) / ops[0].count_nonzero()
    return c_grid, c_op


@dataclass(frozen=True)
class BoundParams:
    epsilon: float
    nu: int = 1

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.nu < 1:
            raise ValueError("nu must be at least 1")


def theory_bound(p):
    """Two-level A-norm bound for F-relaxation with ``nu`` sweeps.

    >>> round(theory_bound(BoundParams(1.0, 1)), 4)
    0.7454
    """
    e, nu = p.epsilon, p.nu
    return math.sqrt(e / (1.0 + e) * (1.0 + e ** (2 * nu - 1) / (2.0 + e) ** (2 * nu)))


@dataclass
class ConvergenceReport:
    rho: float = None
    rho_V: float = None
    rho_W: float = None
    c_grid: float = None
    c_op: float = None
    n_levels: int = None
    pcg_iters: int = None
    guard_count: int = 0
    seed: int = 0
    flags: list = field(default_factory=list)
    echo: dict = field(default_factory=dict)
    error: str = ""

    def as_row(self):
        row = dict(self.echo)
        row.update(rho=self.rho, rho_V=self.rho_V, rho_W=self.rho_W, c_grid=self.c_grid,
                   c_op=self.c_op, n_l=self.n_levels, pcg_iters=self.pcg_iters,
                   guards=self.guard_count, seed=self.seed, error=self.error)
        return {k: _fmt(row.get(k)) for k in CSV_COLUMNS}


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


# ---------------------------------------------------------------- configs

DEFAULTS = {
    "name": "experiment",
    "problem": {},
    "problems": None,
    "discretization": "fe_bilinear",
    "grids": [32],
    "grid_counts_boundary": False,
    "meshes": None,
    "thetas": [0.0],
    "aniso": 1e-6,
    "convention": "H_first_small",
    "etas": [0.65],
    "zetas": [0.0],
    "coarsening": "annealed",
    "geometric": {},
    "strength": True,
    "scaling": "improved_iteration",
    "relax": "FCF",
    "weights": "exact_eigs",
    "levels": 2,
    "cycles": None,
    "coarse_size": 100,
    "classical": False,
    "n_seeds": None,
    "seed": 0,
    "pcg": False,
    "variants": None,
    "label": "",
    "note": "",
}


def parse_theta(v):
    """Angles as numbers or strings such as ``"pi/6"`` or ``"3*pi/4"``."""
    try:
        return parse_angle(v)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _theta_label(t):
    for den in (1, 2, 3, 4, 6, 8, 12):
        k = t * den / math.pi
        if abs(k - round(k)) < 1e-12:
            k = int(round(k))
            if k == 0:
                return "0"
            head = "pi" if k == 1 else f"{k}pi"
            return head if den == 1 else f"{head}/{den}"
    return f"{t:.6g}"


def _check_keys(cfg, where):
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in {where}")


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def load_config(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def _validate(c):
    if c["coarsening"] not in ("greedy", "annealed", "geometric"):
        raise ConfigError(f"unknown coarsening {c['coarsening']!r}")
    if c["scaling"] not in ("none", "constant", "improved_iteration"):
        raise ConfigError(f"unknown scaling {c['scaling']!r}")
    if c["relax"] not in ("F", "FCF"):
        raise ConfigError(f"unknown relaxation {c['relax']!r}")
    if c["weights"] not in ("exact_eigs", "heuristic"):
        raise ConfigError(f"unknown weight mode {c['weights']!r}")
    if c["levels"] != "multi" and (not isinstance(c["levels"], int) or c["levels"] < 2):
        raise ConfigError(f"levels must be an integer >= 2 or 'multi', got {c['levels']!r}")
    if c["discretization"] not in ("fd", "fe_bilinear", "fe_p1"):
        raise ConfigError(f"unknown discretization {c['discretization']!r}")
    for e in c["etas"]:
        if not 0.5 < e <= 1.0:
            raise ConfigError(f"eta must lie in (1/2, 1], got {e}")
    for z in c["zetas"]:
        if not 0.0 <= z < 1.0:
            raise ConfigError(f"zeta must lie in [0, 1), got {z}")


def expand_config(cfg, seed=None):
    """Flatten a config into the ordered list of cases (one per CSV row)."""
    if not isinstance(cfg, dict):
        raise ConfigError("an experiment config must be a JSON object")
    _check_keys(cfg, "config")
    variants = cfg.get("variants") or [{}]
    cases = []
    for var in variants:
        _check_keys(var, "variant")
        c = dict(DEFAULTS)
        c.update({k: v for k, v in cfg.items() if k != "variants"})
        c.update(var)
        if seed is not None:
            c["seed"] = seed
        c["thetas"] = [parse_theta(t) for t in _as_list(c["thetas"])]
        c["etas"] = [float(e) for e in _as_list(c["etas"])]
        c["zetas"] = [float(z) for z in _as_list(c["zetas"])]
        _validate(c)
        problems = c["problems"] or [dict(c["problem"])]
        sizes = c["meshes"] if c["meshes"] else _as_list(c["grids"])
        for prob, size, theta, eta, zeta in itertools.product(
                problems, sizes, c["thetas"], c["etas"], c["zetas"]):
            case = {k: c[k] for k in DEFAULTS if k not in ("problems", "variants", "grids",
                                                           "meshes", "thetas", "etas", "zetas")}
            case.update(problem=dict(prob), size=size, theta=theta, eta=eta, zeta=zeta)
            cases.append(case)
    return cases


def _problem_spec(case):
    prob = dict(case["problem"])
    name = prob.pop("name", None) or case["name"]
    prob.pop("note", None)
    prob.setdefault("discretization", case["discretization"])
    prob.setdefault("convention", case["convention"])
    if "regions" not in prob:
        prob.setdefault("theta", case["theta"])
        prob.setdefault("aniso", case["aniso"])
    if prob["discretization"] == "fe_p1":
        if not isinstance(case["size"], dict):
            raise ConfigError("fe_p1 problems take their sizes from 'meshes'")
        prob["mesh"] = dict(case["size"])
        label = None
    else:
        prob["n"] = int(case["size"])
        prob["grid_counts_boundary"] = case["grid_counts_boundary"]
        label = f"{case['size']}x{case['size']}"
    try:
        spec = problem_from_dict(prob)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad problem description: {exc}") from None
    return name, spec, label


def _echo(case, name, label):
    tag = f"{name}/{case['label']}" if case["label"] else name
    cycles = _cycles(case)
    if case["levels"] == 2:
        cyc = "two_level"
    else:
        depth = "ml" if case["levels"] == "multi" else f"{case['levels']}L"
        cyc = f"{depth}-" + "/".join(cycles)
    disc = case["problem"].get("discretization", case["discretization"])
    return dict(problem=tag, disc=disc, grid=label,
                theta=_theta_label(case["theta"]) if "regions" not in case["problem"] else "",
                eta=case["eta"], zeta=case["zeta"], scaling=case["scaling"],
                relax="F" if case["classical"] else case["relax"],
                cycle=("classical-" if case["classical"] else "") + cyc)


def _cycles(case):
    if case["levels"] == 2:
        return ["two_level"]
    return list(case["cycles"] or ["V", "W"])


def _configs(case, spec, s):
    strength = StrengthConfig() if case["strength"] else None
    geo = dict(case["geometric"])
    coarsen = CoarsenConfig(
        eta=case["eta"], method=case["coarsening"], sa_params=SAParams(seed=s),
        geometric_params=GeometricParams(nx=spec.nx, ny=spec.ny, **geo))
    interp = InterpConfig(zeta=case["zeta"], scaling=case["scaling"])
    relax = RelaxConfig(use_fcf=case["relax"] == "FCF" and not case["classical"],
                        weight_mode=case["weights"])
    if case["levels"] == 2:
        cyc = CycleConfig(classical_baseline=case["classical"])
    elif case["levels"] == "multi":
        cyc = CycleConfig(cycle="V", max_levels=25, coarse_size_threshold=case["coarse_size"],
                          classical_baseline=case["classical"])
    else:
        cyc = CycleConfig(cycle="V", max_levels=case["levels"], coarse_size_threshold=0,
                          classical_baseline=case["classical"])
    return strength, coarsen, interp, relax, cyc


def _single_run(case, A, spec, s):
    strength, coarsen, interp, relax, cyc = _configs(case, spec, s)
    grid = (spec.nx, spec.ny) if case["coarsening"] == "geometric" else None
    h = build_hierarchy(A, strength, coarsen, interp, relax, cyc, grid=grid)
    out = {"flags": []}
    for name in _cycles(case):
        cc = CycleConfig(cycle=name, max_levels=cyc.max_levels,
                         coarse_size_threshold=cyc.coarse_size_threshold,
                         classical_baseline=cyc.classical_baseline)
        b = np.zeros(A.shape[0])
        est = estimate_rho(lambda x: cycle(h, 0, x, b, relax, cc), A, seed=s)
        out[name] = est.rho
        out["flags"] += [f"{name}:fast"] * est.fast_convergence + [f"{name}:diverged"] * est.diverged
    out["c_grid"], out["c_op"] = complexities(h)
    out["n_l"] = h.n_levels
    out["guards"] = sum(lvl.guard_count for lvl in h.levels)
    if case["pcg"]:
        name = "W" if "W" in _cycles(case) else _cycles(case)[-1]
        cc = CycleConfig(cycle=name, max_levels=cyc.max_levels,
                         coarse_size_threshold=cyc.coarse_size_threshold,
                         classical_baseline=cyc.classical_baseline)
        res = pcg(A, random_vector(A.shape[0], s), h, relax, cc, tol=1e-8)
        out["pcg"] = res.iterations if res.converged else None
        if not res.converged:
            out["flags"].append("pcg:not_converged")
    return out


def run_case(case):
    """Run one expanded case; errors are captured in the report."""
    report = ConvergenceReport(seed=case["seed"])
    try:
        name, spec, label = _problem_spec(case)
    except ConfigError as exc:
        report.error = str(exc)
        report.echo = dict(problem=case["name"])
        return report
    report.echo = _echo(case, name, label)
    try:
        A = build_matrix(spec)
        if label is None:
            report.echo["grid"] = f"{A.shape[0]}dof"
        n_seeds = case["n_seeds"] or (5 if case["coarsening"] == "annealed" else 1)
        runs = [_single_run(case, A, spec, case["seed"] + k) for k in range(n_seeds)]
    except Exception as exc:  # a failing row must not stop the table
        report.error = f"{type(exc).__name__}: {exc}"
        return report

    def med(key):
        vals = [r[key] for r in runs if r.get(key) is not None]
        return statistics.median(vals) if vals else None

    cyc = _cycles(case)
    if cyc == ["two_level"]:
        report.rho = med("two_level")
    else:
        report.rho_V, report.rho_W = med("V") if "V" in cyc else None, med("W") if "W" in cyc else None
        report.rho = report.rho_W if report.rho_W is not None else report.rho_V
    report.c_grid, report.c_op = med("c_grid"), med("c_op")
    report.n_levels = int(statistics.median_low([r["n_l"] for r in runs]))
    report.guard_count = int(statistics.median_low([r["guards"] for r in runs]))
    if case["pcg"]:
        its = [r["pcg"] for r in runs]
        report.pcg_iters = None if None in its else int(statistics.median_low(its))
        if report.pcg_iters is None:
            report.error = "PCG did not converge"
    report.flags = sorted({f for r in runs for f in r["flags"]})
    return report


def run_experiment(config, seed=None, threads=1):
    """Run every case of ``config`` (dict, JSON path or preset name).

    Returns reports in config order regardless of ``threads``.  Raises
    :class:`ConfigError` before any work if the config is invalid.
    """
    if isinstance(config, str):
        config = preset(config) if config in PRESETS else load_config(config)
    cases = expand_config(config, seed)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run_case, cases))
    return [run_case(c) for c in cases]


def write_csv(reports, fh=None):
    """Write reports as CSV to ``fh`` (or return the text)."""
    buf = fh if fh is not None else io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.as_row())
    return None if fh is not None else buf.getvalue()


# ---------------------------------------------------------------- presets


def _shipped(name):
    text = resources.files("amgr").joinpath("configs", name).read_text()
    return json.loads(text)


def _fourquad():
    return [_shipped(f"fourquad_problem{k}.json") for k in (1, 2, 3)]


ANGLES = ["0", "pi/6", "pi/4"]
_GEOMETRIC = dict(coarsening="geometric", grids=[16, 32, 64, 128], thetas=ANGLES,
                  relax="F", n_seeds=1)
_ANISO_MESH = [{"n_side": 15, "levels": k} for k in (1, 2, 3)]
_ISO_MESH = [{"n_side": 20, "levels": k, "bounds": [-1.0, 1.0]} for k in (1, 2, 3)]


def _presets():
    return {
        "table1": dict(
            name="aniso32", thetas=ANGLES, grids=[32], classical=True, relax="F",
            variants=[dict(label="fd", discretization="fd"), dict(label="fe")]),
        "table2": dict(_GEOMETRIC, name="aniso", strength=False, scaling="none"),
        "table3": dict(_GEOMETRIC, name="aniso", scaling="none"),
        "table4": dict(_GEOMETRIC, name="aniso", scaling="constant"),
        "table5": dict(_GEOMETRIC, name="aniso", scaling="improved_iteration"),
        "table6": dict(_GEOMETRIC, name="aniso", relax="FCF"),
        "table7": dict(
            name="aniso", thetas=ANGLES, grids=[16, 32, 64],
            variants=[dict(label="eta0.65"), dict(label="eta0.75", etas=[0.75]),
                      dict(label="zeta0.2", zetas=[0.2]),
                      dict(label="3L", levels=3), dict(label="3L-zeta0.2", levels=3, zetas=[0.2])]),
        "table8": dict(
            name="iso", aniso=1.0, grids=[16, 32, 64, 128],
            variants=[dict(label="classical", classical=True, relax="F"), dict(label="2L"),
                      dict(label="3L", levels=3)]),
        "table9": dict(
            name="iso", aniso=1.0, grids=[16, 32, 64, 128], zetas=[0.25],
            variants=[dict(label="2L"), dict(label="3L", levels=3)]),
        "table10": dict(name="fourquad", problems=_fourquad(), grids=[17, 33, 65, 129],
                        grid_counts_boundary=True, zetas=[0.25]),
        "table11": dict(name="fourquad", problems=_fourquad(), grids=[17, 33, 65, 129],
                        grid_counts_boundary=True, zetas=[0.25], levels=3),
        "table12": dict(
            name="unstructured", discretization="fe_p1", convention="H_second_small",
            thetas=["pi/3"], aniso=0.01, meshes=_ANISO_MESH, zetas=[0.25],
            variants=[dict(label="2L"), dict(label="3L", levels=3)]),
        "table13": dict(name="aniso", thetas=ANGLES, grids=[32, 64, 128, 256],
                        coarsening="greedy", weights="heuristic", zetas=[0.2], levels="multi"),
        "iso_unstructured": dict(
            name="iso_unstructured", discretization="fe_p1", aniso=1.0, meshes=_ISO_MESH,
            variants=[dict(label="zeta0"), dict(label="2L", zetas=[0.25]),
                      dict(label="3L", zetas=[0.25], levels=3)]),
        "fourquad_multilevel": dict(
            name="fourquad", problems=_fourquad(), grids=[33, 65, 129, 257],
            grid_counts_boundary=True, coarsening="greedy", weights="heuristic", zetas=[0.25],
            levels="multi", pcg=True),
        "unstructured_multilevel": dict(
            name="unstructured", discretization="fe_p1", convention="H_second_small",
            thetas=["pi/3"], aniso=0.01, meshes=_ANISO_MESH, etas=[0.56, 0.60, 0.65],
            coarsening="greedy", weights="heuristic", zetas=[0.25], levels="multi"),
    }


PRESETS = tuple(_presets())


def preset(name):
    """Config dict of a named preset (``table1`` ... ``table13`` and extras)."""
    table = _presets()
    if name not in table:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(table)}")
    return table[name]
