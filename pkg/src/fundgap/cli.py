"""Command-line entry point.

Every subcommand prints one JSON report (or writes it to ``--out``) and
exits with 0 when all checked inequalities hold, 2 when one is violated,
and 1 on any error.  Options come from the command line, then from an INI
file given by ``--config`` (sections ``[common]`` and one per subcommand,
e.g. ``[gap1d]`` or ``[moduli.logconc]``), then from built-in defaults.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .core import expr as ex
from .core.domain import ConvexDomain, parse_domain
from .core.grid import Grid, GridFunction, write_grid_csv, write_profile_csv
from .core.modulus import ModulusFn
from .core.potential import ExpressionPotential, Potential, potential_from_text, require_even

SCHEMA_VERSION = "1.0"
EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


class ConfigError(ValueError):
    """Invalid option value; ``field`` is the dotted path (command.option)."""

    def __init__(self, field: str, message: str, detail: dict | None = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
        self.detail = detail or {}


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage, which would read as "violated"
    def error(self, message):
        raise ConfigError("", message)


# ---------------------------------------------------------------------------
# option parsing


def _num(text) -> float:
    if isinstance(text, (int, float)):
        return float(text)
    try:
        return float(Fraction(str(text).strip()))
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"not a number: {text!r}") from None


def _int(text) -> int:
    v = _num(text)
    if v != int(v):
        raise ValueError(f"not an integer: {text!r}")
    return int(v)


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _numlist(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [_num(v) for v in text]
    return [_num(v) for v in str(text).split(",") if v.strip()]


@dataclass(frozen=True)
class Opt:
    name: str
    kind: object
    default: object
    help: str
    choices: tuple | None = None
    positive: bool = False

    @property
    def flag(self) -> str:
        return "--" + self.name.replace("_", "-")


def _o(name, kind, default, help, choices=None, positive=False):
    return Opt(name, kind, default, help, choices, positive)


PAIRS = [
    _o("bins", _int, 32, "distance bins for pair sampling", positive=True),
    _o("per_bin", _int, 512, "pairs per distance bin", positive=True),
    _o("seed", _int, 20240607, "seed for pair sampling"),
]

COMMANDS: dict[str, list[Opt]] = {
    "gap1d": [
        _o("potential", str, "0", "comparison potential V~(x1)"),
        _o("diameter", _num, 1.0, "diameter D", positive=True),
        _o("grid", _int, 1024, "finite-difference intervals", positive=True),
        _o("method", str, "shoot", "eigenvalue method", ("shoot", "fd")),
        _o("robin_eps", _num, None, "Robin parameter eps (shooting only)", positive=True),
        _o("crosscheck", _bool, False, "also run the other method and compare"),
        _o("crosscheck_tol", _num, 1e-4, "allowed |gap_fd - gap_shoot|", positive=True),
    ],
    "gapnd": [
        _o("domain", str, "square:1", "domain, e.g. square:1, disc:1, rect:1x0.1"),
        _o("potential", str, "0", "potential V(x1, ..., xn, r)"),
        _o("comparison", str, None, "comparison potential V~; default bound 3 pi^2/D^2"),
        _o("h", _num, 1 / 64, "grid spacing", positive=True),
        _o("k", _int, 3, "eigenpairs to compute", positive=True),
        _o("tol", _num, 1e-9, "eigenpair residual tolerance", positive=True),
        _o("richardson", _bool, True, "also solve at h/2 and extrapolate"),
        _o("seed", _int, 0, "seed for the eigensolver start vectors"),
    ],
    "prufer": [
        _o("potential", str, "0", "comparison potential V~(x1)"),
        _o("diameter", _num, 1.0, "diameter D", positive=True),
        _o("mu", _num, None, "spectral parameter mu (required)"),
        _o("q0", _num, 0.0, "initial angle at z = 0"),
        _o("samples", _int, 2049, "output samples on [0, D/2]", positive=True),
    ],
    "moduli.convexity": [
        _o("domain", str, "square:1", "domain"),
        _o("potential", str, "0", "potential V"),
        _o("comparison", str, None, "comparison potential V~ whose derivative is checked"),
        _o("optimal", _bool, False, "compute the optimal modulus from the sample instead"),
        _o("z_grid", _int, 65, "nodes of the optimal modulus on [0, D/2]", positive=True),
        _o("h", _num, 1 / 64, "grid spacing of the sampled points", positive=True),
        _o("tol", _num, 1e-9, "pass tolerance", positive=True),
        *PAIRS,
    ],
    "moduli.logconc": [
        _o("domain", str, "square:1", "domain"),
        _o("potential", str, "0", "potential V"),
        _o("comparison", str, "0", "comparison potential V~"),
        _o("h", _num, 1 / 64, "grid spacing", positive=True),
        _o("c_tol", _num, None, "tolerance constant; default calibrated at h", positive=True),
        _o("exclude", _num, 2.0, "skip pairs within exclude*h of the boundary"),
        *PAIRS,
    ],
    "moduli.continuity": [
        _o("domain", str, "interval:-0.5,0.5", "domain"),
        _o("function", str, None, "function v(x1, ..., xn, r) (required)"),
        _o("modulus", str, None, "modulus eta(z) (required)"),
        _o("h", _num, 1 / 64, "grid spacing", positive=True),
        _o("tol", _num, 1e-12, "pass tolerance", positive=True),
        *PAIRS,
    ],
    "moduli.contraction": [
        _o("domain", str, "square:1", "domain"),
        _o("field", str, "grad-log-phi0", "components separated by ';', or grad-log-phi0"),
        _o("modulus", str, "log-derivative", "omega(z), or log-derivative of the comparison"),
        _o("potential", str, "0", "potential V (for grad-log-phi0)"),
        _o("comparison", str, "0", "comparison potential V~ (for log-derivative)"),
        _o("h", _num, 1 / 64, "grid spacing", positive=True),
        _o("tol", _num, None, "pass tolerance; default 1e-12, or c_tol*h for grad-log-phi0",
           positive=True),
        _o("exclude", _num, 2.0, "near-boundary exclusion for grad-log-phi0, in units of h"),
        *PAIRS,
    ],
    "evolve-psi": [
        _o("potential", str, "0", "comparison potential V~(x1)"),
        _o("diameter", _num, 1.0, "diameter D", positive=True),
        _o("k", _numlist, [1.0, 10.0, 100.0], "truncation levels, comma separated"),
        _o("s", _num, 10.0, "barrier shift s"),
        _o("T", _num, 0.5, "final time", positive=True),
        _o("dt", _num, 1e-3, "requested time step (reduced for stability)", positive=True),
        _o("m", _int, 500, "intervals on [0, D/2]", positive=True),
        _o("snapshots", _int, 50, "stored states", positive=True),
        _o("compare_fraction", _num, 0.9, "compare on [0, fraction * D/2]", positive=True),
        _o("distance_tol", _num, None, "if given, require this sup distance to the Robin "
           "log-derivative", positive=True),
        _o("residual_tol", _num, 1e-6, "Riccati stationarity residual", positive=True),
    ],
    "heat-drift": [
        _o("domain", str, "interval:-0.5,0.5", "interval or box"),
        _o("field", str, "0", "drift X, components separated by ';'"),
        _o("initial", str, None, "initial data v0 (required)"),
        _o("T", _num, 0.3, "final time", positive=True),
        _o("dt", _num, 1e-4, "time step", positive=True),
        _o("h", _num, 1 / 256, "cell size", positive=True),
        _o("expect_rate", _num, None, "expected oscillation decay rate"),
        _o("rate_tol", _num, 1e-3, "relative tolerance on the decay rate", positive=True),
        _o("modulus", str, None, "initial continuity modulus m(z)"),
        _o("modulus_rate", _num, 0.0, "modulus family exp(-rate t) m(z)"),
        _o("tol", _num, 1e-4, "tolerance of the modulus check", positive=True),
        _o("every", _int, 10, "check every n-th snapshot", positive=True),
        *PAIRS,
    ],
    "gap-decay": [
        _o("domain", str, "square:1", "domain"),
        _o("potential", str, "0", "potential V"),
        _o("comparison", str, "0", "comparison potential V~"),
        _o("h", _num, 1 / 32, "grid spacing", positive=True),
        _o("dt", _num, 1e-3, "time step", positive=True),
        _o("T", _num, None, "final time; default 14/(lambda1 - lambda0)", positive=True),
        _o("tol", _num, 1e-2, "relative slack on rate >= comparison gap", positive=True),
        *PAIRS,
    ],
    "verify": [
        _o("domain", str, "square:1", "domain"),
        _o("potential", str, "0", "potential V"),
        _o("comparison", str, "0", "comparison potential V~"),
        _o("h", _num, 1 / 32, "grid spacing (and h/2 for extrapolation)", positive=True),
        _o("tol", _num, 1e-9, "eigenpair residual tolerance", positive=True),
        _o("convexity_tol", _num, 1e-9, "tolerance of the convexity check", positive=True),
        _o("crosscheck_tol", _num, 1e-4, "allowed FD vs shooting difference of gap1d",
           positive=True),
        _o("fd_grid", _int, 1024, "FD intervals for the gap1d cross-check", positive=True),
        *PAIRS,
    ],
}

REQUIRED = {
    "prufer": ("mu",),
    "moduli.continuity": ("function", "modulus"),
    "heat-drift": ("initial",),
}


def _build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI file with [common] and per-command sections")
    common.add_argument("--out", help="write the JSON report here instead of stdout")
    common.add_argument("--csv-dir", help="directory for CSV artifacts")
    common.add_argument("--timing", action="store_true", help="include wall time in the report")

    parser = _Parser(prog="fundgap", description="Fundamental gap comparison toolkit.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def add(sp, opts):
        for o in opts:
            kw = {"dest": o.name, "default": None, "help": f"{o.help} (default: {o.default})"}
            if o.kind is _bool:
                sp.add_argument(o.flag, action=argparse.BooleanOptionalAction, **kw)
            else:
                sp.add_argument(o.flag, **kw)

    mod = None
    for name, opts in COMMANDS.items():
        if name.startswith("moduli."):
            if mod is None:
                mp = sub.add_parser("moduli", help="pairwise modulus checks")
                mod = mp.add_subparsers(dest="verb", parser_class=_Parser, required=True)
            add(mod.add_parser(name.split(".")[1], parents=[common]), opts)
        else:
            add(sub.add_parser(name, parents=[common]), opts)
    return parser


def _read_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    return cp


def resolve_options(command: str, cli: dict, config_path=None) -> dict:
    """Merge command line, config file and defaults; validate every value."""
    opts = COMMANDS[command]
    by_name = {o.name: o for o in opts}
    raw = {}
    if config_path:
        cp = _read_config(config_path)
        for section in ("common", command):
            if not cp.has_section(section):
                continue
            for key, val in cp.items(section):
                name = key.replace("-", "_")
                if name not in by_name:
                    if section == "common":
                        continue
                    raise ConfigError(f"{command}.{key}", "unknown option")
                raw[name] = val
    for name, val in cli.items():
        if val is not None and name in by_name:
            raw[name] = val
    out = {}
    for o in opts:
        path = f"{command}.{o.name}"
        if o.name not in raw:
            out[o.name] = o.default
            continue
        try:
            v = o.kind(raw[o.name])
        except ValueError as exc:
            raise ConfigError(path, str(exc)) from None
        if o.choices and v not in o.choices:
            raise ConfigError(path, f"must be one of {', '.join(o.choices)}")
        vals = v if isinstance(v, list) else [v]
        if o.positive and any(not (isinstance(x, (int, float)) and x > 0) for x in vals):
            raise ConfigError(path, "must be positive")
        out[o.name] = v
    for name in REQUIRED.get(command, ()):
        if out[name] is None:
            raise ConfigError(f"{command}.{name}", "is required")
    return out


# ---------------------------------------------------------------------------
# helpers shared by the handlers


def _expr_detail(exc) -> dict:
    d = {}
    for attr in ("offset", "expected", "name"):
        if hasattr(exc, attr):
            v = getattr(exc, attr)
            d[attr] = list(v) if isinstance(v, tuple) else v
    return d


def _field(command, name, fn, *args):
    try:
        return fn(*args)
    except ex.ExpressionError as exc:
        raise ConfigError(f"{command}.{name}", str(exc), _expr_detail(exc)) from None
    except ValueError as exc:
        raise ConfigError(f"{command}.{name}", str(exc)) from None


def _comparison_potential(text: str, D: float) -> Potential:
    V = potential_from_text(text, 1)
    require_even(V, D / 2)
    return V


def _modulus_from_text(text: str, half: float, samples: int = 2049) -> ModulusFn:
    f = ExpressionPotential(ex.parse_expression(text, 1, {"z": "x1"}), 1)
    return ModulusFn.from_function(lambda z: f.value(z[:, None]), half, samples)


def _vector_field(text: str, points: np.ndarray) -> np.ndarray:
    n = points.shape[1]
    parts = [p for p in text.split(";")]
    if len(parts) == 1 and n > 1 and _is_zero(parts[0]):
        parts = parts * n
    if len(parts) != n:
        raise ValueError(f"field needs {n} components separated by ';', got {len(parts)}")
    return np.column_stack([potential_from_text(p, n).value(points) for p in parts])


def _is_zero(text: str) -> bool:
    return text.strip() in ("0", "0.0", "zero")


def _pairs(args, points, D):
    from .moduli import PairSample

    return PairSample.stratified(points, D, bins=args["bins"], per_bin=args["per_bin"],
                                 seed=args["seed"])


def _ground_state(domain, V, h, seed=0) -> GridFunction:
    from .schrod_nd import discretize, smallest_eigenpairs

    op = discretize(domain, V, h)
    eig = smallest_eigenpairs(op, k=1, tol=1e-10, seed=seed)
    return GridFunction(op.grid, eig.vectors[:, 0])


def _sharp_log_derivative(Vt: Potential, D: float) -> ModulusFn:
    from .sturm1d import log_derivative, solve_eigen_shooting

    return log_derivative(solve_eigen_shooting(Vt, D, "dirichlet-ground"))


def _smoothness_note(domain: ConvexDomain) -> list[str]:
    if domain.kind in ("rectangle", "polygon") and domain.dimension > 1:
        return ["domain has corners; the comparison theorem is stated for smooth convex "
                "domains and extends to this case by approximation"]
    return []


class Outcome:
    def __init__(self, results, evidence=None, passed=True, notes=None):
        self.results = results
        self.evidence = evidence or {}
        self.passed = bool(passed)
        self.notes = notes or []


# ---------------------------------------------------------------------------
# handlers


def cmd_gap1d(a, csv_dir):
    from .sturm1d import gap1d

    D = a["diameter"]
    V = _field("gap1d", "potential", _comparison_potential, a["potential"], D)
    g = gap1d(V, D, a["method"], a["grid"], a["robin_eps"])
    results = {
        "mu0": g.mu0, "mu1": g.mu1, "gap": g.gap, "method": g.method,
        "residuals": g.residuals, "diameter": D,
        "reference_3pi2_over_D2": 3 * math.pi**2 / D**2,
    }
    evidence = {"ground": g.ground.summary(), "excited": g.excited.summary()}
    passed = True
    if a["crosscheck"]:
        other = "fd" if a["method"] == "shoot" else "shoot"
        g2 = gap1d(V, D, other, a["grid"])
        diff = abs(g2.gap - g.gap)
        passed = diff <= a["crosscheck_tol"]
        evidence["crosscheck"] = {"method": other, "gap": g2.gap, "difference": diff,
                                  "tolerance": a["crosscheck_tol"], "passed": passed}
    if csv_dir:
        name = "gap1d_eigenfunctions.csv"
        write_profile_csv(csv_dir / name, {"z": g.ground.z, "phi0": g.ground.phi,
                                           "phi1": g.excited.phi})
        results["artifacts"] = [name]
    return Outcome(results, evidence, passed)


def cmd_gapnd(a, csv_dir):
    from .schrod_nd import fundamental_gap
    from .sturm1d import gap1d

    dom = _field("gapnd", "domain", parse_domain, a["domain"])
    V = _field("gapnd", "potential", potential_from_text, a["potential"], dom.dimension)
    D = dom.diameter()
    res = fundamental_gap(dom, V, a["h"], a["k"], a["tol"], a["richardson"], a["seed"])
    if a["comparison"] is not None:
        Vt = _field("gapnd", "comparison", _comparison_potential, a["comparison"], D)
        lower, kind = gap1d(Vt, D).gap, "gap1d(comparison, D)"
    else:
        lower, kind = 3 * math.pi**2 / D**2, "3 pi^2 / D^2 (convex V)"
    slack = res.error_indicator or 0.0
    passed = res.best >= lower - slack
    results = {
        "lambda0": res.lam0, "lambda1": res.lam1, "gap": res.gap,
        "gap_richardson": res.gap_richardson, "error_indicator": res.error_indicator,
        "lambda1_multiplicity": res.multiplicity1, "diameter": D,
        "lower_bound": lower, "bound_kind": kind, "slack": slack,
    }
    if csv_dir:
        names = ["gapnd_phi0.csv", "gapnd_phi1.csv"]
        write_grid_csv(csv_dir / names[0], res.phi0.grid, res.phi0.values, "phi0")
        write_grid_csv(csv_dir / names[1], res.phi1.grid, res.phi1.values, "phi1")
        results["artifacts"] = names
    return Outcome(results, res.summary(), passed, _smoothness_note(dom))


def cmd_prufer(a, csv_dir):
    from .sturm1d import prufer_shoot

    D = a["diameter"]
    V = _field("prufer", "potential", potential_from_text, a["potential"], 1)
    path = prufer_shoot(V, a["mu"], a["q0"], D, a["samples"])
    res = path.residual(V)
    results = {
        "mu": path.mu, "q0": path.q0, "terminal": path.terminal,
        "terminal_minus_dirichlet_target": path.terminal + math.pi / 2,
        "residual_max": float(res.max()),
    }
    if csv_dir:
        write_profile_csv(csv_dir / "prufer_angle.csv", {"z": path.z, "q": path.q})
        results["artifacts"] = ["prufer_angle.csv"]
    return Outcome(results)


def cmd_convexity(a, csv_dir):
    from .moduli import check_convexity_modulus, optimal_convexity_modulus
    from .parabolic import comparison_modulus

    c = "moduli.convexity"
    dom = _field(c, "domain", parse_domain, a["domain"])
    V = _field(c, "potential", potential_from_text, a["potential"], dom.dimension)
    D = dom.diameter()
    grid = Grid(dom, a["h"])
    pairs = _pairs(a, grid.points, D)
    results = {}
    if a["optimal"]:
        mod, missing = optimal_convexity_modulus(V, D / 2, a["z_grid"], pairs)
        results["modulus"] = {"z": mod.z.tolist(), "values": mod.values.tolist(),
                              "missing": missing}
    else:
        if a["comparison"] is None:
            raise ConfigError(f"{c}.comparison", "is required unless --optimal is given")
        Vt = _field(c, "comparison", _comparison_potential, a["comparison"], D)
        mod = comparison_modulus(Vt, D)
    rep = check_convexity_modulus(V, mod, pairs, a["tol"])
    results["report"] = rep.to_dict()
    return Outcome(results, {"grid": grid.describe()}, rep.passed)


def cmd_logconc(a, csv_dir):
    from .moduli import calibrate_c_tol, check_log_concavity

    c = "moduli.logconc"
    dom = _field(c, "domain", parse_domain, a["domain"])
    V = _field(c, "potential", potential_from_text, a["potential"], dom.dimension)
    D = dom.diameter()
    Vt = _field(c, "comparison", _comparison_potential, a["comparison"], D)
    phi = _ground_state(dom, V, a["h"])
    psi = _sharp_log_derivative(Vt, D)
    h = max(phi.grid.h)
    calib = None
    c_tol = a["c_tol"]
    if c_tol is None:
        calib = calibrate_c_tol(h, exclude=a["exclude"])
        c_tol = calib["c_tol"]
    pairs = _pairs(a, phi.grid.points, D)
    rep = check_log_concavity(phi, psi, pairs, c_tol=c_tol, exclude=a["exclude"])
    evidence = {"grid": phi.grid.describe(), "modulus": psi.describe(), "calibration": calib}
    return Outcome({"report": rep.to_dict()}, evidence, rep.passed, _smoothness_note(dom))


def cmd_continuity(a, csv_dir):
    from .moduli import check_modulus_of_continuity

    c = "moduli.continuity"
    dom = _field(c, "domain", parse_domain, a["domain"])
    f = _field(c, "function", potential_from_text, a["function"], dom.dimension)
    D = dom.diameter()
    eta = _field(c, "modulus", _modulus_from_text, a["modulus"], D / 2)
    grid = Grid(dom, a["h"])
    pairs = _pairs(a, grid.points, D)
    rep = check_modulus_of_continuity(f.value(grid.points), eta, pairs, a["tol"])
    return Outcome({"report": rep.to_dict()}, {"grid": grid.describe()}, rep.passed)


def cmd_contraction(a, csv_dir):
    from .moduli import DEFAULT_C_TOL_FLOOR, check_contraction_modulus, grad_log

    c = "moduli.contraction"
    dom = _field(c, "domain", parse_domain, a["domain"])
    D = dom.diameter()
    tol = a["tol"]
    if a["field"].strip() == "grad-log-phi0":
        V = _field(c, "potential", potential_from_text, a["potential"], dom.dimension)
        phi = _ground_state(dom, V, a["h"])
        grid = phi.grid
        h = max(grid.h)
        X = grad_log(phi)
        X[grid.boundary_distance <= a["exclude"] * h * (1 + 1e-9)] = np.nan
        if tol is None:
            tol = DEFAULT_C_TOL_FLOOR * h
    else:
        grid = Grid(dom, a["h"])
        X = _field(c, "field", _vector_field, a["field"], grid.points)
    if tol is None:
        tol = 1e-12
    if a["modulus"].strip() == "log-derivative":
        Vt = _field(c, "comparison", _comparison_potential, a["comparison"], D)
        omega = _sharp_log_derivative(Vt, D)
    else:
        omega = _field(c, "modulus", _modulus_from_text, a["modulus"], D / 2)
    pairs = _pairs(a, grid.points, D)
    rep = check_contraction_modulus(X, omega, pairs, tol)
    return Outcome({"report": rep.to_dict()}, {"grid": grid.describe()}, rep.passed)


def cmd_evolve_psi(a, csv_dir):
    from .parabolic import discrete_barrier, evolve_psi, riccati_defect
    from .sturm1d import log_derivative, solve_eigen_shooting

    D = a["diameter"]
    Vt = _field("evolve-psi", "potential", _comparison_potential, a["potential"], D)
    runs, passed, columns = [], True, {}
    for k in a["k"]:
        if not k > 0:
            raise ConfigError("evolve-psi.k", "truncation levels must be positive")
        z, psi0, mu_disc = discrete_barrier(Vt, D, k, a["s"], a["m"])
        run = evolve_psi(Vt, D, psi0, k, a["T"], a["dt"], a["m"], a["snapshots"])
        robin = solve_eigen_shooting(Vt, D, "robin-ground", 1.0 / k)
        target = log_derivative(robin)
        sel = z <= a["compare_fraction"] * D / 2 * (1 + 1e-12)
        final = run.final.psi
        dist = float(np.max(np.abs(final[sel] - target(z[sel]))))
        mu_fit, defect = riccati_defect(Vt, z, final)
        res = float(np.max(np.abs(defect)))
        # a rounding-level increase is not a violation of monotonicity
        inc_tol = 1e-12 * max(1.0, k)
        ok = run.max_increase <= inc_tol and res < a["residual_tol"]
        if a["distance_tol"] is not None:
            ok = ok and dist < a["distance_tol"]
        passed &= ok
        runs.append({
            "k": k, "passed": ok, "distance_to_robin": dist, "max_increase": run.max_increase,
            "increase_tolerance": inc_tol, "riccati_residual": res, "mu_fit": mu_fit,
            "mu_robin_discrete": mu_disc, "mu_robin": robin.mu, "run": run.describe(),
        })
        columns[f"psi_k{k:g}"] = final
        columns[f"target_k{k:g}"] = target(z)
    results = {"runs": runs}
    if csv_dir:
        write_profile_csv(csv_dir / "evolve_psi.csv", {"z": z, **columns})
        results["artifacts"] = ["evolve_psi.csv"]
    return Outcome(results, {"s": a["s"], "m": a["m"]}, passed)


def cmd_heat_drift(a, csv_dir):
    from .moduli import PairSample
    from .parabolic import cell_grid, heat_drift_neumann, modulus_preservation_test, osc_decay_rate

    c = "heat-drift"
    dom = _field(c, "domain", parse_domain, a["domain"])
    cg = _field(c, "domain", cell_grid, dom, a["h"])
    X = None if _is_zero(a["field"]) else _field(c, "field", _vector_field, a["field"], cg.points)
    v0 = _field(c, "initial", potential_from_text, a["initial"], dom.dimension).value(cg.points)
    traj = heat_drift_neumann(dom, X, v0, a["T"], a["dt"], a["h"])
    rate, fit = osc_decay_rate(traj, with_info=True)
    results = {"rate": rate, "fit": fit, "trajectory": traj.describe()}
    passed = True
    if a["expect_rate"] is not None:
        rel = abs(rate - a["expect_rate"]) / abs(a["expect_rate"])
        ok = rel <= a["rate_tol"]
        results["rate_check"] = {"expected": a["expect_rate"], "relative_error": rel,
                                 "tolerance": a["rate_tol"], "passed": ok}
        passed &= ok
    if a["modulus"] is not None:
        D = dom.diameter()
        m0 = _field(c, "modulus", _modulus_from_text, a["modulus"], D / 2)
        pairs = PairSample.stratified(cg.points, D, a["bins"], a["per_bin"], a["seed"])
        lam = a["modulus_rate"]
        pres = modulus_preservation_test(traj, lambda t: m0.scaled(math.exp(-lam * t)), pairs,
                                         a["tol"], a["every"])
        results["preservation"] = {"passed": pres.passed, "first_failure": pres.first_failure,
                                   "snapshots_checked": len(pres.times),
                                   "worst": max(r.worst for r in pres.reports)}
        passed &= pres.passed
    if csv_dir:
        osc = traj.oscillation()
        write_profile_csv(csv_dir / "heat_drift_osc.csv", {"t": traj.times, "osc": osc})
        results["artifacts"] = ["heat_drift_osc.csv"]
    return Outcome(results, {}, passed)


def cmd_gap_decay(a, csv_dir):
    from .parabolic import gap_from_decay

    c = "gap-decay"
    dom = _field(c, "domain", parse_domain, a["domain"])
    V = _field(c, "potential", potential_from_text, a["potential"], dom.dimension)
    Vt = _field(c, "comparison", _comparison_potential, a["comparison"], dom.diameter())
    rep = gap_from_decay(dom, V, Vt, h=a["h"], dt=a["dt"], T=a["T"], seed=a["seed"],
                         tol=a["tol"], pairs=_pairs_for(a, dom))
    evidence = rep.pop("evidence")
    passed = rep.pop("passed")
    return Outcome(rep, evidence, passed, _smoothness_note(dom))


def _pairs_for(a, dom):
    grid = Grid(dom, a["h"])
    return _pairs(a, grid.points, dom.diameter())


def verify_gap_theorem(domain: ConvexDomain, V: Potential, Vt: Potential, h=1 / 32,
                       tol=1e-9, convexity_tol=1e-9, crosscheck_tol=1e-4, fd_grid=1024,
                       bins=32, per_bin=512, seed=20240607) -> dict:
    """Convexity of V against V~', then lambda1 - lambda0 >= mu1 - mu0.

    Returns {"passed", "failed_stage", "results", "evidence"}; raises
    :class:`~fundgap.parabolic.StageError` tagged with the stage that
    could not be computed.
    """
    from .moduli import PairSample, check_convexity_modulus
    from .parabolic import StageError, comparison_modulus
    from .schrod_nd import fundamental_gap
    from .sturm1d import gap1d

    D = domain.diameter()
    evidence = {}
    try:
        grid = Grid(domain, h)
        pairs = PairSample.stratified(grid.points, D, bins, per_bin, seed)
        conv = check_convexity_modulus(V, comparison_modulus(Vt, D), pairs, convexity_tol)
    except Exception as exc:
        raise StageError("convexity", str(exc)) from exc
    evidence["convexity"] = conv.to_dict()
    if not conv.passed:
        return {"passed": False, "failed_stage": "convexity", "results": {},
                "evidence": evidence}
    try:
        nd = fundamental_gap(domain, V, h, tol=tol, seed=0)
    except Exception as exc:
        raise StageError("fundamental_gap", str(exc)) from exc
    evidence["fundamental_gap"] = nd.summary()
    try:
        g1 = gap1d(Vt, D)
        g1_fd = gap1d(Vt, D, "fd", fd_grid)
    except Exception as exc:
        raise StageError("gap1d", str(exc)) from exc
    diff = abs(g1.gap - g1_fd.gap)
    evidence["gap1d"] = {
        "mu0": g1.mu0, "mu1": g1.mu1, "gap": g1.gap, "residuals": g1.residuals,
        "fd_gap": g1_fd.gap, "fd_grid": fd_grid, "fd_difference": diff,
        "crosscheck_tolerance": crosscheck_tol, "crosscheck_passed": diff <= crosscheck_tol,
    }
    slack = nd.error_indicator or 0.0
    holds = nd.best >= g1.gap - slack
    evidence["comparison"] = {"gap_nd": nd.best, "gap_1d": g1.gap, "slack": slack,
                              "margin": nd.best - g1.gap, "passed": holds}
    failed = None
    if diff > crosscheck_tol:
        failed = "gap1d"
    elif not holds:
        failed = "comparison"
    results = {"gap_nd": nd.best, "gap_nd_coarse": nd.gap, "gap_1d": g1.gap,
               "diameter": D, "lambda1_multiplicity": nd.multiplicity1}
    return {"passed": failed is None, "failed_stage": failed, "results": results,
            "evidence": evidence}


def cmd_verify(a, csv_dir):
    c = "verify"
    dom = _field(c, "domain", parse_domain, a["domain"])
    V = _field(c, "potential", potential_from_text, a["potential"], dom.dimension)
    Vt = _field(c, "comparison", _comparison_potential, a["comparison"], dom.diameter())
    rep = verify_gap_theorem(dom, V, Vt, a["h"], a["tol"], a["convexity_tol"],
                             a["crosscheck_tol"], a["fd_grid"], a["bins"], a["per_bin"],
                             a["seed"])
    results = {**rep["results"], "failed_stage": rep["failed_stage"]}
    return Outcome(results, rep["evidence"], rep["passed"], _smoothness_note(dom))


HANDLERS = {
    "gap1d": cmd_gap1d, "gapnd": cmd_gapnd, "prufer": cmd_prufer,
    "moduli.convexity": cmd_convexity, "moduli.logconc": cmd_logconc,
    "moduli.continuity": cmd_continuity, "moduli.contraction": cmd_contraction,
    "evolve-psi": cmd_evolve_psi, "heat-drift": cmd_heat_drift,
    "gap-decay": cmd_gap_decay, "verify": cmd_verify,
}


# ---------------------------------------------------------------------------
# reports


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _execute(argv):
    start = time.perf_counter()
    report = {"schema_version": SCHEMA_VERSION, "command": None, "inputs": {}, "results": {},
              "evidence": {}, "notes": []}
    ns = None
    try:
        ns = _build_parser().parse_args(argv)
        command = ns.command if ns.command != "moduli" else f"moduli.{ns.verb}"
        report["command"] = command
        a = resolve_options(command, vars(ns), ns.config)
        report["inputs"] = a
        csv_dir = Path(ns.csv_dir) if ns.csv_dir else None
        if csv_dir:
            csv_dir.mkdir(parents=True, exist_ok=True)
        out = HANDLERS[command](a, csv_dir)
        report["results"] = out.results
        report["evidence"] = out.evidence
        report["notes"] = out.notes
        report["status"] = "pass" if out.passed else "fail"
        code = EXIT_PASS if out.passed else EXIT_FAIL
    except Exception as exc:  # every failure becomes a report with exit code 1
        err = {"type": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ConfigError):
            err["field"] = exc.field
            err.update(exc.detail)
        if getattr(exc, "stage", None):
            err["stage"] = exc.stage
        report["status"] = "error"
        report["error"] = err
        code = EXIT_ERROR
    report["exit_code"] = code
    if ns is not None and ns.timing:
        report["wall_time_s"] = time.perf_counter() - start
    return code, report, ns


def run(argv=None) -> tuple[int, dict]:
    """Parse ``argv``, dispatch, and return (exit code, report)."""
    code, report, _ = _execute(argv)
    return code, report


def main(argv=None) -> int:
    try:
        code, report, ns = _execute(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    text = dumps(report)
    if ns is not None and ns.out:
        Path(ns.out).write_text(text)
    else:
        sys.stdout.write(text)
    if code == EXIT_ERROR:
        e = report.get("error", {})
        where = f" [{e['stage']}]" if e.get("stage") else ""
        print(f"fundgap: error{where}: {e.get('message')}", file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
