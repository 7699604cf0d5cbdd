"""Command line front end.

``freeconv run <config.json>``
    Run a density, brown or compare task described by a JSON config.
``freeconv selfcheck``
    Closed-form and oracle checks; exit 0 iff all pass.
``freeconv verify-pencil <pencil-file> <expr>``
    Certify a pencil against a polynomial by random matrix substitution.

Exit codes: 0 success, 1 failed check, 2 configuration error, 3 numerical
failure.  ``FREECONV_THREADS`` caps the number of worker threads.
"""
import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__, laws, linpen, recover, rmt, subord
from .errors import ConfigError, FreeconvError, ParseError, PencilError
from .ncexpr import is_selfadjoint, parse

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

_TOP_KEYS = {"task", "expression", "pencil", "variables", "grid", "epsilon", "rmt", "output",
             "solver", "plot"}
_TASKS = ("density", "brown", "compare", "selfcheck")
_SOLVER_KEYS = {"tol", "max_iter", "damping", "inner_tol", "warm_start", "chunk", "group_semicircles"}
_RMT_KEYS = {"ensembles", "N", "trials", "seed"}
_ENSEMBLE_KEYS = {"kind", "ratio", "complex"}


# ------------------------------------------------------------------ config

def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key {key!r}")


def _number(obj, key, where, kind=float, default=None, minimum=None):
    if key not in obj:
        if default is None:
            raise ConfigError(f"{where}: missing required key {key!r}")
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number")
    if kind is int and int(val) != val:
        raise ConfigError(f"{where}.{key}: expected an integer")
    val = kind(val)
    if minimum is not None and val < minimum:
        raise ConfigError(f"{where}.{key}: must be >= {minimum}")
    return val


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    base = os.path.dirname(os.path.abspath(path))
    return validate_config(cfg, base)


def validate_config(cfg, base="."):
    """Validate a config object; returns a normalized dict."""
    _check_keys(cfg, _TOP_KEYS, "config")
    task = cfg.get("task")
    if task not in _TASKS:
        raise ConfigError(f"config.task: expected one of {list(_TASKS)}, got {task!r}")
    out = {"task": task, "plot": bool(cfg.get("plot", False))}
    if task == "selfcheck":
        return out
    if ("expression" in cfg) == ("pencil" in cfg):
        raise ConfigError("config: give exactly one of 'expression' or 'pencil'")
    variables = cfg.get("variables")
    if not isinstance(variables, dict) or not variables:
        raise ConfigError("config.variables: expected a non-empty object of law specs")
    out["laws"] = {name: laws.law_from_config(spec, f"variables.{name}") for name, spec in variables.items()}
    names = list(variables)
    if "expression" in cfg:
        if not isinstance(cfg["expression"], str):
            raise ConfigError("config.expression: expected a string")
        try:
            poly = parse(cfg["expression"], names)
        except ParseError as exc:
            raise ConfigError(f"config.expression: {exc}") from None
        out["expression"] = cfg["expression"]
        out["poly"] = poly
        out["pencil"] = None
    else:
        path = cfg["pencil"]
        if not isinstance(path, str):
            raise ConfigError("config.pencil: expected a file path")
        path = path if os.path.isabs(path) else os.path.join(base, path)
        try:
            pencil = linpen.read_pencil(path)
        except OSError as exc:
            raise ConfigError(f"config.pencil: cannot read {path}: {exc.strerror}") from None
        except PencilError as exc:
            raise ConfigError(f"config.pencil: {exc}") from None
        missing = [v for v in pencil.variables if v not in out["laws"]]
        if missing:
            raise ConfigError(f"config.variables: no law for pencil variable {missing[0]!r}")
        out["poly"] = None
        out["pencil"] = pencil
    if "output" not in cfg or not isinstance(cfg["output"], str):
        raise ConfigError("config.output: expected an output file path")
    out["output"] = cfg["output"] if os.path.isabs(cfg["output"]) else os.path.join(base, cfg["output"])

    solver = cfg.get("solver", {})
    _check_keys(solver, _SOLVER_KEYS, "config.solver")
    try:
        out["opts"] = subord.FixedPointOptions(**solver)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config.solver: {exc}") from None

    mode = _mode(task, out)
    out["mode"] = mode
    grid = cfg.get("grid")
    if mode == "density":
        _check_keys(grid, {"min", "max", "points"}, "config.grid")
        lo = _number(grid, "min", "config.grid")
        hi = _number(grid, "max", "config.grid")
        pts = _number(grid, "points", "config.grid", int, minimum=8)
        if not hi > lo:
            raise ConfigError("config.grid: max must exceed min")
        out["grid"] = np.linspace(lo, hi, pts)
        eps = cfg.get("epsilon", list(recover.DEFAULT_SCHEDULE))
        eps = [eps] if isinstance(eps, (int, float)) and not isinstance(eps, bool) else eps
        if (not isinstance(eps, list) or not eps
                or any(isinstance(e, bool) or not isinstance(e, (int, float)) or e <= 0 for e in eps)
                or any(b >= a for a, b in zip(eps, eps[1:]))):
            raise ConfigError("config.epsilon: expected a strictly decreasing list of positive numbers")
        out["epsilon"] = tuple(float(e) for e in eps)
    else:
        _check_keys(grid, {"re", "im", "points"}, "config.grid")
        for key in ("re", "im"):
            rng = grid.get(key)
            if (not isinstance(rng, list) or len(rng) != 2
                    or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in rng)
                    or not rng[1] > rng[0]):
                raise ConfigError(f"config.grid.{key}: expected [min, max] with max > min")
        pts = grid.get("points")
        pts = [pts, pts] if isinstance(pts, int) and not isinstance(pts, bool) else pts
        if not isinstance(pts, list) or len(pts) != 2 or any(
                isinstance(v, bool) or not isinstance(v, int) or v < 8 for v in pts):
            raise ConfigError("config.grid.points: expected an integer >= 8 or a pair of them")
        out["re"] = np.linspace(grid["re"][0], grid["re"][1], pts[0])
        out["im"] = np.linspace(grid["im"][0], grid["im"][1], pts[1])
        eps = cfg.get("epsilon", 1e-3)
        if isinstance(eps, bool) or not isinstance(eps, (int, float)) or eps <= 0:
            raise ConfigError("config.epsilon: brown tasks take a single positive number")
        out["epsilon"] = float(eps)

    if task == "compare":
        if out["poly"] is None:
            raise ConfigError("config: the compare task needs 'expression' (random matrices are built from it)")
        r = cfg.get("rmt")
        _check_keys(r, _RMT_KEYS, "config.rmt")
        ens = r.get("ensembles")
        if not isinstance(ens, dict):
            raise ConfigError("config.rmt.ensembles: expected an object")
        N = _number(r, "N", "config.rmt", int, minimum=2)
        specs = {}
        for name in out["poly"].variables:
            if name not in ens:
                raise ConfigError(f"config.rmt.ensembles: no ensemble for variable {name!r}")
            e = ens[name]
            where = f"config.rmt.ensembles.{name}"
            _check_keys(e, _ENSEMBLE_KEYS, where)
            kind = e.get("kind")
            cplx = bool(e.get("complex", False))
            if kind == "wigner":
                specs[name] = rmt.EnsembleSpec("wigner", N, complex_entries=cplx)
            elif kind == "wishart":
                ratio = _number(e, "ratio", where)
                if ratio <= 0:
                    raise ConfigError(f"{where}.ratio: must be positive")
                specs[name] = rmt.EnsembleSpec("wishart", N, max(1, round(ratio * N)), 0, cplx)
            else:
                raise ConfigError(f"{where}.kind: unknown ensemble {kind!r}")
        for extra in ens:
            if extra not in specs:
                raise ConfigError(f"config.rmt.ensembles: unknown variable {extra!r}")
        out["rmt"] = {
            "specs": specs,
            "N": N,
            "trials": _number(r, "trials", "config.rmt", int, default=1, minimum=1),
            "seed": _number(r, "seed", "config.rmt", int, default=0, minimum=0),
        }
    elif "rmt" in cfg:
        raise ConfigError(f"config.rmt: only used by the compare task, not {task!r}")
    return out


def _mode(task, cfg):
    """``density`` or ``brown`` for the analytic part of a task."""
    pencil, poly = cfg["pencil"], cfg["poly"]
    if task == "density":
        if pencil is not None and pencil.corner != 1:
            raise ConfigError("config: density task needs a corner-1 (selfadjoint) pencil")
        if poly is not None and not is_selfadjoint(poly):
            raise ConfigError("config.expression: density task needs a selfadjoint expression")
        return "density"
    if task == "brown":
        if pencil is not None and pencil.corner != 2:
            raise ConfigError("config: brown task needs a corner-2 (hermitized) pencil")
        return "brown"
    # compare: selfadjoint expressions get densities, others Brown fields
    return "density" if is_selfadjoint(poly) else "brown"


def config_hash(cfg_obj):
    text = json.dumps(cfg_obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# -------------------------------------------------------------------- tasks

def _fmt(x):
    return repr(float(x))


def _header(cfg, digest, extra):
    lines = [f"freeconv {__version__}", f"config-sha256 {digest}", f"task {cfg['task']}"]
    return lines + list(extra)


def _write(path, header, column_line, rows, summary):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write(column_line + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
        for line in summary:
            fh.write(f"# {line}\n")


def _gnuplot(path, mode, csv_path, spectrum_path=None):
    name = os.path.basename(csv_path)
    lines = ["set datafile separator ','", "set datafile commentschars '#'"]
    if mode == "density":
        lines += ["set xlabel 't'", "set ylabel 'density'",
                  f"plot '{name}' every ::1 using 1:2 with lines title 'density'"]
        if spectrum_path:
            sp = os.path.basename(spectrum_path)
            lines[-1] += (f", '{sp}' using 1:(1) smooth kdensity bandwidth 0.05 "
                          "with lines title 'eigenvalues'")
    else:
        lines += ["set xlabel 'Re'", "set ylabel 'Im'", "set view map", "set size ratio -1",
                  f"splot '{name}' every ::1 using 1:2:3 with image title 'Brown density'"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _pencil_for(cfg):
    if cfg["pencil"] is not None:
        return cfg["pencil"]
    if cfg["mode"] == "density":
        return linpen.linearize_sa(cfg["poly"])
    return linpen.hermitized_linearize(cfg["poly"])


def _run_density(cfg, digest):
    pencil = _pencil_for(cfg)

    def evaluator(z):
        return subord.scalar_cauchy(pencil, cfg["laws"], z, cfg["opts"])

    curve = recover.density_1d(evaluator, cfg["grid"], cfg["epsilon"])
    g = cfg["grid"]
    header = _header(cfg, digest, [
        "epsilon " + " ".join(_fmt(e) for e in curve.epsilon_used),
        f"grid {_fmt(g[0])} {_fmt(g[-1])} {g.size}",
    ])
    atoms = "none" if not curve.atoms else ";".join(f"{_fmt(t)}:{_fmt(m)}" for t, m in curve.atoms)
    summary = [f"summary mass={curve.mass:.6f} atoms={atoms}"]
    _write(cfg["output"], header, "t,density", zip(curve.grid, curve.values), summary)
    return curve, summary


def _run_brown(cfg, digest):
    pencil = _pencil_for(cfg)
    field = recover.brown_field(pencil, cfg["laws"], cfg["re"], cfg["im"], cfg["epsilon"], cfg["opts"])
    re, im = field.re, field.im
    header = _header(cfg, digest, [
        f"epsilon {_fmt(field.epsilon)}",
        f"grid re {_fmt(re[0])} {_fmt(re[-1])} {re.size} im {_fmt(im[0])} {_fmt(im[-1])} {im.size}",
        f"fd_step {_fmt(field.fd_step[0])} {_fmt(field.fd_step[1])}",
    ])
    rows = ((re[i], im[j], field.values[j, i]) for j in range(im.size) for i in range(re.size))
    summary = [f"summary mass={field.mass:.6f} failed_nodes={field.failed_count}"]
    _write(cfg["output"], header, "re,im,density", rows, summary)
    return field, summary


def _run_compare(cfg, digest):
    analytic, summary = (_run_density if cfg["mode"] == "density" else _run_brown)(cfg, digest)
    r = cfg["rmt"]
    spectra = [rmt.poly_spectrum(cfg["poly"], r["specs"], r["N"], r["seed"], trial=k)
               for k in range(r["trials"])]
    spectrum = np.concatenate(spectra)
    dist = rmt.compare(spectrum, analytic)
    stem, _ = os.path.splitext(cfg["output"])
    spath = stem + ".spectrum.csv"
    rmt.write_spectrum(spath, spectrum, header=_header(cfg, digest, [
        f"rmt N={r['N']} trials={r['trials']} seed={r['seed']}"]))
    parts = [f"{k}={_fmt(v) if isinstance(v, float) else v}" for k, v in dist.as_dict().items()
             if k != "centroid"]
    line = "distance " + " ".join(parts)
    with open(cfg["output"], "a", encoding="utf-8") as fh:
        fh.write(f"# {line}\n")
    return analytic, summary + [line], spath


def run(config_path, stdout=None):
    stdout = stdout or sys.stdout
    cfg = load_config(config_path)
    with open(config_path, encoding="utf-8") as fh:
        digest = config_hash(json.load(fh))
    if cfg["task"] == "selfcheck":
        return selfcheck(stdout=stdout)
    spath = None
    try:
        if cfg["task"] == "density":
            _, summary = _run_density(cfg, digest)
        elif cfg["task"] == "brown":
            _, summary = _run_brown(cfg, digest)
        else:
            _, summary, spath = _run_compare(cfg, digest)
    except PencilError as exc:
        raise ConfigError(str(exc)) from None
    if cfg["plot"]:
        stem, _ = os.path.splitext(cfg["output"])
        _gnuplot(stem + ".gp", cfg["mode"], cfg["output"], spath)
    for line in summary:
        print(line, file=stdout)
    return EXIT_OK


# --------------------------------------------------------------- selfcheck

TOLERANCES = {
    "semicircle_2i": 1e-12,
    "mp_quadrature": 1e-8,
    "free_add_semicircles": 1e-10,
    "subordination_mp": 1e-8,
    "pencil_sa": 1e-8,
    "pencil_hermitized": 1e-8,
    "brown_atom_g": 1e-10,
    "brown_atom_mass": 1e-2,
}


def _checks():
    sc = laws.Semicircle()
    mp = laws.MarchenkoPastur(0.25)
    yield "semicircle_2i", abs(laws.cauchy_scalar(sc, 2j) - 1j * (1 - np.sqrt(2)))
    pts = [1 + 1j, 0.5 + 0.2j, 2 + 0.1j, -0.5 + 0.5j, 3 + 2j]
    yield "mp_quadrature", max(abs(mp.cauchy(z) - mp.cauchy_quadrature(z)) for z in pts)
    term = subord.LawTerm(sc, np.eye(1))
    _, G = subord.free_add(term, term, np.array([[4j]]))
    yield "free_add_semicircles", abs(G[0, 0] - 1j * (4 - 2 * np.sqrt(6)) / 4)
    z = np.array([1 + 1j, 0.3 + 0.05j, 2.5 + 0.1j])
    g = subord.scalar_cauchy(parse("x+y", ["x", "y"]), {"x": sc, "y": mp}, z)
    yield "subordination_mp", float(np.max(np.abs(g - mp.cauchy(z - g))))
    p = parse("x*y+y*x+x^2", ["x", "y"])
    yield "pencil_sa", linpen.verify_pencil(linpen.linearize_sa(p), p, trials=20, size=5).max_residual
    q = parse("x*y", ["x", "y"])
    yield "pencil_hermitized", linpen.verify_pencil(
        linpen.hermitized_linearize(q), q, trials=20, size=4).max_residual
    c, eps = 0.25, 0.05
    s = np.linspace(-1.75, 2.25, 161)
    pen = linpen.hermitized_linearize(parse("x", ["x"]))
    field = recover.brown_field(pen, {"x": laws.Atomic((c,), (1.0,))}, s, s, eps=eps)
    lam = s[None, :] + 1j * s[:, None]
    exact = np.conj(lam - c) / (np.abs(lam - c) ** 2 + eps**2)
    yield "brown_atom_g", float(np.max(np.abs(field.g - exact)))
    yield "brown_atom_mass", abs(field.mass - 1.0)


def selfcheck(stdout=None, tolerance_scale=1.0):
    """Run the built-in checks; returns the exit code (0 iff all pass)."""
    stdout = stdout or sys.stdout
    ok = True
    for name, value in _checks():
        tol = TOLERANCES[name] * tolerance_scale
        passed = bool(np.isfinite(value) and value <= tol)
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name}: {value:.3e} (tol {tol:.1e})", file=stdout)
    print(f"selfcheck {'passed' if ok else 'FAILED'}", file=stdout)
    return EXIT_OK if ok else EXIT_CHECK


# ------------------------------------------------------------ verify-pencil

def verify_pencil_cmd(pencil_path, expr, trials=50, size=5, seed=0, stdout=None):
    stdout = stdout or sys.stdout
    try:
        pencil = linpen.read_pencil(pencil_path)
    except OSError as exc:
        raise ConfigError(f"cannot read pencil file {pencil_path}: {exc.strerror}") from None
    except PencilError as exc:
        raise ConfigError(str(exc)) from None
    try:
        poly = parse(expr, pencil.variables)
    except ParseError as exc:
        raise ConfigError(f"expression: {exc}") from None
    report = linpen.verify_pencil(pencil, poly, trials=trials, size=size, seed=seed)
    print(str(report), file=stdout)
    return EXIT_OK if report.passed else EXIT_CHECK


# --------------------------------------------------------------------- main

def _parser():
    ap = argparse.ArgumentParser(prog="freeconv", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"freeconv {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a configured task")
    r.add_argument("config")
    sub.add_parser("selfcheck", help="run built-in closed-form and oracle checks")
    v = sub.add_parser("verify-pencil", help="certify a pencil file against an expression")
    v.add_argument("pencil_file")
    v.add_argument("expr")
    v.add_argument("--trials", type=int, default=50)
    v.add_argument("--size", type=int, default=5)
    v.add_argument("--seed", type=int, default=0)
    return ap


def main(argv=None):
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.command == "run":
            return run(args.config)
        if args.command == "selfcheck":
            return selfcheck()
        return verify_pencil_cmd(args.pencil_file, args.expr, args.trials, args.size, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FreeconvError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure ({type(exc).__name__} in {_origin(exc)}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def _origin(exc):
    """Innermost freeconv module on the traceback of ``exc``."""
    name = "freeconv"
    tb = exc.__traceback__
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("freeconv."):
            name = mod
        tb = tb.tb_next
    return name


if __name__ == "__main__":
    sys.exit(main())
