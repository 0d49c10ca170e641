"""Batch front end: JSON configs in, one self-describing JSON document out.

Every run echoes its normalized inputs and engine settings next to the
results, so a result file is reproducible from itself.  Timestamps live in a
separate `meta` block that the compare mode ignores; everything else is
emitted deterministically (sorted keys, fixed indentation).

Exit codes: 0 success, 2 config error, 3 engine error, 4 positivity failure
of the stiffness form.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import datetime
import json
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import birman_schwinger as bs
from . import floquet, susy
from ._piecewise import PiecewisePoly, fit_callable
from .coefficients import (
    MiuraField,
    ModelSpec,
    PeriodicPotential,
    SignedWeight,
    build_model,
    miura_forward,
    step_field,
)
from .errors import ConfigError, EngineError, LeftspecError, PositivityError

SCHEMA_VERSION = 1

TASKS = ("bands", "eigs", "bs", "susy", "miura", "validate")


@dataclass
class RunConfig:
    """Validated run description (one task, one model, one or more thetas)."""

    task: str
    q: PeriodicPotential = None
    r: SignedWeight = None
    thetas: tuple = (0.0,)
    z_range: tuple = (0.0, 30.0)
    N: int = 64
    tol: float = 1e-10
    n_scan: int = None
    zeta_threshold: float = None
    field_phi: MiuraField = None
    partner: str = "partner1"
    out: str = None
    inputs_echo: dict = field(default_factory=dict)


# -- strict schema walking -----------------------------------------------------


def _expect(cond, path, msg):
    if not cond:
        raise ConfigError(f"{path}: {msg}")


def _known_keys(obj, path, allowed):
    for k in obj:
        if k not in allowed:
            raise ConfigError(f"{path}.{k}: unknown field (strict mode)")


def _number(obj, path, lo=None, hi=None, strict_lo=False):
    _expect(isinstance(obj, (int, float)) and not isinstance(obj, bool), path,
            "expected a number")
    v = float(obj)
    _expect(np.isfinite(v), path, "must be finite")
    if lo is not None:
        _expect(v > lo if strict_lo else v >= lo, path,
                f"must be {'>' if strict_lo else '>='} {lo}")
    if hi is not None:
        _expect(v < hi, path, f"must be < {hi}")
    return v


def _pieces(obj, path, omega):
    _expect(isinstance(obj, list) and obj, path, "expected a nonempty list of pieces")
    breaks, coeffs = [], []
    for i, item in enumerate(obj):
        p = f"{path}[{i}]"
        _expect(isinstance(item, list) and len(item) == 2, p,
                "expected [breakpoint, [coefficients...]]")
        breaks.append(_number(item[0], f"{p}[0]", lo=0.0, hi=omega))
        _expect(isinstance(item[1], list) and item[1], f"{p}[1]",
                "expected a nonempty coefficient list")
        coeffs.append(np.array([_number(c, f"{p}[1][{j}]")
                                for j, c in enumerate(item[1])]))
    try:
        return PiecewisePoly(omega, tuple(breaks), tuple(coeffs))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _atoms(obj, path, omega):
    _expect(isinstance(obj, list), path, "expected a list of [position, weight]")
    out = []
    for i, item in enumerate(obj):
        p = f"{path}[{i}]"
        _expect(isinstance(item, list) and len(item) == 2, p,
                "expected [position, weight]")
        pos = _number(item[0], f"{p}[0]")
        w = _number(item[1], f"{p}[1]")
        _expect(w != 0.0, f"{p}[1]", "atoms must have nonzero weight")
        out.append((pos, w))
    return tuple(out)


def _trig(obj, path, omega, tol=1e-10):
    _known_keys(obj, path, {"constant", "cos", "sin"})
    c0 = _number(obj.get("constant", 0.0), f"{path}.constant")
    cs = [_number(v, f"{path}.cos[{i}]") for i, v in enumerate(obj.get("cos", []))]
    sn = [_number(v, f"{path}.sin[{i}]") for i, v in enumerate(obj.get("sin", []))]

    def f(x):
        val = c0
        for k, a in enumerate(cs, start=1):
            val += a * np.cos(2 * np.pi * k * x / omega)
        for k, b in enumerate(sn, start=1):
            val += b * np.sin(2 * np.pi * k * x / omega)
        return val

    if not cs and not sn:
        return PiecewisePoly.constant(omega, c0)
    return fit_callable(f, omega, tol=tol)


def _parse_model(obj, path):
    _expect(isinstance(obj, dict), path, "expected an object")
    if "preset" in obj:
        _known_keys(obj, path, {"preset", "params"})
        name = obj["preset"]
        _expect(isinstance(name, str), f"{path}.preset", "expected a string")
        params = obj.get("params", {})
        _expect(isinstance(params, dict), f"{path}.params", "expected an object")
        return build_model(ModelSpec(name, dict(params)))
    _known_keys(obj, path, {"inline"})
    _expect("inline" in obj, path, "expected 'preset' or 'inline'")
    m = obj["inline"]
    allowed = {
        "omega", "q1", "q_density_pieces", "q_atoms", "q2_pieces", "q_fourier",
        "r_density_pieces", "r_atoms", "r_fourier",
    }
    _known_keys(m, f"{path}.inline", allowed)
    _expect("omega" in m, f"{path}.inline", "missing field omega")
    omega = _number(m["omega"], f"{path}.inline.omega", lo=0.0, strict_lo=True)
    q1 = _number(m.get("q1", 0.0), f"{path}.inline.q1")
    try:
        if "q2_pieces" in m:
            _expect("q_density_pieces" not in m and "q_fourier" not in m,
                    f"{path}.inline", "q2_pieces excludes other q descriptions")
            q = PeriodicPotential.from_q2(
                omega, q1, _pieces(m["q2_pieces"], f"{path}.inline.q2_pieces", omega)
            )
            if "q_atoms" in m:
                extra = _atoms(m["q_atoms"], f"{path}.inline.q_atoms", omega)
                q = PeriodicPotential(omega, q.q1, q.density, q.atoms + extra)
        else:
            if "q_fourier" in m:
                dens = _trig(m["q_fourier"], f"{path}.inline.q_fourier", omega)
            elif "q_density_pieces" in m:
                dens = _pieces(m["q_density_pieces"],
                               f"{path}.inline.q_density_pieces", omega)
            else:
                dens = None
            q = PeriodicPotential(
                omega, q1, dens,
                _atoms(m.get("q_atoms", []), f"{path}.inline.q_atoms", omega),
            )
        if "r_fourier" in m:
            rd = _trig(m["r_fourier"], f"{path}.inline.r_fourier", omega)
        elif "r_density_pieces" in m:
            rd = _pieces(m["r_density_pieces"],
                         f"{path}.inline.r_density_pieces", omega)
        else:
            rd = None
        r = SignedWeight(
            omega, rd, _atoms(m.get("r_atoms", []), f"{path}.inline.r_atoms", omega)
        )
    except ValueError as exc:
        raise ConfigError(f"{path}.inline: {exc}") from exc
    return q, r


def _parse_field(obj, path, omega):
    _expect(isinstance(obj, dict), path, "expected an object")
    _expect("type" in obj, path, "missing field type")
    kind = obj["type"]
    if kind == "step":
        _known_keys(obj, path, {"type", "alpha", "x0"})
        alpha = _number(obj.get("alpha", 1.0), f"{path}.alpha")
        _expect(alpha != 0.0, f"{path}.alpha", "must be nonzero")
        x0 = _number(obj.get("x0", omega / 2.0), f"{path}.x0")
        return step_field(alpha, x0, omega)
    if kind == "fourier":
        sub = {k: v for k, v in obj.items() if k != "type"}
        return MiuraField(omega, _trig(sub, path, omega))
    if kind == "pieces":
        _known_keys(obj, path, {"type", "pieces"})
        _expect("pieces" in obj, path, "missing field pieces")
        return MiuraField(omega, _pieces(obj["pieces"], f"{path}.pieces", omega))
    raise ConfigError(f"{path}.type: unknown field type {kind!r}")


def parse_config(text):
    """Parse and validate a JSON config; field-precise diagnostics, strict keys."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config syntax: line {exc.lineno} col {exc.colno}: {exc.msg}")
    _expect(isinstance(obj, dict), "config", "top level must be an object")
    allowed = {
        "schema_version", "task", "model", "theta", "theta_grid", "z_range",
        "modes", "tol", "n_scan", "zeta_threshold", "field", "partner", "out",
    }
    _known_keys(obj, "config", allowed)
    ver = obj.get("schema_version", SCHEMA_VERSION)
    _expect(ver == SCHEMA_VERSION, "config.schema_version",
            f"unsupported version {ver} (this build reads {SCHEMA_VERSION})")
    _expect("task" in obj, "config", "missing field task")
    task = obj["task"]
    _expect(task in TASKS, "config.task", f"must be one of {', '.join(TASKS)}")

    cfg = RunConfig(task=task)
    _expect("model" in obj or task in ("susy", "miura"), "config",
            "missing field model")
    if "model" in obj:
        cfg.q, cfg.r = _parse_model(obj["model"], "config.model")
    omega = cfg.q.omega if cfg.q is not None else None

    _expect(not ("theta" in obj and "theta_grid" in obj), "config",
            "give theta or theta_grid, not both")
    if "theta" in obj:
        cfg.thetas = (_number(obj["theta"], "config.theta", lo=0.0,
                              hi=2 * np.pi),)
    elif "theta_grid" in obj:
        grid = obj["theta_grid"]
        _expect(isinstance(grid, list) and grid, "config.theta_grid",
                "expected a nonempty list")
        cfg.thetas = tuple(
            _number(t, f"config.theta_grid[{i}]", lo=0.0, hi=2 * np.pi)
            for i, t in enumerate(grid)
        )
    if "z_range" in obj:
        zr = obj["z_range"]
        _expect(isinstance(zr, list) and len(zr) == 2, "config.z_range",
                "expected [zmin, zmax]")
        lo = _number(zr[0], "config.z_range[0]")
        hi = _number(zr[1], "config.z_range[1]")
        _expect(lo < hi, "config.z_range", "zmin must be below zmax")
        cfg.z_range = (lo, hi)
    if "modes" in obj:
        n = obj["modes"]
        _expect(isinstance(n, int) and not isinstance(n, bool) and n >= 4,
                "config.modes", "expected an integer >= 4")
        cfg.N = n
    if "tol" in obj:
        cfg.tol = _number(obj["tol"], "config.tol", lo=0.0, strict_lo=True)
    if "n_scan" in obj and obj["n_scan"] is not None:
        n = obj["n_scan"]
        _expect(isinstance(n, int) and n >= 2, "config.n_scan",
                "expected an integer >= 2")
        cfg.n_scan = n
    if "zeta_threshold" in obj and obj["zeta_threshold"] is not None:
        cfg.zeta_threshold = _number(obj["zeta_threshold"],
                                     "config.zeta_threshold", lo=0.0)
    if "partner" in obj:
        _expect(obj["partner"] in ("partner1", "partner2"), "config.partner",
                "must be partner1 or partner2")
        cfg.partner = obj["partner"]
    if task in ("susy", "miura"):
        _expect("field" in obj, "config", f"task {task} needs a field block")
        if omega is None:
            fld = obj["field"]
            _expect(isinstance(fld, dict) and "omega" in fld, "config.field",
                    "needs omega when no model is given")
            omega = _number(fld["omega"], "config.field.omega", lo=0.0,
                            strict_lo=True)
            fld = {k: v for k, v in fld.items() if k != "omega"}
            cfg.field_phi = _parse_field(fld, "config.field", omega)
        else:
            cfg.field_phi = _parse_field(obj["field"], "config.field", omega)
    elif "field" in obj:
        raise ConfigError(f"config.field: only valid for susy/miura tasks")
    if "out" in obj:
        _expect(isinstance(obj["out"], str), "config.out", "expected a string")
        cfg.out = obj["out"]
    cfg.inputs_echo = {k: obj[k] for k in sorted(obj) if k != "out"}
    return cfg


# -- serialization ----------------------------------------------------------------


def potential_to_dict(q):
    return {
        "omega": q.omega,
        "q1": q.q1,
        "density_pieces": [[b, list(c)] for b, c in zip(q.density.breaks,
                                                        q.density.coeffs)],
        "atoms": [[p, w] for p, w in q.atoms],
        "q1_canonical": q.q1_canonical,
        "q2_pieces": [[b, list(map(float, c))] for b, c in q.q2_pieces],
        "q2_jumps": [[p, j] for p, j in q.q2_jumps],
    }


def potential_from_dict(d):
    breaks = tuple(b for b, _ in d["density_pieces"])
    coeffs = tuple(np.array(c) for _, c in d["density_pieces"])
    dens = PiecewisePoly(d["omega"], breaks, coeffs)
    return PeriodicPotential(d["omega"], d["q1"], dens,
                             tuple((p, w) for p, w in d["atoms"]))


def weight_to_dict(r):
    return {
        "omega": r.omega,
        "density_pieces": [[b, list(c)] for b, c in zip(r.density.breaks,
                                                        r.density.coeffs)],
        "atoms": [[p, w] for p, w in r.atoms],
    }


# -- task execution ----------------------------------------------------------------


def _run_bands(cfg):
    bands = floquet.stability_intervals(cfg.q, cfg.r, cfg.z_range,
                                        n_scan=cfg.n_scan, tol=cfg.tol)
    pen = floquet._Pencil(cfg.q, cfg.r)
    zs = (np.linspace(*cfg.z_range, cfg.n_scan) if cfg.n_scan
          else floquet._sqrt_grid(*cfg.z_range, 40.0))
    tr = pen.trace_batch(zs, cfg.tol).real
    return {
        "intervals": [list(iv) for iv in bands.intervals],
        "components": [list(iv) for iv in bands.components],
        "warnings": list(bands.warnings),
        "scan": {"z": [float(z) for z in zs], "trace": [float(t) for t in tr]},
    }


def _per_theta(cfg, fn):
    if len(cfg.thetas) == 1:
        return [fn(cfg.thetas[0])]
    with concurrent.futures.ThreadPoolExecutor(
        max_workers=min(4, len(cfg.thetas))
    ) as ex:
        results = list(ex.map(fn, cfg.thetas))
    return [res for _, res in sorted(zip(cfg.thetas, results), key=lambda p: p[0])]


def _run_eigs(cfg):
    def one(theta):
        res = floquet.theta_eigenvalues(cfg.q, cfg.r, theta, cfg.z_range,
                                        tol=cfg.tol, n_scan=cfg.n_scan)
        return {
            "theta": theta,
            "values": [float(v) for v in res.values],
            "multiplicities": list(res.multiplicities),
            "unresolved": [list(iv) for iv in res.unresolved],
        }

    return {"theta_runs": _per_theta(cfg, one)}


def _run_bs(cfg):
    def one(theta):
        sp = bs.bs_spectrum(cfg.q, cfg.r, theta, cfg.N, cfg.zeta_threshold)
        return {
            "theta": theta,
            "zeta": [float(z) for z in sp.zeta],
            "z_values": [float(z) for z in sp.z_values],
            "counts": list(sp.counts),
            "threshold": sp.threshold,
            "min_eig_G": sp.min_eig_G,
        }

    return {"theta_runs": _per_theta(cfg, one)}


def _run_validate(cfg):
    def one(theta):
        cv = bs.cross_validate(cfg.q, cfg.r, theta, cfg.N, cfg.z_range,
                               tol=cfg.tol)
        return {
            "theta": theta,
            "floquet": [float(v) for v in cv.floquet],
            "bs_refined": [float(v) for v in cv.bs_refined],
            "bs_raw": [float(v) for v in cv.bs_raw],
            "rel_mismatch": [float(v) for v in cv.rel_mismatch],
            "rel_mismatch_raw": [float(v) for v in cv.rel_mismatch_raw],
            "max_rel_mismatch": cv.max_rel_mismatch,
            "unmatched_floquet": list(cv.unmatched_floquet),
            "unmatched_bs": list(cv.unmatched_bs),
        }

    return {"theta_runs": _per_theta(cfg, one)}


def _run_susy(cfg):
    phi = cfg.field_phi

    def one(theta):
        d = susy.dirac_spectrum(phi, theta, cfg.N)
        s1, s2 = susy.schrodinger_pair_spectra(phi, theta, cfg.N)
        iso = susy.isospectral_check(phi, theta, cfg.N, tol=cfg.tol)
        tr = susy.eigvec_transfer_check(phi, theta, cfg.N, tol=cfg.tol)
        sq = susy.dirac_square_check(phi, theta, cfg.N, tol=cfg.tol)
        return {
            "theta": theta,
            "dirac": [float(v) for v in d],
            "t1": [float(v) for v in s1],
            "t2": [float(v) for v in s2],
            "isospectral": {
                "max_rel_mismatch": iso.max_rel_mismatch,
                "kernel_dim_1": iso.kernel_dim_1,
                "kernel_dim_2": iso.kernel_dim_2,
            },
            "transfer": {
                "max_residual": tr.max_residual,
                "norm_identity_error": tr.norm_identity_error,
                "n_pairs": tr.n_pairs,
            },
            "square": {"max_mismatch": sq.max_mismatch},
        }

    return {"theta_runs": _per_theta(cfg, one)}


def _run_miura(cfg):
    q = miura_forward(cfg.field_phi, sign=cfg.partner)
    return {
        "partner": cfg.partner,
        "field_mean": cfg.field_phi.mean(),
        "potential": potential_to_dict(q),
    }


_RUNNERS = {
    "bands": _run_bands,
    "eigs": _run_eigs,
    "bs": _run_bs,
    "susy": _run_susy,
    "miura": _run_miura,
    "validate": _run_validate,
}


def run(cfg):
    """Execute a validated config; returns the result document."""
    t0 = time.time()
    results = _RUNNERS[cfg.task](cfg)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "task": cfg.task,
        "inputs": cfg.inputs_echo,
        "engine": {
            "modes": cfg.N,
            "tol": cfg.tol,
            "n_scan": cfg.n_scan,
            "scan_density": 40.0,
            "thetas": list(cfg.thetas),
            "z_range": list(cfg.z_range),
        },
        "results": results,
        "meta": {
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "runtime_seconds": round(time.time() - t0, 3),
        },
    }
    return doc


def render_document(doc):
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def strip_meta(doc):
    return {k: v for k, v in doc.items() if k != "meta"}


def compare_documents(a, b):
    """Structural equality of two result documents, metadata excluded."""
    return strip_meta(a) == strip_meta(b)


def _csv_rows(doc):
    task = doc["task"]
    res = doc["results"]
    if task == "bands":
        yield "kind,lo,hi"
        for lo, hi in res["intervals"]:
            yield f"interval,{lo!r},{hi!r}"
        for lo, hi in res["components"]:
            yield f"component,{lo!r},{hi!r}"
    elif task in ("eigs",):
        yield "theta,z,multiplicity"
        for run_ in res["theta_runs"]:
            for z, m in zip(run_["values"], run_["multiplicities"]):
                yield f"{run_['theta']!r},{z!r},{m}"
    elif task == "bs":
        yield "theta,index,zeta,z"
        for run_ in res["theta_runs"]:
            zv = dict(enumerate(run_["z_values"]))
            for i, z in enumerate(run_["zeta"]):
                yield f"{run_['theta']!r},{i},{z!r},{zv.get(i, '')!r}"
    elif task == "validate":
        yield "theta,floquet,bs_refined,rel_mismatch"
        for run_ in res["theta_runs"]:
            for fz, bz, m in zip(run_["floquet"], run_["bs_refined"],
                                 run_["rel_mismatch"]):
                yield f"{run_['theta']!r},{fz!r},{bz!r},{m!r}"
    elif task == "susy":
        yield "theta,operator,index,value"
        for run_ in res["theta_runs"]:
            for name in ("dirac", "t1", "t2"):
                for i, v in enumerate(run_[name]):
                    yield f"{run_['theta']!r},{name},{i},{v!r}"
    elif task == "miura":
        yield "kind,position,value"
        pot = res["potential"]
        yield f"constant,,{pot['q1']!r}"
        for p, w in pot["atoms"]:
            yield f"atom,{p!r},{w!r}"
    else:  # pragma: no cover
        raise EngineError("cli", f"no csv emitter for task {task}")


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="leftspec",
        description="Spectral engines for periodic left-definite pencils "
        "with measure coefficients",
    )
    ap.add_argument("task", choices=TASKS, help="what to compute")
    ap.add_argument("--config", required=True, help="path to a JSON config")
    ap.add_argument("--out", default=None, help="write the result document here")
    ap.add_argument("--theta", type=float, default=None, help="override theta")
    ap.add_argument("--zmin", type=float, default=None, help="override z_range[0]")
    ap.add_argument("--zmax", type=float, default=None, help="override z_range[1]")
    ap.add_argument("--modes", type=int, default=None, help="override mode count N")
    ap.add_argument("--tol", type=float, default=None, help="override tolerance")
    ap.add_argument("--csv", action="store_true",
                    help="emit a flat csv table instead of the JSON document")
    ap.add_argument("--compare", default=None, metavar="PATH",
                    help="diff the result against an existing document "
                    "(metadata ignored); exit 1 on difference")
    args = ap.parse_args(argv)

    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error (cli): cannot read config: {exc}", file=sys.stderr)
        return 2

    try:
        cfg = parse_config(text)
        if cfg.task != args.task:
            raise ConfigError(
                f"config.task: config says {cfg.task!r} but the command line "
                f"asked for {args.task!r}"
            )
        if args.theta is not None:
            if not 0.0 <= args.theta < 2 * np.pi:
                raise ConfigError("--theta: must lie in [0, 2*pi)")
            cfg.thetas = (args.theta,)
            cfg.inputs_echo["theta"] = args.theta
            cfg.inputs_echo.pop("theta_grid", None)
        if args.zmin is not None or args.zmax is not None:
            lo = args.zmin if args.zmin is not None else cfg.z_range[0]
            hi = args.zmax if args.zmax is not None else cfg.z_range[1]
            if not lo < hi:
                raise ConfigError("--zmin/--zmax: zmin must be below zmax")
            cfg.z_range = (lo, hi)
            cfg.inputs_echo["z_range"] = [lo, hi]
        if args.modes is not None:
            if args.modes < 4:
                raise ConfigError("--modes: must be >= 4")
            cfg.N = args.modes
            cfg.inputs_echo["modes"] = args.modes
        if args.tol is not None:
            if not args.tol > 0:
                raise ConfigError("--tol: must be positive")
            cfg.tol = args.tol
            cfg.inputs_echo["tol"] = args.tol
        doc = run(cfg)
    except ConfigError as exc:
        print(f"error (config): {exc}", file=sys.stderr)
        return 2
    except PositivityError as exc:
        print(f"error (birman_schwinger): {exc}", file=sys.stderr)
        return 4
    except EngineError as exc:
        print(f"error ({exc.module}): {exc}", file=sys.stderr)
        return 3
    except LeftspecError as exc:
        print(f"error (engine): {exc}", file=sys.stderr)
        return 3

    payload = ("\n".join(_csv_rows(doc)) + "\n") if args.csv else render_document(doc)
    out_path = args.out or cfg.out
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)

    if args.compare:
        try:
            with open(args.compare) as fh:
                other = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error (cli): cannot read comparison document: {exc}",
                  file=sys.stderr)
            return 2
        if not compare_documents(doc, other):
            print("documents differ (metadata ignored)", file=sys.stderr)
            return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
