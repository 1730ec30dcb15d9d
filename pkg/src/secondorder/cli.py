"""Command-line experiment runner.

Every subcommand reads an optional JSON config (``--config``); command-line
flags override config values. Output goes to ``--out`` (stdout if absent)
as CSV or JSON. CSV files start with a comment line carrying the config hash
and seed, so identical inputs produce byte-identical files.

Exit codes: 0 success, 1 invalid input or configuration, 2 numeric failure
(including a failed ``check``).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import acceptance, frechet, quadrature, statistics, transforms
from .ensembles import (
    EnsembleSpec,
    THREADS_ENV,
    dump_matrix_binary,
    sample_spectra,
)
from .errors import NumericFailure, SecondOrderError
from .moments import MomentTable, g2_series
from .rng import RngStream

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2

COMMANDS = ("sample", "covariance", "g2", "rho", "clt", "check", "frechet")

_matrix = {
    "oneOf": [
        {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
        {"type": "object", "required": ["re"], "properties": {"re": {}, "im": {}}},
    ]
}
_function = {
    "oneOf": [
        {"type": "string"},
        {"type": "object", "required": ["poly"], "properties": {"poly": {"type": "array", "items": {"type": "number"}}},
         "additionalProperties": False},
    ]
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "ensemble": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["gue", "block", "additive"]},
                "n": {"type": "integer", "minimum": 1},
                "M_bound": {"type": "number", "exclusiveMinimum": 2},
                "blocks": {"type": "array", "minItems": 1, "items": _matrix},
                "A": _matrix,
                "B": _matrix,
            },
        },
        "N": {"type": "integer", "minimum": 1},
        "N_values": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
        "replicas": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "f": _function,
        "g": _function,
        "functions": {"type": "array", "items": _function},
        "rho_target": {"type": "number", "exclusiveMinimum": 0},
        "contour": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rz": {"type": "number", "exclusiveMinimum": 0},
                "rw": {"type": "number", "exclusiveMinimum": 0},
                "nodes": {"type": "integer", "minimum": 16},
            },
        },
        "z": {"type": "string"},
        "w": {"type": "string"},
        "grid": {"type": "boolean"},
        "grid_points": {"type": "integer", "minimum": 2},
        "degree": {"type": "integer", "minimum": 0},
        "what": {"enum": ["spectra", "matrix"]},
        "mesh": {"type": "string"},
        "mode": {"enum": ["exact", "upper_bound"]},
        "only": {"type": "array", "items": {"type": "integer", "minimum": 1, "maximum": 10}},
        "out": {"type": "string"},
        "format": {"enum": ["csv", "json", "bin"]},
        "threads": {"type": "integer", "minimum": 1},
    },
}


class ValidationFailure(Exception):
    pass


def _matrix_from(value) -> np.ndarray:
    if isinstance(value, dict):
        re = np.asarray(value["re"], dtype=float)
        im = np.asarray(value.get("im", np.zeros_like(re)), dtype=float)
        return re + 1j * im
    return np.asarray(value, dtype=float)


def build_ensemble(desc: dict | None) -> EnsembleSpec:
    desc = desc or {"kind": "gue"}
    kind = desc["kind"]
    if kind == "gue":
        return EnsembleSpec.gue(desc.get("n"), desc.get("M_bound", 3.0))
    if kind == "block":
        if "blocks" not in desc:
            raise ValidationFailure("ensemble.blocks: required for kind 'block'")
        return EnsembleSpec.block_gaussian([_matrix_from(b) for b in desc["blocks"]], desc.get("n"))
    for key in ("A", "B"):
        if key not in desc:
            raise ValidationFailure(f"ensemble.{key}: required for kind 'additive'")
    return EnsembleSpec.additive(_matrix_from(desc["A"]), _matrix_from(desc["B"]))


def build_function(desc) -> statistics.TestFunction:
    if isinstance(desc, dict):
        return statistics.polynomial_test_function(desc["poly"])
    return statistics.named_test_function(desc)


def parse_complex(text: str) -> complex:
    try:
        return complex(str(text).replace(" ", "").replace("i", "j"))
    except ValueError:
        raise ValidationFailure(f"not a complex number: {text!r}") from None


# Keys that do not change the numbers produced.
_UNHASHED = ("out", "threads")


def config_hash(config: dict) -> str:
    canon = json.dumps({k: v for k, v in config.items() if k not in _UNHASHED}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


# -- output ----------------------------------------------------------------


def _cell(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render_csv(rows: list[dict], config: dict) -> str:
    buf = io.StringIO()
    buf.write(f"# config_sha256={config_hash(config)} seed={config.get('seed', 0)}\n")
    if rows:
        cols = list(rows[0])
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r.get(c, "")) for c in cols])
    return buf.getvalue()


def render_json(payload, config: dict) -> str:
    doc = {"config_sha256": config_hash(config), "seed": config.get("seed", 0), "config": config, "result": payload}
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, (complex, np.complexfloating)):
        return [float(o.real), float(o.imag)]
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _emit(config: dict, rows: list[dict], payload=None) -> None:
    fmt = config.get("format", "csv")
    text = render_json(payload if payload is not None else rows, config) if fmt == "json" else render_csv(rows, config)
    out = config.get("out")
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _c(prefix: str, v) -> dict:
    v = complex(v)
    return {f"{prefix}_re": v.real, f"{prefix}_im": v.imag}


# -- commands --------------------------------------------------------------


def _stream(config: dict) -> RngStream:
    return RngStream(config.get("seed", 0), 0)


def cmd_sample(config: dict) -> int:
    spec = build_ensemble(config.get("ensemble"))
    N = config.get("N")
    replicas = config.get("replicas", 1)
    stream = _stream(config)
    if config.get("what", "spectra") == "matrix":
        mats = [spec.sample(stream.child(i), N) for i in range(replicas)]
        if config.get("format") == "bin":
            data = b"".join(dump_matrix_binary(m) for m in mats)
            if not config.get("out"):
                raise ValidationFailure("out: binary output needs a file path")
            Path(config["out"]).write_bytes(data)
            return EXIT_OK
        rows = [
            {"replica": r, "row": i, "col": j, "re": m[i, j].real, "im": m[i, j].imag}
            for r, m in enumerate(mats)
            for i in range(m.shape[0])
            for j in range(m.shape[1])
        ]
        _emit(config, rows, {"matrices": [{"re": m.real, "im": m.imag} for m in mats]})
        return EXIT_OK
    spectra = sample_spectra(spec, N, replicas, stream, threads=config.get("threads"))
    rows = [{"replica": r, "index": k, "eigenvalue": lam} for r, s in enumerate(spectra) for k, lam in enumerate(s)]
    _emit(config, rows, {"spectra": spectra})
    return EXIT_OK


def cmd_covariance(config: dict) -> int:
    spec = build_ensemble(config.get("ensemble"))
    f = build_function(config.get("f", "id"))
    g = build_function(config.get("g", config.get("f", "id")))
    rows = []
    for N in config.get("N_values", [config.get("N", spec.n or 64)]):
        est = statistics.covariance_mc(f, g, spec, N, config.get("replicas", 1000), _stream(config),
                                       threads=config.get("threads"))
        rows.append({"N": N, "f": f.name, "g": g.name, **_c("value", est.value), "stderr": est.stderr,
                     "replicas": est.replicas})
    _emit(config, rows)
    return EXIT_OK


def cmd_g2(config: dict) -> int:
    if config.get("grid", "z" not in config):
        pts = acceptance.formula_grid(config.get("grid_points", 20))
        rows = []
        for z in pts:
            for w in pts:
                if abs(z - w) < 0.2:
                    continue
                a, b = complex(transforms.g2_gue_free(z, w)), complex(transforms.g2_gue_ps(z, w))
                rows.append({**_c("z", z), **_c("w", w), **_c("free", a), **_c("ps", b), "abs_diff": abs(a - b)})
        _emit(config, rows)
        return EXIT_OK
    z = parse_complex(config["z"])
    w = parse_complex(config.get("w", config["z"]))
    row = {**_c("z", z), **_c("w", w)}
    row.update(_c("free", transforms.g2_gue_free(z, w)))
    row.update(_c("ps", transforms.g2_gue_ps(z, w)))
    degree = config.get("degree", 12)
    if abs(z) > 3 and abs(w) > 3:
        s = g2_series(z, w, degree)
        row.update({**_c("series", s.value), "series_degree": degree, "series_tail_bound": s.tail_bound})
    if "replicas" in config:
        spec = build_ensemble(config.get("ensemble"))
        est = transforms.g2_empirical(spec, z, w, config["replicas"], _stream(config), N=config.get("N"),
                                      threads=config.get("threads"))
        row.update({**_c("empirical", est.value), "empirical_stderr": est.stderr,
                    "norm_exceedances": est.diagnostics["norm_exceedances"]})
    _emit(config, [row])
    return EXIT_OK


def _contours(config: dict):
    c = config.get("contour", {})
    nodes = c.get("nodes", 256)
    return quadrature.Contour.circle(c.get("rz", 3.0), nodes), quadrature.Contour.circle(c.get("rw", 3.5), nodes)


def cmd_rho(config: dict) -> int:
    fdesc, gdesc = config.get("f", "id"), config.get("g", config.get("f", "id"))
    f, g = build_function(fdesc), build_function(gdesc)
    cz, cw = _contours(config)
    value = quadrature.rho_via_contour(f, g, transforms.g2_gue_free, cz, cw)
    row = {"f": f.name, "g": g.name, **_c("contour", value), "nodes": cz.nodes}
    if isinstance(fdesc, dict) and isinstance(gdesc, dict):
        ref = quadrature.rho_polynomial_reference(fdesc["poly"], gdesc["poly"], MomentTable())
        row.update({"oracle": float(ref), "abs_diff": abs(value - ref)})
    elif fdesc in ("id", "x2", "x3", "x4") and gdesc in ("id", "x2", "x3", "x4"):
        deg = {"id": 1, "x2": 2, "x3": 3, "x4": 4}
        ref = quadrature.rho_polynomial_reference([0] * deg[fdesc] + [1], [0] * deg[gdesc] + [1])
        row.update({"oracle": float(ref), "abs_diff": abs(value - ref)})
    _emit(config, [row])
    return EXIT_OK


def cmd_clt(config: dict) -> int:
    spec = build_ensemble(config.get("ensemble"))
    descs = config.get("functions") or [config.get("f", "id")]
    tests = {}
    for d in descs:
        f = build_function(d)
        target = config.get("rho_target")
        if target is None or len(descs) > 1:
            target = quadrature.rho_via_contour(f, f).real
        tests[f.name] = (f, target)
    reports = statistics.clt_experiments(
        tests, spec, config.get("N_values", [16, 64, 256]), config.get("replicas", 10_000), _stream(config),
        threads=config.get("threads"),
    )
    rows = [
        {"f": name, "rho_target": rep.rho_target, **vars(row)}
        for name, rep in reports.items()
        for row in rep.rows
    ]
    _emit(config, rows, {name: rep.to_dict() for name, rep in reports.items()})
    return EXIT_OK


def cmd_check(config: dict) -> int:
    results = acceptance.run_criteria(config.get("only"), seed=config.get("seed", acceptance.ROOT_SEED),
                                      threads=config.get("threads"))
    for r in results:
        print(r.line(), file=sys.stderr)
    rows = [{"criterion": r.number, "title": r.title, "passed": r.passed, "seconds": round(r.seconds, 1)}
            for r in results]
    _emit(config, rows, [{"criterion": r.number, "title": r.title, "passed": r.passed, "details": r.details}
                         for r in results])
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


def cmd_frechet(config: dict) -> int:
    if "mesh" not in config:
        raise ValidationFailure("mesh: a mesh CSV path is required")
    try:
        mesh = frechet.FrechetMesh.from_csv(Path(config["mesh"]).read_text())
    except OSError as exc:
        raise ValidationFailure(f"mesh: cannot read {config['mesh']}: {exc}") from None
    f = build_function(config.get("f", "one"))
    g = build_function(config.get("g", config.get("f", "one")))
    row = {
        "f": f.name,
        "g": g.name,
        "integral": float(np.real(frechet.frechet_integral(f, g, mesh))),
        "rho_from_kernel": float(np.real(frechet.rho_from_kernel(f, g, mesh))),
        "variation_upper_bound": frechet.frechet_variation(mesh, "upper_bound"),
    }
    if config.get("mode") == "exact":
        row["variation_exact"] = frechet.frechet_variation(mesh, "exact")
    _emit(config, [row])
    return EXIT_OK


HANDLERS = {
    "sample": cmd_sample,
    "covariance": cmd_covariance,
    "g2": cmd_g2,
    "rho": cmd_rho,
    "clt": cmd_clt,
    "check": cmd_check,
    "frechet": cmd_frechet,
}


# -- argument parsing ------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--format", choices=["csv", "json", "bin"])
    common.add_argument("--threads", type=int, help=f"worker threads (env {THREADS_ENV})")
    common.add_argument("--ensemble", choices=["gue", "block", "additive"])
    common.add_argument("--N", type=int, dest="N")
    common.add_argument("--N-values", type=int, nargs="+", dest="N_values")
    common.add_argument("--replicas", type=int)
    common.add_argument("--f")
    common.add_argument("--g")

    p = argparse.ArgumentParser(prog="secondorder", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("sample", parents=[common]).add_argument("--what", choices=["spectra", "matrix"])
    sub.add_parser("covariance", parents=[common])
    g2 = sub.add_parser("g2", parents=[common])
    g2.add_argument("--grid", action="store_true", default=None)
    g2.add_argument("--grid-points", type=int, dest="grid_points")
    g2.add_argument("--z")
    g2.add_argument("--w")
    g2.add_argument("--degree", type=int)
    rho = sub.add_parser("rho", parents=[common])
    rho.add_argument("--rz", type=float)
    rho.add_argument("--rw", type=float)
    rho.add_argument("--nodes", type=int)
    clt = sub.add_parser("clt", parents=[common])
    clt.add_argument("--rho-target", type=float, dest="rho_target")
    sub.add_parser("check", parents=[common]).add_argument("--only", type=int, nargs="+")
    fr = sub.add_parser("frechet", parents=[common])
    fr.add_argument("--mesh")
    fr.add_argument("--mode", choices=["exact", "upper_bound"])
    return p


def _merge(args: argparse.Namespace) -> dict:
    config: dict = {}
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationFailure(f"config: {exc}") from None
    if config.get("command", args.command) != args.command:
        raise ValidationFailure(f"command: config says {config['command']!r}, CLI says {args.command!r}")
    config["command"] = args.command
    for key, value in vars(args).items():
        if key in ("config", "command") or value is None:
            continue
        if key == "ensemble":
            config.setdefault("ensemble", {})["kind"] = value
        elif key in ("rz", "rw", "nodes"):
            config.setdefault("contour", {})[key] = value
        else:
            config[key] = value
    errors = sorted(jsonschema.Draft202012Validator(CONFIG_SCHEMA).iter_errors(config), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        path = ".".join(str(p) for p in e.absolute_path) or "<root>"
        raise ValidationFailure(f"{path}: {e.message}")
    return config


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = _merge(args)
        return HANDLERS[config["command"]](config)
    except ValidationFailure as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SecondOrderError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
