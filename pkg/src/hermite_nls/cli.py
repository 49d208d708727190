"""Batch experiment runner.

Every subcommand reads an optional JSON config, applies environment and flag
overrides (flag > environment > config > schema default), validates the
result against a closed schema and only then computes. Artifacts are written
under ``--out`` and carry the hash of the resolved config and the seed.

Exit status: 0 on success, 2 on a configuration error, 1 on a compute error.
Errors are reported on stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import globalize, hermite, lens, nls, sampling, spectral, strichartz
from .reporting import (config_hash, default_threads, parallel_map, write_csv, write_json,
                        write_sidecar)
from .selftest import run_selftest

ENV_PREFIX = "HNLS_"
CHUNK = 2048  # fixed work unit, independent of the thread count

LAWS = [law.value for law in sampling.RandomLaw]

# ---------------------------------------------------------------------------
# Schemas
# ---------------------------------------------------------------------------

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int1 = {"type": "integer", "minimum": 1}
_law = {"enum": LAWS, "default": "gaussian"}

PROFILE = {
    "type": "object",
    "additionalProperties": False,
    "required": ["dim", "profile"],
    "properties": {
        "dim": {"enum": [2, 3]},
        "s": {"type": "number", "minimum": 0, "default": 0.0},
        "max_level": {"type": "integer", "minimum": 0},
        "profile": {"oneOf": [
            {"enum": ["power", "cluster-flat"]},
            {"type": "array", "minItems": 1, "items": {"oneOf": [
                _num, {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}]}},
        ]},
        "a": _num,
        "b": _num,
        "amplitude": _num,
    },
}

EQUATION = {
    "dim": {"enum": [2, 3], "default": 2},
    "p": {"type": "number", "exclusiveMinimum": 2, "default": 3},
    "sign": {"enum": [1, -1], "default": 1},
    "coupling": {"type": "number", "minimum": 0, "default": 1.0},
}


def _block(props, required=()):
    return {"type": "object", "additionalProperties": False, "default": {},
            "properties": props, "required": list(required)}


BLOCKS = {
    "spectral": _block({
        "dim": {"enum": [2, 3], "default": 2},
        "lam_min": {**_pos, "default": 20.0},
        "lam_max": {**_pos, "default": 200.0},
        "n_lam": {"type": "integer", "minimum": 3, "default": 20},
        "points": {"type": "array", "items": {"type": "array", "items": _num}},
        "r": {"type": "array", "minItems": 1, "default": [2, 4],
              "items": {"oneOf": [{"type": "number", "minimum": 2}, {"const": "inf"}]}},
        "mu": {"type": "number", "minimum": 0, "default": 1.0},
        "c0": {**_pos, "default": 1.0},
        "increment_samples": {"type": "integer", "minimum": 3, "default": 20},
    }),
    "khinchin": _block({
        "law": _law,
        "k": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 1},
              "default": [2, 4, 8, 16]},
        "trials": {**_int1, "default": 100_000},
        "n_coeffs": {**_int1, "default": 30},
        "profiles": {**_int1, "default": 10},
    }),
    "tails": _block({
        "profile": {**PROFILE, "default": {"dim": 2, "max_level": 10, "profile": "cluster-flat",
                                           "b": 1.5}},
        "law": _law,
        "trials": {**_int1, "default": 10_000},
        "q": {"type": "number", "minimum": 1, "default": 4.0},
        "r": {"type": "number", "minimum": 2, "default": 4.0},
        "s": {"type": "number", "minimum": 0, "default": 0.0},
        "T": {**_pos, "default": 1.0},
        "tau": {**_num, "default": 0.0},
        "n_time": {"type": "integer", "minimum": 16, "default": 16},
        "K": {"type": "array", "minItems": 2, "items": {"type": "number", "minimum": 0}},
        "n_K": {"type": "integer", "minimum": 2, "default": 40},
        "holder_eps": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.25},
    }),
    "solve": _block({
        **EQUATION,
        "theta": {**_num, "default": 0.0},
        "dt": {**_pos, "default": 1e-3},
        "t_final": {**_pos, "default": 1.0},
        "max_level": {"type": "integer", "minimum": 0, "default": 16},
        "probes": {"type": "array", "items": _num, "default": []},
        "record_every": _pos,
        "initial": PROFILE,
        "random": {"type": "boolean", "default": False},
        "law": _law,
        "trial": {"type": "integer", "minimum": 0, "default": 0},
    }, required=["initial"]),
    "lens": _block({
        **EQUATION,
        "mode": {"enum": ["equivalence", "scattering"], "default": "equivalence"},
        "initial": PROFILE,
        "max_level": {"type": "integer", "minimum": 0, "default": 80},
        "amplitude": {**_num, "default": 1.0},
        "s_max": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": math.pi / 4,
                  "default": math.pi / 8},
        "dts": {"type": "array", "minItems": 1, "items": _pos,
                "default": [2e-3, 1e-3, 5e-4, 2.5e-4]},
        "half_width": _pos,
        "n_points": {"type": "integer", "minimum": 16, "default": 256},
        "n_checkpoints": {**_int1, "default": 8},
        "n_grid": {"type": "integer", "minimum": 2, "default": 10},
        "ratio": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1, "default": 0.5},
        "sobolev_s": {"type": "number", "minimum": 0, "default": 0.5},
    }, required=["initial"]),
    "globalize": _block({
        "mode": {"enum": ["ledger", "growth"], "default": "ledger"},
        "law": _law,
        "s": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1, "default": 0.5},
        "d": {"enum": [2, 3], "default": 2},
        "N": {"type": "array", "minItems": 1, "items": _pos, "default": [4, 8, 16]},
        "A": {**_pos, "default": 0.25},
        "dt": {**_pos, "default": 5e-3},
        "eps": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.25, "default": 0.05},
        "trials": {**_int1, "default": 50},
        "profile": PROFILE,
        "max_level": {"type": "integer", "minimum": 0, "default": 128},
        "amplitude": {**_pos, "default": 0.5},
        "b": {**_pos, "default": 0.8},
        "mass": {**_pos, "default": 3.0},
        "horizons": {"type": "array", "minItems": 3, "items": _pos, "default": [1, 2, 4, 8]},
    }),
    "selftest": _block({}),
}

COMMON = {
    "command": {"enum": list(BLOCKS)},
    "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1, "default": 0},
    "out": {"type": "string", "default": "hnls_out"},
    "threads": {**_int1},
    "quiet": {"type": "boolean", "default": False},
}


def schema_for(command):
    props = dict(COMMON)
    props[command] = BLOCKS[command]
    return {"type": "object", "additionalProperties": False, "properties": props,
            "required": ["command"]}


class ConfigError(ValueError):
    """Configuration problem detected before any compute."""


def _fill_defaults(obj, schema):
    for key, sub in schema.get("properties", {}).items():
        if key not in obj and "default" in sub:
            obj[key] = copy.deepcopy(sub["default"])
        if isinstance(obj.get(key), dict) and sub.get("type") == "object":
            _fill_defaults(obj[key], sub)


def _env_value(raw):
    try:
        return json.loads(raw)
    except ValueError:
        return raw


def resolve_config(command, config_path=None, flags=None, environ=None):
    """Merge config file, environment and flags; validate; fill defaults."""
    environ = os.environ if environ is None else environ
    cfg = {}
    if config_path:
        try:
            cfg = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    if cfg.get("command", command) != command:
        raise ConfigError(f"config is for {cfg['command']!r}, not {command!r}")
    cfg["command"] = command
    block = cfg.setdefault(command, {})
    if not isinstance(block, dict):
        raise ConfigError(f"'{command}' block must be an object")

    block_props = BLOCKS[command]["properties"]
    over = {}
    for key in ("seed", "out", "threads", "quiet"):
        if ENV_PREFIX + key.upper() in environ:
            over[key] = _env_value(environ[ENV_PREFIX + key.upper()])
    for key in ("law", "trials"):
        if ENV_PREFIX + key.upper() in environ and key in block_props:
            block[key] = _env_value(environ[ENV_PREFIX + key.upper()])
    for key, val in (flags or {}).items():
        if val is None:
            continue
        if key in ("law", "trials"):
            if key not in block_props:
                raise ConfigError(f"--{key} does not apply to '{command}'")
            block[key] = val
        else:
            over[key] = val
    cfg.update(over)

    schema = schema_for(command)
    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from exc
    _fill_defaults(cfg, schema)
    if "threads" not in cfg:
        cfg["threads"] = default_threads()
    return cfg


def artifact_config(cfg):
    """The part of the config that determines artifact contents."""
    return {k: v for k, v in cfg.items() if k not in ("out", "threads", "quiet")}


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------

class Run:
    """Output bookkeeping shared by the runners."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.block = cfg[cfg["command"]]
        self.seed = int(cfg["seed"])
        self.threads = int(cfg["threads"])
        self.out = Path(cfg["out"])
        self.hash = config_hash(artifact_config(cfg))
        self.written = []

    def csv(self, name, columns, rows):
        p = write_csv(self.out / name, columns, rows, self.hash, self.seed)
        write_sidecar(p, self.hash, self.seed, self.threads)
        self.written.append(str(p))

    def json(self, name, payload):
        p = write_json(self.out / name, payload, self.hash, self.seed)
        write_sidecar(p, self.hash, self.seed, self.threads)
        self.written.append(str(p))

    def log(self, msg):
        if not self.cfg["quiet"]:
            print(msg)


def _profile(spec):
    try:
        return sampling.CoefficientProfile.from_spec(spec)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid profile: {exc}") from exc


def run_spectral(run):
    b = run.block
    d = b["dim"]
    lams = np.linspace(b["lam_min"], b["lam_max"], b["n_lam"])
    points = np.array(b.get("points") or [[0.0] * d], float)
    if points.shape[1] != d:
        raise ConfigError("points must have dim coordinates")
    curve = spectral.spectral_curve(lams, points, d)
    rows = [(float(l), i, *map(float, points[i]), float(curve.values[k, i]))
            for k, l in enumerate(curve.lams) for i in range(len(points))]
    coords = [f"x{i}" for i in range(d)]
    run.csv("spectral_function.csv", ["lambda", "point", *coords, "value"], rows)
    g = spectral.growth_exponent(lams, d, points[0])

    def one(r):
        rr = math.inf if r == "inf" else float(r)
        fit, ls, norms = spectral.increment_exponent(rr, d, (b["lam_min"], b["lam_max"]),
                                                     b["mu"], b["increment_samples"])
        return rr, fit, ls, norms

    inc = parallel_map(one, b["r"], run.threads)
    rows, summ = [], []
    for rr, fit, ls, norms in inc:
        resid = np.log(norms) - fit.predict(np.log(ls))
        rows += [(float(l), b["mu"], rr, d, float(nm), fit.slope, float(e))
                 for l, nm, e in zip(ls, norms, resid)]
        summ.append({"r": rr, "exponent": fit.slope, "predicted":
                     spectral.predicted_increment_exponent(rr, d)})
    run.csv("increments.csv", ["lambda", "mu", "r", "d", "norm", "fitted_exponent", "residual"], rows)
    run.json("spectral_summary.json", {"growth_exponent": g.slope, "expected": d / 2,
                                       "r2": g.r2, "increments": summ})
    run.log(f"growth exponent {g.slope:.4f} (d/2 = {d / 2})")


def run_khinchin(run):
    b = run.block
    rng = np.random.default_rng(run.seed)
    profiles = [rng.exponential(size=b["n_coeffs"]) * rng.choice([-1, 1], b["n_coeffs"])
                for _ in range(b["profiles"])]

    def one(i):
        draws = sampling.law_draw_matrix(b["law"], run.seed + i, b["trials"], b["n_coeffs"])
        return [strichartz.khinchin_estimate(profiles[i], k, b["law"], b["trials"], draws=draws)
                for k in b["k"]]

    res = parallel_map(one, range(b["profiles"]), run.threads)
    rows = [(i, float(k), e.ratio, e.se, e.trials)
            for i, ests in enumerate(res) for k, e in zip(b["k"], ests)]
    run.csv("khinchin.csv", ["profile", "k", "ratio", "se", "trials"], rows)
    worst = max(r[2] for r in rows)
    run.json("khinchin_summary.json", {"max_ratio": worst, "law": b["law"]})
    run.log(f"max ratio {worst:.4f}")


def run_tails(run):
    b = run.block
    gamma = _profile(b["profile"])
    base = gamma.base
    if b.get("holder_eps") is not None:
        tc = strichartz.holder_tail(gamma, b["law"], b["holder_eps"], b.get("K"), b["trials"],
                                    run.seed, b["n_time"])
        values = None
    else:
        spec = strichartz.MixedNormSpec(b["q"], b["r"], b["s"], T=b["T"], tau=b["tau"],
                                        n_time=b["n_time"])

        def chunk(i):
            idx = range(i, min(b["trials"], i + CHUNK))
            batch = sampling.sample_batch(base, b["law"], run.seed, idx)
            return strichartz.mixed_norm_batch(batch.coeffs, base.dim, base.max_level, spec)

        values = np.concatenate(parallel_map(chunk, range(0, b["trials"], CHUNK), run.threads))
        K = b.get("K")
        K = np.linspace(0.0, float(values.max()), b["n_K"]) if K is None else np.array(K)
        tc = strichartz.tail_from_values(values, K, run.seed, spec.to_dict())
    run.csv("tail.csv", ["K", "p_hat", "ci_lo", "ci_hi"], tc.rows())
    run.json("tail_summary.json", tc.summary())
    if tc.slope is not None:
        run.log(f"slope {tc.slope:.4f}, R^2 {tc.r2:.4f}")
    else:
        run.log("fit window too small for a slope")


def run_solve(run):
    b = run.block
    spec = nls.EquationSpec(dim=b["dim"], p=b["p"], sign=b["sign"], theta=b["theta"],
                            coupling=b["coupling"])
    gamma = _profile(b["initial"])
    if gamma.dim != spec.dim:
        raise ConfigError("initial profile dimension does not match dim")
    u0 = (sampling.sample(gamma, b["law"], run.seed, b["trial"]) if b["random"]
          else gamma.base).resized(b["max_level"])
    tr = nls.solve(u0, spec, b["t_final"], b["dt"], probes=tuple(b["probes"]),
                   record_every=b.get("record_every"))
    run.csv("trajectory.csv", tr.columns(), tr.rows())
    summary = {"spec": spec.to_dict(), "blowup_time": tr.blowup_time,
               "mass_drift": tr.drift("mass"), "energy_drift": tr.drift("energy")}
    run.json("solve_summary.json", summary)
    run.log(f"mass drift {summary['mass_drift']:.2e}, energy drift {summary['energy_drift']:.2e}")
    if tr.blew_up:
        raise nls.BlowUpError(f"solution blew up at t = {tr.blowup_time}")


def run_lens(run):
    b = run.block
    spec = lens.lens_spec(b["dim"], b["p"], b["sign"], b["coupling"])
    gamma = _profile(b["initial"])
    u0 = (gamma.base * b["amplitude"]).resized(b["max_level"])
    if b["mode"] == "equivalence":
        kw = {"n_checkpoints": b["n_checkpoints"], "n_points": b["n_points"],
              "half_width": b.get("half_width")}
        reps = parallel_map(lambda h: lens.equivalence_check(u0, spec, b["s_max"], h, **kw),
                            b["dts"], run.threads)
        slope = None
        if len(reps) >= 2:
            from .stats import loglog_slope
            slope = loglog_slope(np.array(b["dts"]), np.array([r.residual_max for r in reps])).slope
        run.csv("equivalence.csv", ["dt", "residual_max", "containment"],
                [(r.dt, r.residual_max, r.containment) for r in reps])
        run.json("equivalence_summary.json", {"slope": slope, "spec": spec.to_dict()})
        run.log(f"residual slope {slope}")
    else:
        rep = lens.scattering_extract(u0, spec, None, b["dts"][0], b["sobolev_s"], b["n_grid"],
                                      b["ratio"])
        rows = [(k, float(rep.s_grid[k + 1]), float(rep.t_grid[k + 1]), float(d))
                for k, d in enumerate(rep.differences)]
        run.csv("scattering.csv", ["k", "s", "t", "difference"], rows)
        run.csv("scattering_state.csv", ["mode", "re", "im"],
                [(i, float(c.real), float(c.imag)) for i, c in enumerate(rep.f_extrapolated.coeffs)])
        run.json("scattering_summary.json", {
            "monotone_tail": rep.monotone_tail,
            "f_last_l2": float(np.linalg.norm(rep.f_last.coeffs)),
            "f_extrapolated_l2": float(np.linalg.norm(rep.f_extrapolated.coeffs))})
        run.log(f"monotone tail: {rep.monotone_tail}")


def run_globalize(run):
    b = run.block
    d, s = b["d"], b["s"]
    spec = nls.EquationSpec.cubic(d)
    if b["mode"] == "ledger":
        gamma = (_profile(b["profile"]) if b.get("profile") else
                 sampling.CoefficientProfile.cluster_flat(d, b["max_level"], b["b"], s, b["amplitude"]))
        ledgers = parallel_map(
            lambda N: globalize.bourgain_run(gamma, b["law"], run.seed, s, d, N, b["A"], b["dt"],
                                             spec, b["eps"], b["trials"]),
            b["N"], run.threads)
        rows = [(float(led.N), tr, *row) for led in ledgers for tr in range(b["trials"])
                for row in led.rows(tr)]
        run.csv("ledger.csv", ["N", "trial", *globalize.LEDGER_COLUMNS], rows)
        med = [led.median_increment for led in ledgers]
        run.json("ledger_summary.json", {"N": b["N"], "median_increment": med,
                                         "decreasing": bool(np.all(np.diff(med) < 0)),
                                         "reconstruction_defect":
                                             max(led.reconstruction_defect for led in ledgers)})
        run.log("median increments " + ", ".join(f"{m:.3e}" for m in med))
    else:
        gamma = (_profile(b["profile"]) if b.get("profile") else
                 globalize.regularity_profile(d, b["max_level"], s))
        gamma = gamma.scaled(b["mass"] / gamma.norm(0))
        fit = globalize.growth_fit(gamma, b["law"], run.seed, s, d, b["horizons"], b["dt"], spec,
                                   b["trials"])
        rows = [(float(a), tr, float(fit.max_energy[i, tr]))
                for i, a in enumerate(fit.horizons) for tr in range(b["trials"])]
        run.csv("growth.csv", ["horizon", "trial", "max_energy"], rows)
        run.json("growth_summary.json", {"median_exponent": fit.median_exponent, "c_s": fit.c_s,
                                         "envelope_ok": fit.envelope_ok})
        run.log(f"median exponent {fit.median_exponent:.3f} (c_s = {fit.c_s})")


def run_selftest_cmd(run):
    checks = run_selftest()
    for c in checks:
        run.log(f"{'PASS' if c.ok else 'FAIL'}  {c.name}: {c.detail}")
    run.csv("selftest.csv", ["check", "ok"], [(c.name, c.ok) for c in checks])
    failed = [c.name for c in checks if not c.ok]
    if failed:
        raise RuntimeError("selftest failures: " + ", ".join(failed))


RUNNERS = {
    "spectral": run_spectral,
    "khinchin": run_khinchin,
    "tails": run_tails,
    "solve": run_solve,
    "lens": run_lens,
    "globalize": run_globalize,
    "selftest": run_selftest_cmd,
}

# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="hermite-nls", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in BLOCKS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--seed", type=int, metavar="U64")
        sp.add_argument("--out", metavar="DIR")
        sp.add_argument("--threads", type=int, metavar="N")
        sp.add_argument("--quiet", action="store_true", default=None)
        if "law" in BLOCKS[name]["properties"]:
            sp.add_argument("--law", choices=LAWS)
        if "trials" in BLOCKS[name]["properties"]:
            sp.add_argument("--trials", type=int)
    return p


def _fail(kind, exc, code):
    msg = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    print(json.dumps(msg, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None, environ=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors already
        return int(exc.code or 0)
    flags = {k: getattr(args, k, None) for k in ("seed", "out", "threads", "quiet", "law", "trials")}
    try:
        cfg = resolve_config(args.command, args.config, flags, environ)
        run = Run(cfg)
        RUNNERS[args.command](run)
    except ConfigError as exc:
        return _fail("config", exc, 2)
    except Exception as exc:  # any compute failure maps to exit 1
        return _fail("compute", exc, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
