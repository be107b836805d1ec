"""``cocycle-lab`` command line: verification suites and experiment runs.

Exit codes: 0 success, 2 precondition violation, 3 numerical failure, 4 I/O.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import algebra, arithmetic, cocycle, reduction, renorm
from .fourier import Symmetry, random_map

EXIT_OK, EXIT_PRECONDITION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
COMMANDS = ("identities", "arith", "corollary", "reduce", "pipeline")
DECADE = (1e-1, 1e-2, 1e-3)


class ConfigError(ValueError):
    pass


@dataclasses.dataclass
class ExperimentConfig:
    command: str = "identities"
    alpha: object = "golden"
    gamma: float = 10.0
    tau: float = 2.0
    K: int = 100
    depth: int = 20
    grid: int = 256
    truncation: tuple = (8, 16, 32, 64)
    z: complex = 0.01
    tol: float = 1e-10
    seed: int = 0
    output_path: str = None
    samples: int = 10_000
    amplitude: float = 1e-3
    support: int = 8
    steps: int = 3

    @property
    def alpha_value(self):
        return arithmetic.golden() if self.alpha == "golden" else float(self.alpha)

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.alpha != "golden":
            try:
                a = float(self.alpha)
            except (TypeError, ValueError):
                raise ConfigError(f"alpha must be a number or 'golden', got {self.alpha!r}")
            if not 0 < a < 1:
                raise ConfigError("alpha must lie in (0, 1)")
        checks = [
            (self.gamma > 0, "gamma must be positive"),
            (self.tau >= 1, "tau must be >= 1"),
            (self.K >= 1, "K must be >= 1"),
            (self.depth >= 1, "depth must be >= 1"),
            (self.grid >= 16 and self.grid % 2 == 0, "grid must be an even integer >= 16"),
            (len(self.truncation) > 0 and all(n >= 1 for n in self.truncation),
             "truncation must be a non-empty list of positive integers"),
            (abs(self.z) <= 0.1, "|z| must be <= 0.1"),
            (self.tol > 0, "tol must be positive"),
            (0 <= self.seed < 2 ** 64, "seed must fit in 64 bits"),
            (self.samples >= 1, "samples must be positive"),
            (0 <= self.amplitude <= reduction.EPS0, "amplitude must lie in [0, eps0]"),
            (self.support >= 0, "support must be >= 0"),
            (self.steps >= 0, "steps must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self


def _parse_complex(s):
    if isinstance(s, (int, float, complex)):
        return complex(s)
    if isinstance(s, (list, tuple)):
        return complex(*map(float, s))
    parts = str(s).split(",")
    if len(parts) == 1:
        return complex(float(parts[0]))
    return complex(float(parts[0]), float(parts[1]))


def _parse_trunc(s):
    if isinstance(s, (list, tuple)):
        return tuple(int(v) for v in s)
    return tuple(int(v) for v in str(s).split(",") if v)


_COERCE = {"gamma": float, "tau": float, "K": int, "depth": int, "grid": int,
           "truncation": _parse_trunc, "z": _parse_complex, "tol": float, "seed": int,
           "samples": int, "amplitude": float, "support": int, "steps": int}


def load_config(path):
    try:
        data = json.loads(Path(path).read_text())
    except OSError:
        raise
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
    return data


def build_config(args) -> ExperimentConfig:
    values = {}
    if args.config:
        values.update(load_config(args.config))
    flags = {"alpha": args.alpha, "gamma": args.gamma, "tau": args.tau, "K": args.K,
             "depth": args.depth, "grid": args.grid, "truncation": args.trunc, "z": args.z,
             "tol": args.tol, "seed": args.seed, "output_path": args.out}
    values.update({k: v for k, v in flags.items() if v is not None})
    values["command"] = args.command
    try:
        for k, conv in _COERCE.items():
            if k in values:
                values[k] = conv(values[k])
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e))
    return ExperimentConfig(**values).validate()


def build_parser():
    p = argparse.ArgumentParser(prog="cocycle-lab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--alpha", help="frequency in (0, 1) or 'golden'")
    p.add_argument("--gamma", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--K", type=int, help="Diophantine window depth")
    p.add_argument("--depth", type=int, help="Gauss-map depth")
    p.add_argument("--grid", type=int)
    p.add_argument("--trunc", help="truncation schedule, e.g. 8,16,32,64")
    p.add_argument("--z", help="normal-form parameter RE,IM")
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    return p


# ---------------------------------------------------------------------------
# output helpers


def _stamp():
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _csv(fields, rows, cfg):
    buf = io.StringIO()
    buf.write(f"# generated {_stamp()} seed={cfg.seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    w.writerows(rows)
    return buf.getvalue()


def _json(payload, cfg):
    return json.dumps({"generated": _stamp(), "seed": cfg.seed, **payload},
                      indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _emit(text, cfg, path=None):
    path = path or cfg.output_path
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# ---------------------------------------------------------------------------
# commands


def identity_suite(rng, samples=10_000, flip=None, grid=128):
    """``[(name, error, tol)]`` for the algebraic identities of the flip and ``E_{1/2}``."""
    A = algebra.FLIP.q if flip is None else np.asarray(flip, dtype=float)
    x = np.arange(grid) / grid
    rows = []
    lhs = algebra.qmul(algebra.qmul(A, algebra.e_half_q(x)), algebra.qinv(A))
    rows.append(("flip reverses E_1/2", float(np.abs(lhs - algebra.e_half_q(-x)).max()), 1e-12))
    z = rng.normal(size=samples) + 1j * rng.normal(size=samples)
    v = np.stack([np.zeros(samples), z.real, z.imag], axis=-1)
    w = algebra.conjugate_vector(A, v)
    want = np.stack([np.zeros(samples), z.real, -z.imag], axis=-1)
    rows.append(("flip conjugates {0, z}", float(np.abs(w - want).max()), 1e-12))
    sq = algebra._raw_mul(A, A)
    rows.append(("flip squares to -Id", float(np.abs(sq - algebra.MINUS_IDENTITY.q).max()), 0.0))
    R = algebra.to_so3(algebra.e_half_q(x))
    c, s = np.cos(2 * np.pi * x), np.sin(2 * np.pi * x)
    want_R = np.zeros((grid, 3, 3))
    want_R[:, 0, 0], want_R[:, 0, 1], want_R[:, 1, 0], want_R[:, 1, 1] = c, -s, s, c
    want_R[:, 2, 2] = 1.0
    rows.append(("E_1/2 projects to R_2pix", float(np.abs(R - want_R).max()), 1e-12))
    q = algebra.normalize(rng.normal(size=(samples, 4)))
    u = rng.normal(size=(samples, 3))
    nrm = np.abs(np.linalg.norm(algebra.conjugate_vector(q, u), axis=-1)
                 - np.linalg.norm(u, axis=-1))
    rows.append(("adjoint action preserves norm", float(nrm.max()), 1e-12))
    return rows


def cmd_identities(cfg, flip=None):
    rng = np.random.default_rng(cfg.seed)
    rows = identity_suite(rng, cfg.samples, flip)
    ok = all(err <= tol for _, err, tol in rows)
    out = [[name, repr(err), repr(tol), "pass" if err <= tol else "FAIL"]
           for name, err, tol in rows]
    _emit(_csv(("identity", "error", "tolerance", "status"), out, cfg), cfg)
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_arith(cfg):
    a = cfg.alpha_value
    cf = arithmetic.continued_fraction(a, cfg.depth)
    dc = arithmetic.check_dc(a, cfg.gamma, cfg.tau, cfg.K)
    dct = arithmetic.check_dc_tilde(a, cfg.gamma, cfg.tau, cfg.K)
    try:
        hits = arithmetic.check_rdc_tilde_finite(a, cfg.gamma, cfg.tau, cfg.depth, cfg.K)
        rdc = {"hits": [n for n, _ in hits], "error": None}
    except arithmetic.PrecisionExhausted as e:
        rdc = {"hits": [], "error": str(e)}
    try:
        doubling = arithmetic.doubling_lemma_check(a, cfg.gamma, cfg.tau, cfg.K)
    except arithmetic.PreconditionError as e:
        doubling = f"not applicable: {e}"
    payload = {"alpha": a, "partial_quotients": list(cf.partial_quotients),
               "dc": dc.to_dict(), "dc_tilde": dct.to_dict(), "rdc_tilde": rdc,
               "doubling_lemma": doubling}
    _emit(_json(payload, cfg), cfg)
    return EXIT_OK


@dataclasses.dataclass(frozen=True)
class SecondIterateRow:
    z_abs: float
    max_so3_distance: float
    support_ok: bool
    remainder_size: float
    remainder_over_z2: float


def corollary_rows(alpha, direction, grid):
    rows = []
    x = np.arange(grid) / grid
    for r in DECADE:
        nf = cocycle.NormalFormParams(alpha, r * direction)
        direct = cocycle.untwist(cocycle.second_iterate(cocycle.normal_form_cocycle(nf)))
        closed = cocycle.second_iterate_closed_form(nf)
        dist = float(np.max(algebra.qdist(direct(x), closed(x))))
        pair, ok = reduction.reduce_second_iterate_once(nf, grid=grid)
        size = reduction.second_iterate_remainder_size(pair, grid)
        rows.append(SecondIterateRow(r, dist, ok, size, size / r ** 2))
    return rows


def cmd_corollary(cfg):
    z = cfg.z
    direction = z / abs(z) if z != 0 else 1.0
    rows = corollary_rows(cfg.alpha_value, direction, cfg.grid)
    fields = [f.name for f in dataclasses.fields(SecondIterateRow)]
    _emit(_csv(fields, [[repr(getattr(r, f)) for f in fields] for r in rows], cfg), cfg)
    return EXIT_OK


def random_perturbation(cfg):
    rng = np.random.default_rng(cfg.seed)
    a = cfg.alpha_value
    U_t = random_map(rng, cfg.support, cfg.amplitude, symmetry=Symmetry.REAL_VALUED)
    U_z = random_map(rng, cfg.support, cfg.amplitude)
    state = reduction.ModelPerturbation(a, U_t, U_z)
    if cfg.amplitude > 0:
        # the su(2) field norm, not each component, is held at the amplitude
        s = state.size()
        state = reduction.ModelPerturbation(a, U_t * (cfg.amplitude / s),
                                            U_z * (cfg.amplitude / s))
    return state


def cmd_reduce(cfg):
    state = random_perturbation(cfg)
    result = reduction.kam_reduce(state, cfg.truncation, cfg.tol, gamma=cfg.gamma,
                                  tau=cfg.tau)
    header = (f"generated {_stamp()} seed={cfg.seed} z_n={result.normal_form.z_n.real!r},"
              f"{result.normal_form.z_n.imag!r}")
    _emit(reduction.reports_to_csv(result.reports, header), cfg)
    return EXIT_OK


def cmd_pipeline(cfg):
    a = cfg.alpha_value
    c = cocycle.normal_form_cocycle(cocycle.NormalFormParams(a, cfg.z))
    res = renorm.two_periodic_pipeline(c, steps=cfg.steps, grid=cfg.grid, gamma=cfg.gamma,
                                       tau=cfg.tau, K=cfg.K)
    payload = {"distance_to_constant": res.distance_to_constant, "distances": res.distances,
               "trace": res.trace, "z": cfg.z}
    _emit(_json(payload, cfg), cfg)
    if cfg.output_path is not None:
        csv_path = Path(cfg.output_path).with_suffix(".csv")
        _emit(res.distances_csv(f"generated {_stamp()} seed={cfg.seed}"), cfg, csv_path)
    return EXIT_OK


HANDLERS = {"identities": cmd_identities, "arith": cmd_arith, "corollary": cmd_corollary,
            "reduce": cmd_reduce, "pipeline": cmd_pipeline}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = build_config(args)
    except ConfigError as e:
        print(f"cocycle-lab: {e}", file=sys.stderr)
        return EXIT_PRECONDITION
    except OSError as e:
        print(f"cocycle-lab: cannot read config: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        return HANDLERS[cfg.command](cfg)
    except renorm.PipelineError as e:
        print(f"cocycle-lab: {e}", file=sys.stderr)
        return EXIT_PRECONDITION if e.is_precondition else EXIT_NUMERICAL
    except arithmetic.PreconditionError as e:
        print(f"cocycle-lab: precondition: {e}", file=sys.stderr)
        return EXIT_PRECONDITION
    except OSError as e:
        print(f"cocycle-lab: I/O: {e}", file=sys.stderr)
        return EXIT_IO
    except ArithmeticError as e:
        print(f"cocycle-lab: numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
