"""Command-line front end.

Exit codes: 0 success, 2 bad arguments, 3 invalid input, 4 numerical failure.
Errors are reported as a JSON object on stderr and no output file is written.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dm_region, ep_bounds, qbt_sim, vg_region
from .errors import NumericalError, RateExError, ValidationError
from .model import (
    COMPLEX,
    CONVENTIONS,
    REAL,
    bsc_instance,
    conditionally_independent_alternative,
    validate_dm_instance,
    validate_gaussian_model,
)

SCHEMA_VERSION = "1"
EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated number list: {text!r}")
    if not vals or not all(math.isfinite(v) for v in vals):
        raise argparse.ArgumentTypeError(f"need finite numbers: {text!r}")
    return vals


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated integer list: {text!r}")


def _grid(text: str) -> list[float]:
    """start:stop:step, inclusive of stop up to rounding."""
    try:
        start, stop, step = (float(t) for t in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be start:stop:step, got {text!r}")
    if not (math.isfinite(start) and math.isfinite(stop) and step > 0 and stop >= start):
        raise argparse.ArgumentTypeError(f"grid needs step > 0 and stop >= start: {text!r}")
    n = int(math.floor((stop - start) / step + 1e-9))
    return [round(start + i * step, 12) for i in range(n + 1)]


def _density(text: str) -> ep_bounds.DensitySpec:
    """gaussian:VAR | wald:MU,LAMBDA | uniform:A,B"""
    kind, _, rest = text.partition(":")
    try:
        args = [float(t) for t in rest.split(",")] if rest else []
        if kind == "gaussian" and len(args) == 1:
            return ep_bounds.DensitySpec.gaussian(args[0])
        if kind == "wald" and len(args) == 2:
            return ep_bounds.DensitySpec.wald(*args)
        if kind == "uniform" and len(args) == 2:
            return ep_bounds.DensitySpec.uniform(*args)
    except (ValueError, ValidationError) as e:
        raise argparse.ArgumentTypeError(str(e))
    raise argparse.ArgumentTypeError(f"unknown density {text!r}; use gaussian:VAR, wald:MU,LAMBDA or uniform:A,B")


def _load_json(path: str | None) -> dict:
    if path is None:
        raise ValidationError("--input is required for this subcommand")
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as e:
        raise ValidationError(f"cannot read {path}: {e.strerror}")
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path} is not valid JSON: {e}")


def _load_density(args) -> ep_bounds.DensitySpec:
    if args.density is not None:
        return args.density
    raw = _load_json(args.input)
    if "grid" not in raw or "values" not in raw:
        raise ValidationError("tabulated density JSON needs 'grid' and 'values'")
    return ep_bounds.DensitySpec.tabulated(raw["grid"], raw["values"])


def _load_instance(args):
    if getattr(args, "bsc", None) is not None:
        return bsc_instance(args.bsc)
    raw = _load_json(args.input)
    if "P" not in raw:
        raise ValidationError("instance JSON needs a 'P' tensor")
    P = np.asarray(raw["P"], float)
    Q = np.asarray(raw["Q"], float) if "Q" in raw else conditionally_independent_alternative(P)
    return validate_dm_instance(P, Q, raw.get("labels", ()))


def _encoders(args, instance) -> qbt_sim.EncoderSpec:
    if args.encoder == "identity":
        return qbt_sim.EncoderSpec.identity(instance)
    if args.encoder == "constant":
        return qbt_sim.EncoderSpec.constant(instance)
    raw = _load_json(args.encoder)
    return qbt_sim.EncoderSpec(tuple(np.asarray(m) for m in raw["maps"]), int(raw.get("block", 1)), tuple(raw.get("sizes", ())))


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy to builtins, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _json_text(obj: dict) -> str:
    obj = {"schema_version": SCHEMA_VERSION, **obj}
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{float(v):.12g}"


def _csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _emit(text: str, output: str | None):
    if output is None:
        sys.stdout.write(text)
        return
    path = Path(output)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_vg_region(args) -> str:
    raw = _load_json(args.input)
    if args.convention:
        raw = {**raw, "convention": args.convention}
    model = validate_gaussian_model(raw)
    rates = args.rates if args.rates is not None else raw.get("rates")
    if rates is None:
        raise ValidationError("rates are required (--rates or 'rates' in the model JSON)")
    if "omegas" in raw:
        rep = vg_region.optimize_vg_exponent(model, rates, "given-omegas", omegas=raw["omegas"])
    else:
        rep = vg_region.optimize_vg_exponent(model, rates, "diagonal", seed=args.seed)
        rep.meta.pop("solver", None)
    return _json_text({**rep.to_json(), "rates": list(map(float, rates))})


def _cmd_scalar_region(args) -> str:
    sigmas = args.sigmas
    K = len(sigmas)
    grid = args.rates_list or []
    if args.e_grid is not None:
        grid = [[r] * K for r in args.e_grid]
    if not grid:
        raise ValidationError("give --rates (repeatable) or a rate grid via --e-grid")
    rows = []
    for r in grid:
        if len(r) != K:
            raise ValidationError(f"rate vector {r} has {len(r)} entries, need {K}")
        if args.convention == REAL:
            # real-valued model: half the complex exponent at doubled rates
            opt = vg_region.optimize_scalar_exponent(args.sigma_x2, sigmas, [2 * x for x in r], seed=args.seed)
            e = 0.5 * opt.exponent
        else:
            opt = vg_region.optimize_scalar_exponent(args.sigma_x2, sigmas, r, seed=args.seed)
            e = opt.exponent
        rows.append([*r, e, *opt.gammas])
    header = [f"R{k}" for k in range(1, K + 1)] + ["exponent"] + [f"gamma{k}" for k in range(1, K + 1)]
    return _csv_text(header, rows)


def _cmd_dm_region(args) -> str:
    inst = _load_instance(args)
    if args.rates is None:
        raise ValidationError("--rates is required")
    res = dm_region.grid_search_dm_exponent(inst, args.rates, u_sizes=args.u_sizes, divisions=args.divisions)
    return _json_text({**res.to_json(), "rates": args.rates})


def _cmd_qbt_sim(args) -> str:
    inst = _load_instance(args)
    enc = _encoders(args, inst)
    if args.trials is not None and args.trials < 1:
        raise ValidationError("--trials must be positive")
    res = qbt_sim.qbt_simulate(
        inst, enc, args.n, args.trials or 10000, eps=args.eps, seed=args.seed, detector=args.detector
    )
    return _json_text(res.to_json())


def _cmd_np_oracle(args) -> str:
    if args.bsc is None:
        raw = _load_json(args.input)
        if "p" in raw and "q" in raw:
            inst = qbt_sim.NpInstance(np.asarray(raw["p"], float), np.asarray(raw["q"], float), args.eps)
            r = qbt_sim.np_test(inst)
            return _json_text(
                {
                    "beta": r.beta,
                    "eps": args.eps,
                    "threshold_llr": r.threshold_llr,
                    "randomization": r.randomization,
                    "beta_deterministic": r.beta_deterministic,
                    "alpha_deterministic": r.alpha_deterministic,
                }
            )
    inst = _load_instance(args)
    enc = _encoders(args, inst)
    pts = qbt_sim.empirical_exponent_curve(inst, enc, args.eps, range(1, args.n + 1))
    rows = [[p.n, p.exponent_exact, p.ceiling, p.beta, p.upper_envelope, p.log_sum_bound] for p in pts]
    return _csv_text(["n", "exponent_exact", "ceiling", "beta", "upper_envelope", "log_sum_bound"], rows)


def _cmd_ep_bounds(args) -> str:
    d = _load_density(args)
    N, kappa = ep_bounds.entropy_power_and_kappa(d)
    out = {
        "density": d.kind,
        "variance": d.variance,
        "differential_entropy": ep_bounds.differential_entropy(d),
        "entropy_power": N,
        "kappa": kappa,
        "sigma_z2": args.sigma_z2,
    }
    if args.rates is not None:
        out["p2p"] = [
            dict(zip(("R", "E_lower", "E_upper"), (R, *ep_bounds.p2p_bounds(d, args.sigma_z2, R)))) for R in args.rates
        ]
    if args.e_grid is not None:
        rows = []
        for E in args.e_grid:
            try:
                b = ep_bounds.sum_rate_bounds(d, args.sigma_z2, args.k, E)
            except ep_bounds.ExponentOutOfDomain:
                continue
            rows.append(
                {
                    "E": E,
                    "R_lower": b.r_lower,
                    "R_upper": b.r_upper,
                    "delta": b.delta,
                    "rate_redundancy": ep_bounds.rate_redundancy_bound(d, args.sigma_z2, args.k, E),
                }
            )
        out["K"] = args.k
        out["sum_rate"] = rows
    return _json_text(out)


def _cmd_gap_curve(args) -> str:
    d = _load_density(args)
    grid = args.e_grid if args.e_grid is not None else _grid("0:0.5:0.05")
    rows = ep_bounds.gap_curve(d, args.sigma_z2, range(1, args.k_max + 1), grid)
    for note in ep_bounds.delta_monotonicity_report(rows):
        print(f"note: {note}", file=sys.stderr)
    return _csv_text(
        ["K", "E", "delta", "limit_bound_with_E", "limit_bound_uniform"],
        [[r.K, r.E, r.delta, r.limit_bound_with_E, r.limit_bound_uniform] for r in rows],
    )


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rateex", description="Rate-exponent regions for distributed hypothesis testing.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, input_required=False):
        sp.add_argument("--input", required=input_required, help="input JSON path")
        sp.add_argument("--output", help="output path (stdout when omitted)")
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("vg-region", help="vector Gaussian exponent at given rates")
    common(sp, input_required=True)
    sp.add_argument("--rates", type=_float_list)
    sp.add_argument("--convention", choices=CONVENTIONS)
    sp.set_defaults(func=_cmd_vg_region)

    sp = sub.add_parser("scalar-region", help="scalar Gaussian E*(R) as CSV")
    common(sp)
    sp.add_argument("--sigma-x2", type=float, required=True)
    sp.add_argument("--sigmas", type=_float_list, required=True, help="noise variances, comma list")
    sp.add_argument("--rates", type=_float_list, action="append", dest="rates_list", help="rate vector (repeatable)")
    sp.add_argument("--e-grid", type=_grid, help="equal-rate grid start:stop:step")
    sp.add_argument("--convention", choices=CONVENTIONS, default=COMPLEX)
    sp.set_defaults(func=_cmd_scalar_region)

    sp = sub.add_parser("dm-region", help="grid-search inner approximation of the discrete exponent")
    common(sp)
    sp.add_argument("--bsc", type=float, help="use a binary symmetric channel instance with this crossover")
    sp.add_argument("--rates", type=_float_list)
    sp.add_argument("--divisions", type=int, default=10)
    sp.add_argument("--u-sizes", type=_int_list)
    sp.set_defaults(func=_cmd_dm_region)

    sp = sub.add_parser("qbt-sim", help="Monte Carlo error probabilities of a fixed encoder")
    common(sp)
    sp.add_argument("--bsc", type=float)
    sp.add_argument("--encoder", default="identity", help="identity | constant | path to maps JSON")
    sp.add_argument("--n", type=int, default=8)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--eps", type=float, default=0.05)
    sp.add_argument("--detector", choices=("typicality", "calibrated", "np"), default="np")
    sp.set_defaults(func=_cmd_qbt_sim)

    sp = sub.add_parser("np-oracle", help="exact Neyman-Pearson beta (pmf pair) or exponent curve (instance)")
    common(sp)
    sp.add_argument("--bsc", type=float)
    sp.add_argument("--encoder", default="identity")
    sp.add_argument("--n", type=int, default=8, help="largest blocklength of the curve")
    sp.add_argument("--eps", type=float, default=0.05)
    sp.set_defaults(func=_cmd_np_oracle)

    for name, fn, hlp in (
        ("ep-bounds", _cmd_ep_bounds, "entropy-power quantities and bounds"),
        ("gap-curve", _cmd_gap_curve, "sum-rate gap versus K and E as CSV"),
    ):
        sp = sub.add_parser(name, help=hlp)
        common(sp)
        sp.add_argument("--density", type=_density, help="gaussian:VAR | wald:MU,LAMBDA | uniform:A,B (else --input tabulated JSON)")
        sp.add_argument("--sigma-z2", type=float, default=1.0)
        sp.add_argument("--e-grid", type=_grid)
        if name == "ep-bounds":
            sp.add_argument("--rates", type=_float_list)
            sp.add_argument("--k", type=int, default=1)
        else:
            sp.add_argument("--k-max", type=int, default=50)
        sp.set_defaults(func=fn)
    return p


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}, sort_keys=True) + "\n")
    return code


def run_cli(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        return _fail(EXIT_USAGE, "UsageError", str(e))
    try:
        text = args.func(args)
    except ValidationError as e:
        return _fail(EXIT_VALIDATION, type(e).__name__, str(e))
    except NumericalError as e:
        return _fail(EXIT_NUMERICAL, type(e).__name__, str(e))
    except RateExError as e:
        return _fail(EXIT_VALIDATION, type(e).__name__, str(e))
    _emit(text, args.output)
    return 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
