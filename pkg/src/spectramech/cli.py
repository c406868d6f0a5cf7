"""Command line interface.

Every command reads one JSON config, runs one operation, and emits one
result document on stdout (and to --out when given).  Output bytes are a
pure function of the config file and the effective seed: no timestamps,
hostnames, or locale-dependent formatting.

Exit codes: 0 success, 2 unusable input (bad flags, unreadable or
syntactically invalid config, unsupported output format), 3 invalid
values or violated model invariants, 4 solver failure, 5 verification
ran and rejected the mechanism.
"""

import argparse
import math
import os
import sys

import numpy as np

from .config import canonical_digest, load_config, parse_config
from .errors import (
    ConfigError,
    DomainError,
    NumericsError,
    SolverError,
    ValidationError,
)
from .fd import (
    FdScenario,
    fd_allocate,
    fd_expected_revenue,
    fd_interim,
    fd_payment,
    fd_payment_via_inverse_rates,
)
from .rates import SsPhysical
from .results import RunResult, rows_to_csv
from .ss import (
    SsScenario,
    ss_allocate,
    ss_expected_revenue,
    ss_interim,
    ss_payment,
)
from .verify import (
    fd_mechanism,
    ss_mechanism,
    verify_ic,
    verify_ir,
    verify_monotone_interim,
    verify_payment_identity,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INVALID = 3
EXIT_SOLVER = 4
EXIT_VERIFY = 5

_SWEEP_PARAMS = ("bandwidth", "total-power", "users", "grid-m", "mc-samples")


def _nonneg_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return value


def _positive_int(text):
    value = _nonneg_int(text)
    if value == 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma list of numbers: {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spectramech",
        description="Bandwidth and power auctions with reported willingness to pay per rate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, solver=True):
        sp.add_argument("--config", required=True, help="JSON scenario config")
        sp.add_argument("--seed", type=_nonneg_int, default=None, help="override config seed")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("--out", help="also write the output to this file")
        sp.add_argument(
            "--override-regularity",
            action="store_true",
            help="run even if a type distribution fails its regularity certificate",
        )
        if solver:
            sp.add_argument("--mc-samples", type=_positive_int, default=None)
            sp.add_argument("--grid-m", type=_positive_int, default=None)
            sp.add_argument("--restarts", type=_nonneg_int, default=None)

    sp = sub.add_parser("validate", help="check the config and its distributions")
    common(sp, solver=False)

    sp = sub.add_parser("allocate", help="solve the allocation at one report profile")
    common(sp)
    sp.add_argument("--theta", type=_float_list, required=True, help="comma list of reports")

    sp = sub.add_parser("tax", help="allocation plus envelope taxes at one report profile")
    common(sp)
    sp.add_argument("--theta", type=_float_list, required=True)
    sp.add_argument(
        "--crosscheck",
        action="store_true",
        help="also compute taxes through the inverse rate curve (bandwidth model only)",
    )

    sp = sub.add_parser("interim", help="Monte Carlo interim rate and tax of one report")
    common(sp)
    sp.add_argument("--user", type=_nonneg_int, required=True)
    sp.add_argument("--report", type=float, required=True)

    sp = sub.add_parser("verify", help="audit incentive and payment properties")
    common(sp)
    sp.add_argument(
        "--suite",
        choices=("all", "ic", "ir", "identity", "monotone"),
        default="all",
    )
    sp.add_argument("--report-points", type=_positive_int, default=None)
    sp.add_argument("--true-types", type=_positive_int, default=None)
    sp.add_argument("--user", type=_nonneg_int, default=None,
                    help="restrict identity and monotone audits to one user")

    sp = sub.add_parser("revenue", help="Monte Carlo expected revenue under truth-telling")
    common(sp)

    sp = sub.add_parser("sweep", help="expected revenue along one swept parameter")
    common(sp)
    sp.add_argument("--param", choices=_SWEEP_PARAMS, required=True)
    sp.add_argument("--values", type=_float_list, required=True)

    sp = sub.add_parser("rate-curve", help="realized rate and tax against the own report")
    common(sp)
    sp.add_argument("--user", type=_nonneg_int, required=True)
    sp.add_argument("--points", type=_positive_int, default=33)
    sp.add_argument(
        "--others",
        type=_float_list,
        default=None,
        help="fixed reports of the other users; defaults to their support midpoints",
    )
    sp.add_argument("--bits", action="store_true", help="add a rate column in bits")
    return parser


def _check_threads():
    raw = os.environ.get("SPECTRAMECH_THREADS")
    if raw is None:
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ValidationError(
            f"SPECTRAMECH_THREADS must be a positive integer, got {raw!r}"
        ) from None
    if value < 1:
        raise ValidationError(
            f"SPECTRAMECH_THREADS must be a positive integer, got {raw!r}"
        )
    return value


def _load(args):
    data = load_config(args.config)
    scenario, settings = parse_config(
        data, allow_uncertified=args.override_regularity
    )
    seed = args.seed if args.seed is not None else settings.seed
    return data, scenario, settings, seed


def _setting(args, settings, name):
    value = getattr(args, name.replace("-", "_"), None)
    if value is not None:
        return value
    lookup = {"mc-samples": "mc_samples", "grid-m": "tax_grid", "restarts": "restarts"}
    return getattr(settings, lookup[name])


def _emit(args, data, seed, payload, rows=None):
    result = RunResult(
        command=args.command,
        config_digest=canonical_digest(data),
        seed=seed,
        payload=payload,
    )
    if args.format == "csv":
        if rows is None:
            raise ConfigError(f"csv output is not available for {args.command}")
        text = rows_to_csv(rows)
        raw = text.encode("utf-8")
    else:
        raw = result.to_json_bytes()
    sys.stdout.write(raw.decode("utf-8"))
    sys.stdout.flush()
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(raw)


def _model_name(scenario):
    return "fd" if isinstance(scenario, FdScenario) else "ss"


def _cmd_validate(args):
    data, scenario, settings, seed = _load(args)
    checks = scenario.validation_report()
    all_passed = all(c["passed"] for c in checks)
    payload = {
        "model": _model_name(scenario),
        "checks": checks,
        "all_passed": all_passed,
    }
    _emit(args, data, seed, payload, rows=checks)
    return EXIT_OK if all_passed else EXIT_INVALID


def _cmd_allocate(args):
    data, scenario, settings, seed = _load(args)
    if isinstance(scenario, FdScenario):
        out = fd_allocate(scenario, args.theta)
    else:
        out = ss_allocate(
            scenario,
            args.theta,
            restarts=_setting(args, settings, "restarts"),
            seed=seed,
        )
    payload = {"model": _model_name(scenario), "theta": list(args.theta)}
    payload.update(out.to_record())
    _emit(args, data, seed, payload)
    return EXIT_OK


def _cmd_tax(args):
    data, scenario, settings, seed = _load(args)
    grid_m = _setting(args, settings, "grid-m")
    if isinstance(scenario, FdScenario):
        out = fd_payment(scenario, args.theta, grid_m=grid_m)
    else:
        if args.crosscheck:
            raise ConfigError("--crosscheck applies to the bandwidth model only")
        out = ss_payment(
            scenario,
            args.theta,
            grid_m=grid_m,
            restarts=_setting(args, settings, "restarts"),
            seed=seed,
        )
    payload = {"model": _model_name(scenario), "theta": list(args.theta)}
    payload.update(out.to_record())
    if isinstance(scenario, FdScenario) and args.crosscheck:
        alt, alt_err = fd_payment_via_inverse_rates(scenario, args.theta, levels=grid_m)
        gap = [float(a - b) for a, b in zip(alt, out.payments)]
        payload["crosscheck"] = {
            "payments": [float(v) for v in alt],
            "error_bounds": [float(v) for v in alt_err],
            "gap_vs_primary": gap,
        }
    _emit(args, data, seed, payload)
    return EXIT_OK


def _cmd_interim(args):
    data, scenario, settings, seed = _load(args)
    kwargs = dict(
        mc_samples=_setting(args, settings, "mc-samples"),
        seed=seed,
        grid_m=_setting(args, settings, "grid-m"),
    )
    if isinstance(scenario, FdScenario):
        est = fd_interim(scenario, args.user, args.report, **kwargs)
    else:
        est = ss_interim(
            scenario,
            args.user,
            args.report,
            restarts=_setting(args, settings, "restarts"),
            **kwargs,
        )
    payload = {"model": _model_name(scenario)}
    payload.update(est.to_record())
    _emit(args, data, seed, payload, rows=[est.to_record()])
    return EXIT_OK


def _cmd_verify(args):
    data, scenario, settings, seed = _load(args)
    grid_m = _setting(args, settings, "grid-m")
    mc = _setting(args, settings, "mc-samples")
    if isinstance(scenario, FdScenario):
        model = fd_mechanism(scenario, grid_m=grid_m)
    else:
        model = ss_mechanism(
            scenario,
            grid_m=grid_m,
            restarts=_setting(args, settings, "restarts"),
            solver_seed=seed,
        )
    points = args.report_points if args.report_points is not None else 17
    true_types = args.true_types if args.true_types is not None else 5
    users = range(model.n_users) if args.user is None else [args.user]
    suites = {}
    rows = []
    if args.suite in ("all", "ic"):
        reports = verify_ic(
            model,
            report_points=points,
            true_type_count=true_types,
            mc_samples=mc,
            seed=seed,
        )
        suites["ic"] = [r.to_record() for r in reports]
        rows += [
            {
                "suite": "ic",
                "user": r.user,
                "detail": f"true_type={r.true_type:.6g}",
                "worst_margin": r.worst_margin,
                "passed": r.passed,
            }
            for r in reports
        ]
    if args.suite in ("all", "ir"):
        reports = verify_ir(model, theta_points=points, mc_samples=mc, seed=seed)
        suites["ir"] = [r.to_record() for r in reports]
        rows += [
            {
                "suite": "ir",
                "user": r.user,
                "detail": "",
                "worst_margin": r.worst_margin,
                "passed": r.passed,
            }
            for r in reports
        ]
    if args.suite in ("all", "identity"):
        reports = [
            verify_payment_identity(
                model, u, report_points=points, mc_samples=mc, seed=seed
            )
            for u in users
        ]
        suites["identity"] = [r.to_record() for r in reports]
        rows += [
            {
                "suite": "identity",
                "user": r.user,
                "detail": "",
                "worst_margin": r.worst_margin,
                "passed": r.passed,
            }
            for r in reports
        ]
    if args.suite in ("all", "monotone"):
        reports = [
            verify_monotone_interim(
                model, u, report_points=points, mc_samples=mc, seed=seed
            )
            for u in users
        ]
        suites["monotone"] = [r.to_record() for r in reports]
        rows += [
            {
                "suite": "monotone",
                "user": r.user,
                "detail": "",
                "worst_margin": r.worst_margin,
                "passed": r.passed,
            }
            for r in reports
        ]
    all_passed = all(r["passed"] for r in rows)
    payload = {
        "model": _model_name(scenario),
        "suites": suites,
        "all_passed": all_passed,
    }
    _emit(args, data, seed, payload, rows=rows)
    return EXIT_OK if all_passed else EXIT_VERIFY


def _cmd_revenue(args):
    data, scenario, settings, seed = _load(args)
    est = _revenue_for(args, scenario, settings, seed)
    payload = {"model": _model_name(scenario)}
    payload.update(est.to_record())
    _emit(args, data, seed, payload, rows=[est.to_record()])
    return EXIT_OK


def _revenue_for(args, scenario, settings, seed, mc=None, grid_m=None):
    mc = mc if mc is not None else _setting(args, settings, "mc-samples")
    grid_m = grid_m if grid_m is not None else _setting(args, settings, "grid-m")
    if isinstance(scenario, FdScenario):
        return fd_expected_revenue(scenario, mc_samples=mc, seed=seed, grid_m=grid_m)
    return ss_expected_revenue(
        scenario,
        mc_samples=mc,
        seed=seed,
        grid_m=grid_m,
        restarts=_setting(args, settings, "restarts"),
    )


def _swept_scenario(scenario, param, value):
    if param == "bandwidth":
        if isinstance(scenario, FdScenario):
            return FdScenario(
                bandwidth=value,
                users=scenario.users,
                regularity_grid=scenario.regularity_grid,
                allow_uncertified=scenario.allow_uncertified,
            )
        phys = scenario.physical
        return SsScenario(
            physical=SsPhysical(
                gain_matrix=phys.gain_matrix,
                bandwidth=value,
                noise_density=phys.noise_density,
            ),
            total_power=scenario.total_power,
            type_dists=scenario.type_dists,
            regularity_grid=scenario.regularity_grid,
            allow_uncertified=scenario.allow_uncertified,
        )
    if param == "total-power":
        if not isinstance(scenario, SsScenario):
            raise DomainError("total-power sweeps apply to the shared-band model only")
        return SsScenario(
            physical=scenario.physical,
            total_power=value,
            type_dists=scenario.type_dists,
            regularity_grid=scenario.regularity_grid,
            allow_uncertified=scenario.allow_uncertified,
        )
    if param == "users":
        if not isinstance(scenario, FdScenario):
            raise DomainError("user-count sweeps apply to the bandwidth model only")
        count = int(value)
        if count != value or count < 1:
            raise DomainError(f"user count must be a positive integer, got {value}")
        base = scenario.users
        users = tuple(base[i % len(base)] for i in range(count))
        return FdScenario(
            bandwidth=scenario.bandwidth,
            users=users,
            regularity_grid=scenario.regularity_grid,
            allow_uncertified=scenario.allow_uncertified,
        )
    raise DomainError(f"unknown sweep parameter {param!r}")


def _cmd_sweep(args):
    data, scenario, settings, seed = _load(args)
    rows = []
    for value in args.values:
        if args.param == "grid-m":
            grid_m = int(value)
            if grid_m != value or grid_m < 1:
                raise DomainError(f"grid-m must be a positive integer, got {value}")
            est = _revenue_for(args, scenario, settings, seed, grid_m=grid_m)
        elif args.param == "mc-samples":
            mc = int(value)
            if mc != value or mc < 2:
                raise DomainError(f"mc-samples must be an integer above 1, got {value}")
            est = _revenue_for(args, scenario, settings, seed, mc=mc)
        else:
            swept = _swept_scenario(scenario, args.param, value)
            est = _revenue_for(args, swept, settings, seed)
        row = {"param": args.param, "value": value}
        row.update(est.to_record())
        rows.append(row)
    payload = {"model": _model_name(scenario), "param": args.param, "rows": rows}
    _emit(args, data, seed, payload, rows=rows)
    return EXIT_OK


def _cmd_rate_curve(args):
    data, scenario, settings, seed = _load(args)
    grid_m = _setting(args, settings, "grid-m")
    if isinstance(scenario, FdScenario):
        model = fd_mechanism(scenario, grid_m=grid_m)
        dists = scenario.type_dists
    else:
        model = ss_mechanism(
            scenario,
            grid_m=grid_m,
            restarts=_setting(args, settings, "restarts"),
            solver_seed=seed,
        )
        dists = scenario.type_dists
    n = model.n_users
    if not 0 <= args.user < n:
        raise DomainError(f"user index {args.user} out of range")
    if args.others is None:
        others = [0.5 * (d.lo + d.hi) for j, d in enumerate(dists) if j != args.user]
    else:
        others = args.others
    if len(others) != n - 1:
        raise DomainError(f"expected {n - 1} fixed reports for the other users")
    for value, (j, d) in zip(others, ((j, d) for j, d in enumerate(dists) if j != args.user)):
        if not d.lo <= value <= d.hi:
            raise DomainError(
                f"fixed report {value} for user {j} outside support [{d.lo}, {d.hi}]"
            )
    opponents = np.array([others], dtype=float)
    lo, hi = model.support(args.user)
    grid = np.linspace(lo, hi, args.points)
    rows = []
    for r in grid:
        rate, tax, err, _ = model.outcomes(args.user, float(r), opponents)
        row = {
            "report": float(r),
            "rate_nats": float(rate[0]),
            "tax": float(tax[0]),
            "tax_error": float(err[0]),
        }
        if args.bits:
            row["rate_bits"] = float(rate[0] / math.log(2.0))
        rows.append(row)
    payload = {
        "model": _model_name(scenario),
        "user": args.user,
        "others": [float(v) for v in others],
        "rows": rows,
    }
    _emit(args, data, seed, payload, rows=rows)
    return EXIT_OK


_HANDLERS = {
    "validate": _cmd_validate,
    "allocate": _cmd_allocate,
    "tax": _cmd_tax,
    "interim": _cmd_interim,
    "verify": _cmd_verify,
    "revenue": _cmd_revenue,
    "sweep": _cmd_sweep,
    "rate-curve": _cmd_rate_curve,
}


def exit_code_for(exc) -> int:
    """Exit class of an exception; the order mirrors the module docstring."""
    if isinstance(exc, ConfigError):
        return EXIT_USAGE
    if isinstance(exc, SolverError):
        return EXIT_SOLVER
    if isinstance(exc, (DomainError, ValidationError, NumericsError)):
        return EXIT_INVALID
    raise exc


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _check_threads()
        return _HANDLERS[args.command](args)
    except (ConfigError, DomainError, ValidationError, NumericsError, SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        failures = getattr(exc, "failures", None)
        for failure in failures or []:
            print(f"  - {failure}", file=sys.stderr)
        diagnostics = getattr(exc, "diagnostics", None)
        if diagnostics:
            print(f"  diagnostics: {diagnostics}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
