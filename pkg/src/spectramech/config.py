"""Strict JSON configuration: one tagged schema, unknown keys rejected.

A config file fully determines a scenario plus solver settings, and its
canonical digest (key-sorted, whitespace-free serialization) identifies
it in result records.  Validation walks the whole document collecting
every problem with its JSON path before raising, so a config with three
mistakes reports three failures, not one.

Booleans are not accepted where numbers are expected even though Python
would happily treat them as integers.
"""

from dataclasses import dataclass
import hashlib
import json

import numpy as np

from .distributions import (
    DEFAULT_REGULARITY_GRID,
    TabulatedType,
    TruncatedLinearType,
    TruncatedPowerType,
    UniformType,
)
from .errors import ConfigError, SpectramechError, ValidationError
from .fd import FdScenario, FdUser
from .interim import DEFAULT_MC_SAMPLES, DEFAULT_TAX_GRID
from .rates import GAUSS_LEGENDRE_ORDER, FdUserPhysical, GainDistribution, SsPhysical
from .ss import DEFAULT_RESTARTS, SsScenario

SCHEMA_TAG = "spectramech/1"

_TOP_KEYS_FD = {
    "schema",
    "model",
    "seed",
    "bandwidth",
    "noise_density",
    "users",
    "solver",
}
_TOP_KEYS_SS = _TOP_KEYS_FD | {"total_power", "gain_matrix"}
_SOLVER_KEYS = {
    "tax_grid",
    "mc_samples",
    "restarts",
    "regularity_grid",
    "quadrature_order",
}


@dataclass(frozen=True)
class SolverSettings:
    """Tunables shared by the CLI commands; config values, flag-overridable."""

    seed: int = 0
    tax_grid: int = DEFAULT_TAX_GRID
    mc_samples: int = DEFAULT_MC_SAMPLES
    restarts: int = DEFAULT_RESTARTS
    regularity_grid: int = DEFAULT_REGULARITY_GRID
    quadrature_order: int = GAUSS_LEGENDRE_ORDER


class _Walker:
    """Accumulates failures with JSON paths while pulling typed values."""

    def __init__(self):
        self.failures = []

    def fail(self, path, message):
        self.failures.append(f"{path}: {message}")

    def require_keys(self, obj, path, allowed, required):
        for key in sorted(set(obj) - allowed):
            self.fail(f"{path}.{key}", "unknown key")
        missing = [k for k in required if k not in obj]
        for key in missing:
            self.fail(f"{path}.{key}", "missing required key")
        return not missing

    def number(self, obj, key, path, positive=False, nonnegative=False):
        if key not in obj:
            return None
        value = obj[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(f"{path}.{key}", f"expected a number, got {value!r}")
            return None
        value = float(value)
        if positive and value <= 0:
            self.fail(f"{path}.{key}", "must be positive")
            return None
        if nonnegative and value < 0:
            self.fail(f"{path}.{key}", "must be nonnegative")
            return None
        return value

    def integer(self, obj, key, path, minimum=None):
        if key not in obj:
            return None
        value = obj[key]
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(f"{path}.{key}", f"expected an integer, got {value!r}")
            return None
        if minimum is not None and value < minimum:
            self.fail(f"{path}.{key}", f"must be at least {minimum}")
            return None
        return value

    def string(self, obj, key, path, choices=None):
        if key not in obj:
            return None
        value = obj[key]
        if not isinstance(value, str):
            self.fail(f"{path}.{key}", f"expected a string, got {value!r}")
            return None
        if choices is not None and value not in choices:
            self.fail(f"{path}.{key}", f"must be one of {sorted(choices)}")
            return None
        return value

    def number_list(self, obj, key, path):
        if key not in obj:
            return None
        value = obj[key]
        if not isinstance(value, list) or not value:
            self.fail(f"{path}.{key}", "expected a nonempty array of numbers")
            return None
        out = []
        for j, v in enumerate(value):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                self.fail(f"{path}.{key}[{j}]", f"expected a number, got {v!r}")
                return None
            out.append(float(v))
        return out


def _uniform_density(lo, hi):
    height = 1.0 / (hi - lo)

    def density(h):
        return height + 0.0 * h

    return density


def _power_density(lo, hi, exponent):
    if exponent == -1.0:
        scale = 1.0 / np.log(hi / lo)
    else:
        a = exponent + 1.0
        scale = a / (hi**a - lo**a)

    def density(h):
        return scale * h**exponent

    return density


def _linear_density(lo, hi, ratio):
    f_lo = 2.0 / ((1.0 + ratio) * (hi - lo))

    def density(h):
        return f_lo * (1.0 + (ratio - 1.0) * (h - lo) / (hi - lo))

    return density


def _parse_gain(walker, obj, path, order):
    if not isinstance(obj, dict):
        walker.fail(path, "expected an object")
        return None
    kind = walker.string(obj, "kind", path, choices={"deterministic", "discrete", "continuous"})
    if kind is None:
        if "kind" not in obj:
            walker.fail(f"{path}.kind", "missing required key")
        return None
    if kind == "deterministic":
        if not walker.require_keys(obj, path, {"kind", "value"}, ["value"]):
            return None
        value = walker.number(obj, "value", path, positive=True)
        if value is None:
            return None
        return ("deterministic", (value,))
    if kind == "discrete":
        if not walker.require_keys(
            obj, path, {"kind", "values", "probabilities"}, ["values", "probabilities"]
        ):
            return None
        values = walker.number_list(obj, "values", path)
        probs = walker.number_list(obj, "probabilities", path)
        if values is None or probs is None:
            return None
        return ("discrete", (values, probs))
    if not walker.require_keys(
        obj, path, {"kind", "lo", "hi", "density"}, ["lo", "hi", "density"]
    ):
        return None
    lo = walker.number(obj, "lo", path, positive=True)
    hi = walker.number(obj, "hi", path, positive=True)
    dens = obj.get("density")
    if not isinstance(dens, dict):
        walker.fail(f"{path}.density", "expected an object")
        return None
    family = walker.string(
        dens, "family", f"{path}.density", choices={"uniform", "power", "linear"}
    )
    if family is None:
        if "family" not in dens:
            walker.fail(f"{path}.density.family", "missing required key")
        return None
    if family == "uniform":
        ok = walker.require_keys(dens, f"{path}.density", {"family"}, [])
        extra = ()
    elif family == "power":
        ok = walker.require_keys(dens, f"{path}.density", {"family", "exponent"}, ["exponent"])
        e = walker.number(dens, "exponent", f"{path}.density")
        extra = (e,)
        ok = ok and e is not None
    else:
        ok = walker.require_keys(dens, f"{path}.density", {"family", "ratio"}, ["ratio"])
        r = walker.number(dens, "ratio", f"{path}.density", positive=True)
        extra = (r,)
        ok = ok and r is not None
    if lo is None or hi is None or not ok:
        return None
    if lo >= hi:
        walker.fail(path, "lo must be below hi")
        return None
    return ("continuous", (lo, hi, family, extra, order))


def _build_gain(parsed):
    kind, args = parsed
    if kind == "deterministic":
        return GainDistribution.deterministic(args[0])
    if kind == "discrete":
        return GainDistribution.discrete(args[0], args[1])
    lo, hi, family, extra, order = args
    if family == "uniform":
        density = _uniform_density(lo, hi)
    elif family == "power":
        density = _power_density(lo, hi, extra[0])
    else:
        density = _linear_density(lo, hi, extra[0])
    return GainDistribution.continuous(lo, hi, density, order=order)


def _parse_types(walker, obj, path):
    if not isinstance(obj, dict):
        walker.fail(path, "expected an object")
        return None
    kind = walker.string(
        obj, "kind", path, choices={"uniform", "power", "linear", "tabulated"}
    )
    if kind is None:
        if "kind" not in obj:
            walker.fail(f"{path}.kind", "missing required key")
        return None
    if kind == "tabulated":
        if not walker.require_keys(
            obj, path, {"kind", "thetas", "cdf"}, ["thetas", "cdf"]
        ):
            return None
        thetas = walker.number_list(obj, "thetas", path)
        cdf = walker.number_list(obj, "cdf", path)
        if thetas is None or cdf is None:
            return None
        return ("tabulated", (thetas, cdf))
    keys = {"kind", "lo", "hi"}
    required = ["lo", "hi"]
    if kind == "power":
        keys = keys | {"exponent"}
        required.append("exponent")
    elif kind == "linear":
        keys = keys | {"ratio"}
        required.append("ratio")
    if not walker.require_keys(obj, path, keys, required):
        return None
    lo = walker.number(obj, "lo", path, nonnegative=True)
    hi = walker.number(obj, "hi", path, positive=True)
    if lo is None or hi is None:
        return None
    if kind == "uniform":
        return ("uniform", (lo, hi))
    if kind == "power":
        e = walker.number(obj, "exponent", path)
        if e is None:
            return None
        return ("power", (lo, hi, e))
    r = walker.number(obj, "ratio", path, positive=True)
    if r is None:
        return None
    return ("linear", (lo, hi, r))


def _build_types(parsed):
    kind, args = parsed
    if kind == "uniform":
        return UniformType(*args)
    if kind == "power":
        return TruncatedPowerType(*args)
    if kind == "linear":
        return TruncatedLinearType(*args)
    return TabulatedType(*args)


def load_config(path):
    """Read and syntax-check a config file; schema checks live in parse_config."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object at top level")
    return data


def parse_config(data, allow_uncertified=False):
    """Validate a parsed document and build (scenario, settings).

    Raises ValidationError carrying one failure string per problem found.
    """
    walker = _Walker()
    schema = walker.string(data, "schema", "$")
    if "schema" not in data:
        walker.fail("$.schema", "missing required key")
    elif schema is not None and schema != SCHEMA_TAG:
        walker.fail("$.schema", f"expected {SCHEMA_TAG!r}, got {schema!r}")
    model = walker.string(data, "model", "$", choices={"fd", "ss"})
    if "model" not in data:
        walker.fail("$.model", "missing required key")
    if walker.failures:
        raise ValidationError("config rejected", failures=walker.failures)

    allowed = _TOP_KEYS_FD if model == "fd" else _TOP_KEYS_SS
    required = ["bandwidth", "noise_density", "users"]
    if model == "ss":
        required += ["total_power", "gain_matrix"]
    walker.require_keys(data, "$", allowed, required)
    seed = walker.integer(data, "seed", "$", minimum=0)
    bandwidth = walker.number(data, "bandwidth", "$", positive=True)
    noise = walker.number(data, "noise_density", "$", positive=True)

    solver_obj = data.get("solver", {})
    settings_kwargs = {}
    if not isinstance(solver_obj, dict):
        walker.fail("$.solver", "expected an object")
    else:
        walker.require_keys(solver_obj, "$.solver", _SOLVER_KEYS, [])
        for key, minimum in (
            ("tax_grid", 1),
            ("mc_samples", 2),
            ("restarts", 0),
            ("regularity_grid", 2),
            ("quadrature_order", 2),
        ):
            value = walker.integer(solver_obj, key, "$.solver", minimum=minimum)
            if value is not None:
                settings_kwargs[key] = value
    order = settings_kwargs.get("quadrature_order", GAUSS_LEGENDRE_ORDER)

    users_obj = data.get("users")
    parsed_users = []
    if not isinstance(users_obj, list) or not users_obj:
        walker.fail("$.users", "expected a nonempty array")
    else:
        for i, user in enumerate(users_obj):
            path = f"$.users[{i}]"
            if not isinstance(user, dict):
                walker.fail(path, "expected an object")
                continue
            if model == "fd":
                walker.require_keys(
                    user, path, {"power", "gain", "types"}, ["power", "gain", "types"]
                )
                power = walker.number(user, "power", path, positive=True)
                gain = _parse_gain(walker, user.get("gain"), f"{path}.gain", order)
                types = _parse_types(walker, user.get("types"), f"{path}.types")
                parsed_users.append((power, gain, types))
            else:
                walker.require_keys(user, path, {"types"}, ["types"])
                types = _parse_types(walker, user.get("types"), f"{path}.types")
                parsed_users.append((types,))

    matrix = None
    total_power = None
    if model == "ss":
        total_power = walker.number(data, "total_power", "$", positive=True)
        matrix_obj = data.get("gain_matrix")
        n = len(parsed_users)
        if not isinstance(matrix_obj, list) or len(matrix_obj) != n:
            walker.fail("$.gain_matrix", f"expected an array of {n} rows")
        else:
            matrix = []
            for i, row in enumerate(matrix_obj):
                good = isinstance(row, list) and len(row) == n
                if good:
                    good = all(
                        isinstance(v, (int, float)) and not isinstance(v, bool)
                        for v in row
                    )
                if not good:
                    walker.fail(f"$.gain_matrix[{i}]", f"expected {n} numbers")
                    matrix = None
                    break
                matrix.append([float(v) for v in row])

    if walker.failures:
        raise ValidationError("config rejected", failures=walker.failures)

    if seed is not None:
        settings_kwargs["seed"] = seed
    settings = SolverSettings(**settings_kwargs)

    try:
        if model == "fd":
            users = []
            for power, gain, types in parsed_users:
                physical = FdUserPhysical(
                    gain=_build_gain(gain), power=power, noise_density=noise
                )
                users.append(FdUser(physical=physical, types=_build_types(types)))
            scenario = FdScenario(
                bandwidth=bandwidth,
                users=tuple(users),
                regularity_grid=settings.regularity_grid,
                allow_uncertified=allow_uncertified,
            )
        else:
            physical = SsPhysical(
                gain_matrix=np.array(matrix), bandwidth=bandwidth, noise_density=noise
            )
            scenario = SsScenario(
                physical=physical,
                total_power=total_power,
                type_dists=tuple(_build_types(t[0]) for t in parsed_users),
                regularity_grid=settings.regularity_grid,
                allow_uncertified=allow_uncertified,
            )
    except SpectramechError as exc:
        raise ValidationError(
            "config values rejected while building the scenario",
            failures=[str(exc)],
        ) from exc
    return scenario, settings


def canonical_digest(data) -> str:
    """Digest of the key-sorted compact serialization; whitespace-independent."""
    canon = json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()
