"""Experiment configuration stored as YAML.

Boundary data (``q``, fluxes, synthetic truths) are given either as a number
or as a Fourier block::

    q_S: {mean: 0.5, cos: [[2, 0.3]], sin: []}

Every physical precondition is checked at load time and reported with the
dotted path of the offending field.
"""

import math
import numbers
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from typing import Optional

import numpy as np
import yaml

from .exceptions import ConfigError, RobinLabError
from .geometry import AnnularDomain, MetricTensor, StarCurve
from .spectral import FourierSeries


def _opt(default, kind, **checks):
    if isinstance(default, (list, dict)):
        return field(default_factory=lambda: _copy(default), metadata={"kind": kind, **checks})
    return field(default=default, metadata={"kind": kind, **checks})


def _copy(obj):
    return yaml.safe_load(yaml.safe_dump(obj))


# --------------------------------------------------------------------------
# field specs
# --------------------------------------------------------------------------

def normalize_spec(value, path):
    """Return a number or ``{mean, cos, sin}`` with integer orders and float coefficients."""
    if isinstance(value, bool):
        raise ConfigError(f"{path}: expected a number or a Fourier block, got a boolean")
    if isinstance(value, numbers.Real):
        if not math.isfinite(value):
            raise ConfigError(f"{path}: value must be finite")
        return float(value)
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected a number or a mapping with mean/cos/sin")
    extra = set(value) - {"mean", "cos", "sin"}
    if extra:
        raise ConfigError(f"{path}: unknown keys {sorted(extra)}")
    out = {"mean": 0.0, "cos": [], "sin": []}
    mean = value.get("mean", 0.0)
    if isinstance(mean, bool) or not isinstance(mean, numbers.Real):
        raise ConfigError(f"{path}.mean: expected a number")
    out["mean"] = float(mean)
    for kind in ("cos", "sin"):
        terms = value.get(kind, []) or []
        if not isinstance(terms, list):
            raise ConfigError(f"{path}.{kind}: expected a list of [order, coefficient] pairs")
        for i, term in enumerate(terms):
            if (not isinstance(term, (list, tuple)) or len(term) != 2 or isinstance(term[0], bool)
                    or not isinstance(term[0], numbers.Integral) or int(term[0]) < 1
                    or not isinstance(term[1], numbers.Real)):
                raise ConfigError(f"{path}.{kind}[{i}]: expected [order >= 1, coefficient]")
            out[kind].append([int(term[0]), float(term[1])])
    return out


def spec_to_series(spec, boundary="S"):
    """Convert a normalized spec into a :class:`FourierSeries`."""
    if isinstance(spec, numbers.Real):
        return FourierSeries.constant(float(spec), boundary)
    order = max([n for n, _ in spec["cos"] + spec["sin"]], default=0)
    cos, sin = np.zeros(order), np.zeros(order)
    for n, c in spec["cos"]:
        cos[n - 1] += c
    for n, c in spec["sin"]:
        sin[n - 1] += c
    return FourierSeries(spec["mean"], cos, sin, boundary)


def spec_value(spec, boundary="S"):
    """Constant specs stay numbers (so spectral backends apply); others become series."""
    if isinstance(spec, numbers.Real):
        return float(spec)
    series = spec_to_series(spec, boundary)
    return series.a0 if series.order == 0 or (not series.cos.any() and not series.sin.any()) else series


def spec_range(spec):
    """Minimum and maximum of the spec over a fine angular grid."""
    if isinstance(spec, numbers.Real):
        return float(spec), float(spec)
    vals = spec_to_series(spec)(np.linspace(0, 2 * np.pi, 4096, endpoint=False))
    return float(vals.min()), float(vals.max())


# --------------------------------------------------------------------------
# sections
# --------------------------------------------------------------------------

@dataclass
class CurveConfig:
    radius: float = _opt(1.0, "float", min=0.0, strict=True)
    harmonics: list = _opt([], "harmonics")


@dataclass
class GeometryConfig:
    inner: CurveConfig = field(default_factory=lambda: CurveConfig(1.0))
    outer: CurveConfig = field(default_factory=lambda: CurveConfig(2.0))
    center: list = _opt([0.0, 0.0], "point")


@dataclass
class MetricConfig:
    kind: str = _opt("identity", "choice", choices=("identity", "constant", "conformal"))
    matrix: list = _opt([[1.0, 0.0], [0.0, 1.0]], "matrix")
    amplitude: float = _opt(0.1, "float")


@dataclass
class ProblemConfig:
    source: float = _opt(0.0, "float")
    q_S: object = _opt(1.0, "spec")
    q_gamma: object = _opt(1.0, "spec")
    flux_S: object = _opt(0.0, "spec")
    flux_gamma: object = _opt(1.0, "spec")
    absorption: float = _opt(0.0, "float", min=0.0)
    kappa: float = _opt(1.0, "float", min=0.0, strict=True)


@dataclass
class DiscretizationConfig:
    n_radial: int = _opt(18, "int", min=2)
    n_angular: int = _opt(224, "int", min=8)
    refinement_levels: int = _opt(1, "int", min=1)
    solver_tol: float = _opt(1e-10, "float", min=1e-14, max=1e-6)


@dataclass
class FluxInversionConfig:
    cutoff: float = _opt(25.0, "float", min=0.0)
    alpha: float = _opt(0.0, "float", min=0.0)
    backend: str = _opt("spectral", "choice", choices=("spectral", "fem"))
    n_gamma: int = _opt(512, "int", min=8)
    truth: object = _opt({"mean": 0.0, "cos": [[2, 1.0]], "sin": [[1, -0.5]]}, "spec_or_none")
    data_file: Optional[str] = _opt(None, "path")
    data_refinement: int = _opt(2, "int", min=1)
    noise: float = _opt(0.0, "float", min=0.0)
    seed: int = _opt(0, "int", min=0)


@dataclass
class RobinInversionConfig:
    cutoff: float = _opt(4.0, "float", min=0.0)
    max_iter: int = _opt(20, "int", min=1)
    alpha: float = _opt(0.0, "float", min=0.0)
    truth: object = _opt({"mean": 0.5, "cos": [[2, 0.3]], "sin": []}, "spec_or_none")
    data_file: Optional[str] = _opt(None, "path")
    data_refinement: int = _opt(2, "int", min=1)
    n_radial: int = _opt(24, "int", min=2)
    n_angular: int = _opt(192, "int", min=8)
    noise: float = _opt(0.0, "float", min=0.0)
    seed: int = _opt(0, "int", min=0)


@dataclass
class StabilityConfig:
    grid: list = _opt(list(range(0, 13)), "int_list")
    family: list = _opt(list(range(2, 13)), "int_list")
    eta: float = _opt(0.125, "float", min=0.0, max=0.25, strict=True, strict_max=True)
    backend: str = _opt("spectral", "choice", choices=("spectral", "fem"))
    lipschitz_cutoff: float = _opt(25.0, "float", min=0.0)
    lipschitz_samples: int = _opt(50, "int", min=1)
    audits: bool = _opt(True, "bool")
    seed: int = _opt(0, "int", min=0)


@dataclass
class ExperimentConfig:
    """All settings of one experiment; see :func:`default_config` for values."""

    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    metric: MetricConfig = field(default_factory=MetricConfig)
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    discretization: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    invert_flux: FluxInversionConfig = field(default_factory=FluxInversionConfig)
    invert_robin: RobinInversionConfig = field(default_factory=RobinInversionConfig)
    stability: StabilityConfig = field(default_factory=StabilityConfig)
    output: str = _opt("out", "str")

    # ---- derived objects ----
    def domain(self):
        g = self.geometry
        try:
            inner = StarCurve(g.inner.radius, tuple(map(tuple, g.inner.harmonics)), tuple(g.center))
            outer = StarCurve(g.outer.radius, tuple(map(tuple, g.outer.harmonics)), tuple(g.center))
            return AnnularDomain(inner, outer)
        except RobinLabError as exc:
            raise ConfigError(f"geometry: {exc}") from None

    def metric_tensor(self):
        m = self.metric
        try:
            if m.kind == "identity":
                return MetricTensor.identity()
            if m.kind == "constant":
                return MetricTensor.constant(m.matrix)
            return MetricTensor.conformal(m.amplitude)
        except (RobinLabError, ValueError) as exc:
            raise ConfigError(f"metric: {exc}") from None

    def robin_problem(self):
        from .fem import RobinProblem
        p = self.problem
        return RobinProblem(source=p.source, q_S=spec_value(p.q_S, "S"), q_gamma=spec_value(p.q_gamma, "GAMMA"),
                            flux_S=spec_value(p.flux_S, "S"), flux_gamma=spec_value(p.flux_gamma, "GAMMA"),
                            absorption=p.absorption, kappa=p.kappa)

    def to_dict(self):
        return asdict(self)

    def validate(self):
        """Cross-field checks; raises :class:`ConfigError` naming the field."""
        self.domain()
        self.metric_tensor()
        p = self.problem
        for name in ("q_S", "q_gamma"):
            lo, hi = spec_range(getattr(p, name))
            if lo < 0:
                raise ConfigError(f"problem.{name}: must be >= 0 everywhere (min {lo:.6g})")
            if hi > p.kappa * (1 + 1e-12):
                raise ConfigError(f"problem.{name}: exceeds kappa={p.kappa:g} (max {hi:.6g})")
        if spec_range(p.q_S)[1] == 0 and spec_range(p.q_gamma)[1] == 0 and p.absorption == 0:
            raise ConfigError("problem.q_S: coercivity guard violated (q vanishes on both boundaries and p = 0)")
        truth = self.invert_robin.truth
        if truth is not None:
            lo, hi = spec_range(truth)
            if lo < 0:
                raise ConfigError(f"invert_robin.truth: must be >= 0 (min {lo:.6g})")
        grid = self.stability.grid
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("stability.grid: must be strictly ascending")
        if any(n < 0 for n in grid):
            raise ConfigError("stability.grid: mode orders must be >= 0")
        if any(n < 1 for n in self.stability.family):
            raise ConfigError("stability.family: mode orders must be >= 1")
        return self


# --------------------------------------------------------------------------
# conversion
# --------------------------------------------------------------------------

def _convert(value, meta, path):
    kind = meta["kind"]
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, numbers.Real) or not math.isfinite(value):
            raise ConfigError(f"{path}: expected a finite number, got {value!r}")
        value = float(value)
        lo, hi = meta.get("min"), meta.get("max")
        if lo is not None and (value < lo or (meta.get("strict") and value == lo)):
            raise ConfigError(f"{path}: must be {'>' if meta.get('strict') else '>='} {lo:g}, got {value:g}")
        if hi is not None and (value > hi or (meta.get("strict_max") and value == hi)):
            raise ConfigError(f"{path}: must be {'<' if meta.get('strict_max') else '<='} {hi:g}, got {value:g}")
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, numbers.Integral):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        if meta.get("min") is not None and value < meta["min"]:
            raise ConfigError(f"{path}: must be >= {meta['min']}, got {value}")
        return int(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true or false, got {value!r}")
        return value
    if kind in ("str", "choice"):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        if kind == "choice" and value not in meta["choices"]:
            raise ConfigError(f"{path}: must be one of {list(meta['choices'])}, got {value!r}")
        return value
    if kind == "path":
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"{path}: expected a file path or null")
        return value
    if kind == "spec":
        return normalize_spec(value, path)
    if kind == "spec_or_none":
        return None if value is None else normalize_spec(value, path)
    if kind == "int_list":
        if not isinstance(value, list) or any(isinstance(v, bool) or not isinstance(v, numbers.Integral)
                                              for v in value):
            raise ConfigError(f"{path}: expected a list of integers")
        return [int(v) for v in value]
    if kind == "point":
        if not isinstance(value, list) or len(value) != 2 or any(
                isinstance(v, bool) or not isinstance(v, numbers.Real) for v in value):
            raise ConfigError(f"{path}: expected [x, y]")
        return [float(v) for v in value]
    if kind == "matrix":
        try:
            arr = np.asarray(value, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}: expected a 2x2 numeric matrix") from None
        if arr.shape != (2, 2) or not np.all(np.isfinite(arr)):
            raise ConfigError(f"{path}: expected a 2x2 numeric matrix")
        return arr.tolist()
    if kind == "harmonics":
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list of [k, a, b] triples")
        out = []
        for i, term in enumerate(value):
            if (not isinstance(term, list) or len(term) != 3 or isinstance(term[0], bool)
                    or not isinstance(term[0], numbers.Integral) or term[0] < 1
                    or not all(isinstance(t, numbers.Real) for t in term[1:])):
                raise ConfigError(f"{path}[{i}]: expected [k >= 1, a, b]")
            out.append([int(term[0]), float(term[1]), float(term[2])])
        return out
    raise AssertionError(kind)


def _from_dict(base, data, path):
    """Overlay ``data`` on the dataclass instance ``base`` with type and range checks."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    known = {f.name: f for f in fields(base)}
    extra = set(data) - set(known)
    if extra:
        prefix = f"{path}." if path else ""
        raise ConfigError(f"{prefix}{sorted(map(str, extra))[0]}: unknown field")
    kwargs = {}
    for name, value in data.items():
        sub = f"{path}.{name}" if path else name
        current = getattr(base, name)
        if is_dataclass(current):
            kwargs[name] = _from_dict(current, value, sub)
        else:
            kwargs[name] = _convert(value, known[name].metadata, sub)
    return replace(base, **kwargs)


def config_from_dict(data):
    return _from_dict(ExperimentConfig(), data, "").validate()


def load_config(path):
    """Read and validate a YAML config; raises :class:`ConfigError` or ``OSError``."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    return config_from_dict(data or {})


def dump_config(config, path=None):
    text = yaml.safe_dump(config.to_dict(), sort_keys=True, default_flow_style=None)
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


def default_config():
    return ExperimentConfig()


__all__ = ["ExperimentConfig", "CurveConfig", "GeometryConfig", "MetricConfig", "ProblemConfig",
           "DiscretizationConfig", "FluxInversionConfig", "RobinInversionConfig", "StabilityConfig",
           "config_from_dict", "load_config", "dump_config", "default_config", "normalize_spec",
           "spec_to_series", "spec_value", "spec_range"]
