"""Configuration-driven runs: fixture → connection → f → τ → metric → certificate.

A :class:`RunConfig` names a fixture and the metric data (n, ε, γ, sampling,
tolerance overrides). :func:`run_pipeline` executes the stages and returns
a :class:`PipelineResult` whose :meth:`~PipelineResult.document` is the JSON
report. Reports are byte-identical for identical configs except for the
``timestamp`` block, which also holds the stage runtimes.
"""

from __future__ import annotations

import contextlib
import dataclasses
import datetime as _dt
import functools
import hashlib
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import centroaffine as C
from . import curvature as CV
from . import fixtures as FX
from . import kerb as K
from . import metrics as M
from . import surface as S
from . import tau as T

SCHEMA_VERSION = "confsym.report/1"
EXPECTED_FLAT = "EXPECTED_FLAT"
GOLDEN_SLACK = 0.1

STAGES = ("config", "centroaffine", "surface_geometry", "kerb", "tau_solver", "metric_factory",
          "curvature_engine")


class ConfigError(ValueError):
    """Invalid run configuration."""


class StageError(RuntimeError):
    """A module error raised inside a named pipeline stage."""

    def __init__(self, stage, error):
        super().__init__(f"[{stage}] {type(error).__name__}: {error}")
        self.stage = stage
        self.error = error


@contextlib.contextmanager
def stage(name, timings=None):
    """Tag any exception raised in the block with the stage name; record runtime."""
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    finally:
        if timings is not None:
            timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


# ---------------------------------------------------------------------------
# configuration

DEFAULT_GRID = {"ny": 5, "per_axis": 3, "margin": 0.05, "box": 0.5, "kerb_n": 9}


@dataclass
class RunConfig:
    """Everything that determines a run.

    Attributes
    ----------
    fixture : str
        Registry name (see :func:`confsym.fixtures.fixture_names`).
    n : int
        Metric dimension, 4 to 8.
    epsilon : int
        Sign in W = ε ω⊗ω.
    gamma : str or None
        Signs of γ on V such as ``"+-"``; ``None`` means all ``+`` of length n − 4.
    params : dict
        Fixture parameters (``a`` for ``zpow``).
    grid : dict
        Sampling: ``ny`` (y-grid per axis), ``per_axis`` (p/v stencil),
        ``margin``, ``box`` (half-width of the p/v cube), ``kerb_n``.
    tolerances : dict
        Overrides of :data:`confsym.curvature.DEFAULT_TOLERANCES`.
    kerb : bool
        Run the Ker 𝓑 stage (transport, immersion, quadric fit).
    out : str or None
        Report path.
    """

    fixture: str = "sphere"
    n: int = 4
    epsilon: int = 1
    gamma: str | None = None
    params: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    kerb: bool = False
    out: str | None = None

    def __post_init__(self):
        self.n = int(self.n)
        self.epsilon = int(self.epsilon)
        if self.gamma is None:
            self.gamma = "+" * max(self.n - 4, 0)
        self.gamma = self.gamma.replace("−", "-")
        self.grid = {**DEFAULT_GRID, **(self.grid or {})}
        self.params = {k: float(v) for k, v in (self.params or {}).items()}
        self.tolerances = {k: float(v) for k, v in (self.tolerances or {}).items()}
        self.validate()

    def validate(self):
        if not 4 <= self.n <= 8:
            raise ConfigError(f"n must be in 4..8, got {self.n}")
        if self.epsilon not in (1, -1):
            raise ConfigError(f"epsilon must be +1 or -1, got {self.epsilon}")
        if len(self.gamma) != self.n - 4 or set(self.gamma) - {"+", "-"}:
            raise ConfigError(f"gamma {self.gamma!r} must be n - 4 = {self.n - 4} signs from '+-'")
        if self.fixture not in FX.fixture_names():
            raise ConfigError(f"unknown fixture {self.fixture!r}; known: {', '.join(FX.fixture_names())}")
        unknown = set(self.tolerances) - set(CV.DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigError(f"unknown tolerance names: {', '.join(sorted(unknown))}")
        unknown = set(self.grid) - set(DEFAULT_GRID)
        if unknown:
            raise ConfigError(f"unknown grid keys: {', '.join(sorted(unknown))}")

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        extra = set(data) - names
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(extra))}")
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        """Canonical form; ``out`` is excluded because it does not affect results."""
        return {"fixture": self.fixture, "params": dict(sorted(self.params.items())), "n": self.n,
                "epsilon": self.epsilon, "gamma": self.gamma, "grid": dict(sorted(self.grid.items())),
                "tolerances": dict(sorted(self.tolerances.items())), "kerb": self.kerb}

    @property
    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# surface data (cached per fixture)

@dataclass
class SurfaceData:
    fixture: FX.Fixture
    chart: C.FlatChart
    conn: S.SurfaceConnection
    rho: object
    f: object
    alpha: S.AreaForm
    f_source: str
    residuals: dict


@functools.lru_cache(maxsize=16)
def _surface_cached(name, params):
    timings = {}
    with stage("centroaffine", timings):
        fx = FX.get_fixture(name, **dict(params))
        chart = C.flat_chart(fx.embedding, fx.flat_domain)
        conn = C.centroaffine_connection(chart.embedding).conn
    with stage("surface_geometry", timings):
        rho = conn.ricci_field()
        base = np.array([fx.basepoint])
        rf = C.recover_f(conn, fx.basepoint, float(chart.x3.values(base)[0]), candidate=chart.x3,
                         grid=fx.flat_domain.grid(5))
        alpha = S.parallel_area_form(conn, tuple(fx.basepoint))
    return SurfaceData(fx, chart, conn, rho, rf.f, alpha, rf.source,
                       {**rf.residuals, "area_loop": alpha.loop_residual}), timings


def surface_data(name, params=None, timings=None):
    """Flat chart, centroaffine connection, f and α for a fixture (memoized)."""
    key = tuple(sorted((params or {}).items()))
    data, t = _surface_cached(name, key)
    if timings is not None:
        for k, v in t.items():
            timings.setdefault(k, v)
    return data


# ---------------------------------------------------------------------------
# classification

def case_label(kind, quadric):
    """Case letter for a parallel-Ricci surface from the signature of its quadric."""
    if kind not in (S.PARALLEL_RICCI, S.FLAT) or quadric is None:
        return None
    pos, neg, zero = quadric.signature
    if pos + neg == 1:
        return "a"
    if pos + neg == 2:
        return "b" if pos * neg == 0 else "c"
    return "d"


def classify(config, timings=None):
    """Classification record: Ricci type, Ker 𝓑, immersion, quadric fit and case label."""
    timings = {} if timings is None else timings
    sd = surface_data(config.fixture, config.params, timings)
    dom = sd.fixture.flat_domain
    with stage("surface_geometry", timings):
        cls = S.classify_connection(sd.conn, dom.grid(5))
    record = {"fixture": sd.fixture.name, "params": dict(config.params), "kind": cls.kind,
              "expected": sd.fixture.expected, "ricci_signature": cls.signature,
              "mixed": cls.mixed, "residuals": dict(cls.residuals)}
    if not cls.residuals["codazzi"] < 1e-8:
        record.update(case=None, kerb=None)
        return record, None, sd
    with stage("kerb", timings):
        rep = K.kerb_analysis(sd.conn, sd.rho, dom, n=int(config.grid["kerb_n"]))
        pts, F = K.immersion_samples(rep, sd.alpha)
        _, emb_res = K.embedding_match(F, sd.chart.embedding.values(pts))
        fit = K.quadric_fit(F)
    quadric_ok = fit.residual < 1e-6
    record["kerb"] = {"dimension": rep.dimension, "loop_defect": rep.loop_defect,
                      "embedding_match": emb_res, "quadric_residual": fit.residual,
                      "quadric_signature": list(fit.signature)}
    label = case_label(cls.kind, fit if quadric_ok else None)
    record["case"] = label
    if label == "d":
        record["definite"] = fit.signature[1] == 0 or fit.signature[0] == 0
    return record, (pts, F), sd


def classification_ok(record):
    """Agreement with the fixture's declared classification and case."""
    fx = FX.get_fixture(record["fixture"], **record["params"])
    ok = record["kind"] == fx.expected
    if fx.case is not None:
        ok = ok and record.get("case") == fx.case
    return ok


# ---------------------------------------------------------------------------
# τ, metric, verification

def solve(config, timings=None):
    sd = surface_data(config.fixture, config.params, timings)
    with stage("tau_solver", timings):
        sol = T.solve_tau(sd.conn, sd.f, sd.alpha, config.epsilon, grid=sd.fixture.flat_domain.grid(5))
    return sd, sol


def tau_residual(sd, sol, n=9):
    """max |𝓛τ − ε α⊗α| on an ``n × n`` grid."""
    grid = sd.fixture.flat_domain.grid(n)
    lt = T.L_apply(sd.conn, sd.rho, sol.tau, grid)
    a = sd.alpha.a.values(grid)
    return float(np.abs(lt - sol.epsilon * a * a).max())


def build_metric(config, timings=None):
    sd, sol = solve(config, timings)
    with stage("metric_factory", timings):
        g = M.build_g(sd.conn, sd.rho, sol.tau, M.InnerProductV.from_signs(config.gamma), config.n,
                      pv_box=config.grid["box"])
    return sd, sol, g


def sample_points(config, g, sd):
    return g.sample_points(sd.fixture.flat_domain, ny=int(config.grid["ny"]),
                           per_axis=int(config.grid["per_axis"]), margin=config.grid["margin"])


@dataclass
class PipelineResult:
    config: RunConfig
    report: CV.VerificationReport
    flags: list
    stages: dict
    timings: dict

    @property
    def status(self):
        return self.report.status

    @property
    def exit_code(self):
        return exit_code(self.status)

    def document(self, timestamp=None):
        """The JSON report as a dict."""
        return report_document(self.config, "verify", self.status, self.report.checks, self.report.info,
                               self.flags, self.stages, self.timings, timestamp)


def _flags(sd, rep):
    """Verdict labels: EXPECTED_FLAT for the flat fixture, plus the two equivalences."""
    flags = [EXPECTED_FLAT] if sd.fixture.expected == S.FLAT else []
    for name, yes, no in (("local_symmetry", "LOCALLY_SYMMETRIC", "NOT_LOCALLY_SYMMETRIC"),
                          ("ricci_recurrence", "RICCI_RECURRENT", "NOT_RICCI_RECURRENT")):
        c = rep.check(name)
        if c.status == CV.OK:
            flags.append(yes if c.residual < c.tolerance else no)
    return flags


def run_pipeline(config, write=True):
    """Execute the full chain and certify the metric.

    Raises
    ------
    StageError
        Wrapping the first module error, tagged with its stage.
    """
    timings = {}
    stages = {}
    if config.kerb:
        record, _, _ = classify(config, timings)
        stages["classify"] = record
    sd, sol, g = build_metric(config, timings)
    with stage("tau_solver", timings):
        stages["tau"] = {"c": sol.c, "base_line": sol.base_line, "c_residual": sol.c_residual,
                         "L_residual": tau_residual(sd, sol), "f_source": sd.f_source}
    with stage("curvature_engine", timings):
        pts = sample_points(config, g, sd)
        rep = CV.verify_class(g, pts, epsilon=config.epsilon, alpha=sd.alpha, tolerances=config.tolerances)
    flags = _flags(sd, rep)
    stages["metric"] = {"provenance": g.provenance, "signature": g.signature, "points": len(pts)}
    result = PipelineResult(config, rep, flags, stages, timings)
    if write and config.out:
        write_json(result.document(), config.out)
    return result


# ---------------------------------------------------------------------------
# reports

def exit_code(status):
    return {CV.OK: 0, CV.FAIL: 1, CV.INDETERMINATE: 2}[status]


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def report_document(config, kind, status, checks, info, flags, stages, timings, timestamp=None):
    """Assemble a schema-versioned report.

    Fields: ``schema_version``, ``kind``, ``config``, ``config_hash``,
    ``provenance``, ``status``, ``exit_code``, ``checks`` (each with name,
    residual, tolerance, pass, status), ``info``, ``flags``, ``stages`` and
    ``timestamp`` (``utc`` plus ``runtime_s`` per stage). Only ``timestamp``
    varies between runs of the same config.
    """
    from . import __version__

    ts = timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return _clean({
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "config": config.to_dict(),
        "config_hash": config.hash,
        "provenance": {"fixture": config.fixture, "params": config.params, "package": "confsym",
                       "version": __version__},
        "status": status,
        "exit_code": exit_code(status),
        "checks": [c.as_dict() for c in checks],
        "info": info,
        "flags": flags,
        "stages": stages,
        "timestamp": {"utc": ts, "runtime_s": {k: round(v, 4) for k, v in sorted(timings.items())},
                      "total_s": round(sum(timings.values()), 4)},
    })


def dumps(doc):
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(doc, path):
    with open(path, "w") as fh:
        fh.write(dumps(doc))


def strip_timestamp(doc):
    return {k: v for k, v in doc.items() if k != "timestamp"}


def golden_record(doc):
    """The part of a report kept as a regression golden."""
    return {"config_hash": doc["config_hash"], "config": doc["config"], "status": doc["status"],
            "residuals": {c["name"]: c["residual"] for c in doc["checks"]}}


def compare_golden(doc, golden, slack=GOLDEN_SLACK, floor_fraction=1e-3):
    """Residual-by-residual comparison with a golden record.

    A residual matches when it is within ``slack`` (relative) of the golden
    value, or when both sit below ``floor_fraction`` times the check
    tolerance, where rounding noise dominates. Returns a list of mismatch
    descriptions (empty when everything matches).
    """
    problems = []
    if doc["config_hash"] != golden["config_hash"]:
        problems.append("config hash differs")
    if doc["status"] != golden["status"]:
        problems.append(f"status {doc['status']} != {golden['status']}")
    tols = {c["name"]: c["tolerance"] for c in doc["checks"]}
    now = {c["name"]: c["residual"] for c in doc["checks"]}
    for name, ref in golden["residuals"].items():
        if name not in now:
            problems.append(f"{name}: missing")
            continue
        r = now[name]
        if isinstance(r, str) or isinstance(ref, str):
            if r != ref:
                problems.append(f"{name}: {r} != {ref}")
            continue
        floor = floor_fraction * tols[name]
        if max(abs(r), abs(ref)) <= floor:
            continue
        if abs(r - ref) > slack * abs(ref):
            problems.append(f"{name}: {r:.3e} vs golden {ref:.3e}")
    for name in set(now) - set(golden["residuals"]):
        problems.append(f"{name}: not in golden")
    return problems
