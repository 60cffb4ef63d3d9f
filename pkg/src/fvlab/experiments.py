"""Named experiment presets, their configuration and deterministic output."""
from __future__ import annotations

import configparser
import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from . import rng as rngmod
from .coalescent import simulate_block_counts, simulate_coalescent
from .empirical import BallQuery, Constant, EmpiricalMeasure
from .errors import SpecParseError
from .fv import (
    cluster_hit_bound_check,
    cluster_mass_bound_check,
    dust_regime_probe,
    first_moment_check,
    population_values,
    second_moment_check,
    support_propagation_probe,
)
from .levy import parse_levy
from .lookdown import event_log_of, format_event_log, simulate_lookdown
from .measure import parse_lambda
from .quadrature import integrate_unit_interval
from .rates import merger_rate
from .speed import Classification, c_lambda, comes_down_from_infinity, v_of_t
from .validation import genealogy_duality, label_invariant_sweep, thinning_equivalence

EXPERIMENTS = ("rates", "speed", "moments", "support", "dust", "bounds", "genealogy", "coalescent")
CSV_COLUMNS = ("experiment", "observable", "n", "t", "replica_group", "value", "stderr")


@dataclass
class ExperimentConfig:
    experiment: str
    lambda_spec: str = "kingman:1"
    levy_spec: str = "brownian:sigma=1"
    n: int = 100
    t: float | None = None
    tgrid: str | None = None
    replicas: int = 100
    seed: int = 0
    out: str | None = None
    format: str = "json"
    event_cap: int | None = None
    workers: int = 1
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise SpecParseError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if int(self.replicas) < 1:
            raise SpecParseError("replicas must be >= 1")
        if int(self.n) < 1:
            raise SpecParseError("n must be >= 1")
        if self.format not in ("csv", "json"):
            raise SpecParseError("format must be csv or json")

    def resolved(self) -> dict:
        out = asdict(self)
        out.pop("out")
        out["params"] = dict(sorted(self.params.items()))
        return out

    def times(self, default: float = 1.0) -> list[float]:
        if self.tgrid:
            return parse_tgrid(self.tgrid)
        return [float(self.t if self.t is not None else default)]

    def param(self, key: str, default=None, kind=str):
        raw = self.params.get(key)
        if raw is None:
            return default
        try:
            return kind(raw)
        except ValueError:
            raise SpecParseError(f"bad value for parameter {key}: {raw!r}") from None


def parse_tgrid(spec: str) -> list[float]:
    """``geo:<lo>,<hi>,<count>`` or ``lin:<lo>,<hi>,<count>``."""
    kind, _, body = spec.partition(":")
    try:
        lo, hi, count = body.split(",")
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError:
        raise SpecParseError(f"bad t-grid {spec!r}") from None
    if count < 1 or not 0 <= lo <= hi:
        raise SpecParseError(f"bad t-grid {spec!r}")
    if kind == "geo":
        if lo <= 0:
            raise SpecParseError("geometric grid needs lo > 0")
        return np.geomspace(lo, hi, count).tolist()
    if kind == "lin":
        return np.linspace(lo, hi, count).tolist()
    raise SpecParseError(f"t-grid kind must be geo or lin, got {kind!r}")


def parse_mu0(spec: str) -> EmpiricalMeasure:
    """``point:<x>`` or ``uniform:<x1>;<x2>;...`` with vector coordinates joined by ``/``."""
    kind, _, body = spec.partition(":")
    try:
        pts = [[float(c) for c in p.split("/")] for p in body.split(";")]
    except ValueError:
        raise SpecParseError(f"bad mu0 {spec!r}") from None
    if kind == "point" and len(pts) == 1:
        return EmpiricalMeasure.point(pts[0])
    if kind == "uniform":
        return EmpiricalMeasure.uniform(pts)
    raise SpecParseError(f"mu0 must be point:<x> or uniform:<x1>;..., got {spec!r}")


def _ball(spec: str) -> BallQuery:
    # center coordinates joined by '/', then ',radius'
    try:
        center, radius = spec.split(",")
        return BallQuery(tuple(float(c) for c in center.split("/")), float(radius))
    except ValueError:
        raise SpecParseError(f"ball must be <x1/x2...>,<radius>, got {spec!r}") from None


@dataclass
class Result:
    rows: list = field(default_factory=list)  # CSV long-format rows
    payload: dict = field(default_factory=dict)  # JSON body
    text: str | None = None  # raw dumps (event logs)

    def row(self, experiment, observable, n, t, group, value, stderr=""):
        self.rows.append(
            {
                "experiment": experiment,
                "observable": observable,
                "n": n,
                "t": "" if t is None else t,
                "replica_group": group,
                "value": value,
                "stderr": stderr,
            }
        )


# -- presets ----------------------------------------------------------------
def _rate_oracle(lam, b, k) -> float:
    terms = [lam.kingman_mass if k == 2 else 0.0, lam.top_mass if k == b else 0.0]
    terms += [m * x ** (k - 2) * (1 - x) ** (b - k) for x, m in lam.atoms]
    if lam.has_continuous_part:
        terms.append(integrate_unit_interval(lambda x: x ** (k - 2) * (1 - x) ** (b - k) * lam.interior_density(x)))
    return math.fsum(terms)


def run_rates(cfg: ExperimentConfig) -> Result:
    lam = parse_lambda(cfg.lambda_spec)
    bmax = cfg.param("bmax", 6, int)
    res = Result()
    table = []
    for b in range(2, bmax + 1):
        for k in range(2, b + 1):
            rate = merger_rate(lam, b, k)
            oracle = _rate_oracle(lam, b, k)
            rel = abs(rate - oracle) / abs(oracle) if oracle else abs(rate)
            table.append({"b": b, "k": k, "rate": rate, "oracle": oracle, "rel_err": rel})
            res.row("rates", f"lambda[b={b},k={k}]", b, None, "analytic", rate, abs(rate - oracle))
    res.payload = {"table": table, "max_rel_err": max((r["rel_err"] for r in table), default=0.0)}
    return res


def run_speed(cfg: ExperimentConfig) -> Result:
    lam = parse_lambda(cfg.lambda_spec)
    times = cfg.times(0.1)
    # Lambda({1}) > 0 leaves v(t) undefined; block counts are still reported
    cdi = comes_down_from_infinity(lam) if lam.top_mass == 0 else Classification.UNDETERMINED
    vs = [v_of_t(lam, t, cdi) if cdi is Classification.YES else math.nan for t in times]
    c = c_lambda(lam)
    res = Result()
    counts = []
    for i in range(cfg.replicas):
        nt = simulate_block_counts(lam, cfg.n, times, rngmod.replica_rng(cfg.seed, i))
        counts.append(nt.tolist())
        for t, x in zip(times, nt):
            res.row("speed", "N_t", cfg.n, t, i, int(x))
    for t, v in zip(times, vs):
        res.row("speed", "v(t)", cfg.n, t, "analytic", v)
        res.row("speed", "c_lambda/t", cfg.n, t, "analytic", c / t)
    arr = np.asarray(counts, dtype=float)
    ratio = arr / np.asarray(vs)
    res.payload = {
        "cdi": cdi.value,
        "c_lambda": c,
        "times": times,
        "v": vs,
        "median_ratio": np.median(ratio, axis=0).tolist(),
        "lower_envelope_fraction": np.mean(arr * np.asarray(times) >= 0.8 * c, axis=0).tolist(),
        "block_counts": counts,
    }
    return res


def _fv_inputs(cfg: ExperimentConfig):
    lam = parse_lambda(cfg.lambda_spec)
    levy = parse_levy(cfg.levy_spec)
    mu0 = parse_mu0(cfg.param("mu0", "point:" + "/".join(["0"] * levy.dim)))
    return lam, levy, mu0


def run_moments(cfg: ExperimentConfig) -> Result:
    lam, levy, mu0 = _fv_inputs(cfg)
    t = cfg.times(0.5)[0]
    phi = _ball(cfg.param("ball", "0,1"))
    psi = _ball(cfg.param("ball2", cfg.param("ball", "0,1")))
    grid = cfg.param("grid", 32, int)
    values = population_values(lam, levy, mu0, cfg.n, t, [phi, psi], cfg.replicas, cfg.seed, cfg.workers)
    one = Constant(1.0)
    ones = [[np.ones(cfg.n), np.ones(cfg.n)] for _ in range(cfg.replicas)]
    reports = [
        first_moment_check(lam, levy, mu0, t, phi, cfg.n, cfg.replicas, cfg.seed, values=[v[0] for v in values], name="phi"),
        first_moment_check(lam, levy, mu0, t, one, cfg.n, cfg.replicas, cfg.seed, values=[v[0] for v in ones], name="1"),
        second_moment_check(lam, levy, mu0, t, phi, psi, cfg.n, cfg.replicas, cfg.seed, grid=grid, values=values),
        second_moment_check(lam, levy, mu0, t, phi, phi, cfg.n, cfg.replicas, cfg.seed, grid=grid,
                            values=[[v[0], v[0]] for v in values], bound_sup=1.0, name="phi,phi"),
        second_moment_check(lam, levy, mu0, t, one, one, cfg.n, cfg.replicas, cfg.seed, grid=grid, values=ones, name="1,1"),
    ]
    res = Result()
    for r in reports:
        res.row("moments", r.observable, cfg.n, t, "all", r.estimate, r.stderr)
        res.row("moments", r.observable + " target", cfg.n, t, "analytic", r.target, r.target_stderr)
        res.row("moments", r.observable + " z", cfg.n, t, "all", r.z)
    res.payload = {"reports": [r.to_dict() for r in reports]}
    return res


def run_support(cfg: ExperimentConfig) -> Result:
    lam, levy, mu0 = _fv_inputs(cfg)
    t = cfg.times(0.1)[0]
    k = cfg.param("k", 1, int)
    eps = cfg.param("eps", 0.25, float)
    ns = [int(x) for x in cfg.param("nsweep", str(cfg.n)).split(",")]
    queries = cfg.param("query")
    qpts = [[float(c) for c in q.split("/")] for q in queries.split(";")] if queries else None
    res = Result()
    reports = []
    for n in ns:
        r = support_propagation_probe(lam, levy, mu0, t, k, eps, n, cfg.replicas, cfg.seed, query_points=qpts, workers=cfg.workers)
        reports.append(r.to_dict())
        res.row("support", f"hit_fraction[k={k},eps={eps}]", n, t, "all", r.hit_fraction, r.stderr)
        res.row("support", f"atom_fraction[k={k},eps={eps}]", n, t, "all", r.atom_fraction, r.atom_stderr)
        for q in r.queries:
            y = "/".join(repr(c) for c in q["point"])
            res.row("support", f"query_hit[y={y}]", n, t, "all", q["probability"], q["stderr"])
    res.payload = {"reports": reports}
    return res


def run_dust(cfg: ExperimentConfig) -> Result:
    lam, levy, mu0 = _fv_inputs(cfg)
    t = cfg.times(0.5)[0]
    r = dust_regime_probe(lam, levy, mu0, t, cfg.n, cfg.replicas, cfg.seed, workers=cfg.workers)
    res = Result()
    res.row("dust", "singleton_fraction", cfg.n, t, "all", r.singleton_fraction, r.stderr)
    res.row("dust", "exp(-rate t)", cfg.n, t, "analytic", math.exp(-r.dust_rate * t))
    res.row("dust", "ks_pvalue", cfg.n, t, "all", r.ks_pvalue)
    if r.collapse_fraction is not None:
        res.row("dust", "collapse_fraction", cfg.n, t, "all", r.collapse_fraction)
        res.row("dust", "collapse_lower_bound", cfg.n, t, "analytic", r.collapse_lower_bound)
    res.payload = {"report": r.to_dict()}
    return res


def run_bounds(cfg: ExperimentConfig) -> Result:
    lam, levy, mu0 = _fv_inputs(cfg)
    t = cfg.times(0.5)[0]
    s = cfg.param("s", t / 2.0, float)
    ball = _ball(cfg.param("ball", "0,1"))
    eps = cfg.param("eps", 0.25, float)
    b = cfg.param("b", 0.1, float)
    bset = cfg.param("bset")
    bpoints = [[float(c) for c in p.split("/")] for p in bset.split(";")] if bset else mu0.points[: max(1, len(mu0) // 2)].tolist()
    r42 = cluster_mass_bound_check(lam, levy, mu0, t, s, ball, cfg.n, cfg.replicas, cfg.seed, workers=cfg.workers)
    r43 = cluster_hit_bound_check(lam, levy, mu0, t, bpoints, eps, b, cfg.n, cfg.replicas, cfg.seed, workers=cfg.workers)
    res = Result()
    for rep in (r42, r43):
        for st in rep.strata:
            res.row("bounds", f"{rep.observable} {st.label}", cfg.n, t, "all", st.frequency, st.stderr)
            res.row("bounds", f"{rep.observable} {st.label} bound", cfg.n, t, "analytic", st.bound)
    res.payload = {"cluster_mass": r42.to_dict(), "cluster_hit": r43.to_dict()}
    return res


def run_genealogy(cfg: ExperimentConfig) -> Result:
    lam = parse_lambda(cfg.lambda_spec)
    n = cfg.n
    duality = genealogy_duality(lam, n, cfg.replicas, cfg.seed)
    res = Result()
    reports = [duality]
    if lam.has_continuous_part or lam.atoms or lam.top_mass:
        reports.append(thinning_equivalence(lam, n, cfg.replicas, cfg.seed))
    labels = label_invariant_sweep([lam], min(cfg.replicas, 1000), cfg.seed, n_range=(2, max(2, n)))
    for r in reports:
        res.row("genealogy", r.name + " pvalue", n, None, "all", r.pvalue)
    res.row("genealogy", "label violations", n, None, "all", labels["violations"])
    res.payload = {"gof": [r.to_dict() for r in reports], "labels": labels}
    return res


def run_coalescent(cfg: ExperimentConfig) -> Result:
    lam = parse_lambda(cfg.lambda_spec)
    horizon = cfg.times(math.inf)[0]
    res = Result()
    if cfg.param("lookdown", "0") in ("1", "true", "yes"):
        levy = parse_levy(cfg.levy_spec)
        mu0 = parse_mu0(cfg.param("mu0", "point:" + "/".join(["0"] * levy.dim)))
        if not math.isfinite(horizon):
            raise SpecParseError("lookdown dump needs --t")
        chunks = []
        for i in range(cfg.replicas):
            traj = simulate_lookdown(
                cfg.n, lam, levy, mu0, [horizon], rngmod.replica_rng(cfg.seed, i), event_cap=cfg.event_cap, seed=cfg.seed
            )
            chunks.append(format_event_log(event_log_of(traj)))
        res.text = "".join(chunks)
        return res
    paths = []
    for i in range(cfg.replicas):
        path = simulate_coalescent(lam, cfg.n, horizon, rngmod.replica_rng(cfg.seed, i))
        paths.append([[t, list(idx)] for t, idx in path.events])
        for t, idx in path.events:
            res.row("coalescent", "merge:" + ",".join(map(str, idx)), cfg.n, t, i, len(idx))
    res.payload = {"paths": paths}
    return res


PRESETS = {
    "rates": run_rates,
    "speed": run_speed,
    "moments": run_moments,
    "support": run_support,
    "dust": run_dust,
    "bounds": run_bounds,
    "genealogy": run_genealogy,
    "coalescent": run_coalescent,
}


def run(cfg: ExperimentConfig) -> Result:
    return PRESETS[cfg.experiment](cfg)


# -- serialisation ----------------------------------------------------------
def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def render(cfg: ExperimentConfig, result: Result) -> str:
    """Deterministic text output with the version and resolved config embedded."""
    if result.text is not None:
        return result.text  # event logs carry their own header
    if cfg.format == "json":
        body = {
            "fvlab_version": __version__,
            "config": _clean(cfg.resolved()),
            "seed": cfg.seed,
            "experiment": cfg.experiment,
            "results": _clean(result.payload),
        }
        return json.dumps(body, sort_keys=True, indent=2) + "\n"
    buf = io.StringIO()
    buf.write(f"# fvlab {__version__}\n")
    buf.write(f"# config: {json.dumps(_clean(cfg.resolved()), sort_keys=True)}\n")
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in result.rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


# -- config files -----------------------------------------------------------
_FIELD_TYPES = {"n": int, "t": float, "replicas": int, "seed": int, "event_cap": int, "workers": int}
_ALIASES = {"lambda": "lambda_spec", "levy": "levy_spec"}


def load_config_file(path: str, experiment: str) -> dict:
    """Values from ``[defaults]`` overlaid with the ``[<experiment>]`` section.

    Keys that are not config fields become experiment parameters.
    """
    parser = configparser.ConfigParser(interpolation=None)
    if not parser.read(path, encoding="utf-8"):
        raise SpecParseError(f"cannot read config file {path!r}")
    merged: dict[str, str] = {}
    for section in ("defaults", experiment):
        if parser.has_section(section):
            merged.update(parser.items(section))
    names = {f.name for f in fields(ExperimentConfig)}
    out: dict = {"params": {}}
    for key, value in merged.items():
        key = _ALIASES.get(key.replace("-", "_"), key.replace("-", "_"))
        if key in names and key not in ("experiment", "params"):
            try:
                out[key] = _FIELD_TYPES.get(key, str)(value)
            except ValueError:
                raise SpecParseError(f"bad value for {key}: {value!r}") from None
        else:
            out["params"][key] = value
    return out
