"""Configuration-driven batch runner: ``fkenmotsu --config run.json``.

A config names a model, a command and a seed; the runner executes the
verifiers behind the command and writes a report with one entry per check.
A check passes when its residual is below the tolerance (``bound: upper``)
or at least the tolerance (``bound: lower``).

Exit codes: 0 all checks pass, 1 a check failed, 2 the config is invalid,
3 a numerical error aborted a verifier.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import __version__
from . import dynamics, eisenhart, kenmotsu, soliton
from .errors import (ConfigError, DegenerateRicci, DimensionError, DomainError, DomainExit,
                     GapTooSmall, GeometryError, InvalidParam, NotApplicable, SingularMetric,
                     StepTooCoarse, TransportInconsistent)
from .geometry import curvature, frame_max, vector_field
from .grammar import parse

COMMANDS = ("verify-structure", "verify-identities", "curvature-report", "parallel-dim",
            "sqfi", "soliton", "swrs", "semisymmetry", "eta-einstein", "geodesic-check",
            "conformal-fit")

DEFAULT_TOLERANCES = {
    "structure": 1e-9,
    "identity": 1e-8,
    "formula": 1e-8,
    "bianchi": 1e-8,
    "gap": 1e6,
    "loop": 1e-6,
    "metric_deviation": 1e-8,
    "basis_realization": 1e-8,
    "energy": 1e-6,
    "convergence": 8.0,
    "qfi": 1e-6,
    "killing": 1e-8,
    "sqfi_gate": 1e-3,
    "semisymmetry": 1e-9,
    "einstein": 1e-8,
    "swrs": 1e-8,
    "conformal": 1e-8,
}

# errors meaning "this verifier does not apply here" rather than a numerical failure
_PRECONDITION = (NotApplicable, DimensionError, DegenerateRicci)

_NUMERIC_CODES = {cls.code for cls in (GapTooSmall, TransportInconsistent, StepTooCoarse,
                                        SingularMetric, DomainError, DomainExit)}

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class FamilyConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["constant", "exponential", "affine_exp", "reciprocal", "custom"]
    params: dict[str, float] = Field(default_factory=dict)
    f: Optional[str] = None
    W: Optional[str] = None


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: Literal[kenmotsu.CATALOG]
    n: int = Field(1, ge=1)
    m: Optional[int] = Field(None, ge=3)
    beta: float = Field(1.0, gt=0)
    family: Optional[FamilyConfig] = None
    fiber: Literal["flat", "curved"] = "flat"
    k: Optional[float] = None
    t_interval: Optional[tuple[float, float]] = None


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model: ModelConfig
    command: Literal[COMMANDS + ("all",)]
    seed: int = Field(ge=0, lt=2 ** 64)
    samples: int = Field(100, ge=1)
    tolerances: dict[str, float] = Field(default_factory=dict)
    format: Literal["json", "text"] = "json"
    out: Optional[str] = None
    V: Union[str, list[str]] = "xi"
    X: Union[str, list[str]] = "xi"
    geodesics: int = Field(5, ge=1)
    T: float = Field(10.0, gt=0)
    h: float = Field(1e-3, gt=0)
    remote_samples: int = Field(eisenhart.DEFAULT_REMOTE, ge=0)
    timing: bool = False

    @field_validator("tolerances")
    @classmethod
    def _known_positive(cls, v):
        for key, val in v.items():
            if key not in DEFAULT_TOLERANCES:
                raise ValueError(f"unknown tolerance {key!r}; known: {sorted(DEFAULT_TOLERANCES)}")
            if not val > 0:
                raise ValueError(f"tolerance {key!r} must be positive")
        return v

    def tol(self, key):
        return self.tolerances.get(key, DEFAULT_TOLERANCES[key])


# --------------------------------------------------------------------------
# report


class RunReport:
    """Checks and scalar results of one run; serializes deterministically."""

    def __init__(self, config):
        self.config = config
        self.checks = {}
        self.results = {}
        self.skipped = {}
        self.wall_time = None

    def check(self, name, residual, tolerance, bound="upper"):
        if name in self.checks:
            raise RuntimeError(f"check {name!r} recorded twice")
        residual = float(residual)
        ok = residual < tolerance if bound == "upper" else residual >= tolerance
        self.checks[name] = {"residual": residual, "tolerance": float(tolerance),
                             "bound": bound, "pass": bool(ok)}

    def error(self, name, err):
        self.checks[name] = {"pass": False, "error": err.code, "message": str(err)}

    def skip(self, name, err):
        self.skipped[name] = {"error": err.code, "message": str(err)}

    @property
    def passed(self):
        return all(c["pass"] for c in self.checks.values())

    @property
    def exit_code(self):
        if any(c.get("error") in _NUMERIC_CODES for c in self.checks.values()):
            return EXIT_NUMERIC
        return EXIT_PASS if self.passed else EXIT_FAIL

    def as_dict(self):
        out = {
            "version": __version__,
            # the output destination does not affect results, so it is not echoed
            "config": self.config.model_dump(mode="json", exclude={"out"}),
            "checks": self.checks,
            "results": self.results,
            "skipped": self.skipped,
            "status": "pass" if self.passed else "fail",
            "exit_code": self.exit_code,
        }
        if self.wall_time is not None:
            out["wall_time"] = self.wall_time
        return _plain(out)

    def to_json(self):
        return json.dumps(self.as_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"

    def to_text(self):
        d = self.as_dict()
        lines = [f"fkenmotsu {d['version']}  model={d['config']['model']['name']}  "
                 f"command={d['config']['command']}  seed={d['config']['seed']}"]
        for name in sorted(d["checks"]):
            c = d["checks"][name]
            tag = "PASS" if c["pass"] else "FAIL"
            if "error" in c:
                lines.append(f"{tag} {name}: {c['error']}: {c['message']}")
            else:
                op = "<" if c["bound"] == "upper" else ">="
                lines.append(f"{tag} {name}: {_fmt(c['residual'])} {op} {_fmt(c['tolerance'])}")
        for name in sorted(d["skipped"]):
            s = d["skipped"][name]
            lines.append(f"SKIP {name}: {s['error']}: {s['message']}")
        for name in sorted(d["results"]):
            lines.append(f"  {name} = {_fmt(d['results'][name])}")
        lines.append(f"status: {d['status']}")
        if "wall_time" in d:
            lines.append(f"wall_time: {d['wall_time']:.2f}s")
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _plain(obj):
    """numpy scalars/arrays to Python; non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x + 0.0
    return obj


# --------------------------------------------------------------------------
# model and field construction


def build_from_config(mc):
    """The catalog model described by a :class:`ModelConfig`."""
    kw = {"n": mc.n, "fiber": mc.fiber, "k": mc.k}
    if mc.t_interval is not None:
        kw["t_interval"] = mc.t_interval
    if mc.name == "beta_kenmotsu":
        kw["beta"] = mc.beta
    elif mc.name == "f_kenmotsu":
        if mc.family is None:
            raise ConfigError("f_kenmotsu needs a 'family' entry")
        fam = mc.family
        if fam.kind == "custom":
            if fam.f is None or fam.W is None:
                raise ConfigError("custom family needs expressions 'f' and 'W'")
            kw["family"] = {"family": "custom", "f": parse(fam.f), "W": parse(fam.W)}
        else:
            kw["family"] = {"family": fam.kind, **fam.params}
    elif mc.name == "flat":
        kw = {"m": mc.m or 2 * mc.n + 1}
    elif mc.name in ("hyperbolic",):
        kw = {"n": mc.n}
    else:
        kw = {}
    return kenmotsu.build_model(mc.name, **kw)


def resolve_vector(model, spec, label):
    """Named field or a list of component expressions in the chart's coordinates."""
    if isinstance(spec, list):
        if len(spec) != model.m:
            raise ConfigError(f"{label} needs {model.m} components, got {len(spec)}")
        return vector_field([parse(s, model.chart.names) for s in spec], label)
    if spec not in ("xi", "zero", "fiber_rotation"):
        raise ConfigError(f"{label} must be 'xi', 'zero', 'fiber_rotation' or a component list")
    return spec


# --------------------------------------------------------------------------
# commands


def _is_kenmotsu_model(model):
    return isinstance(model, kenmotsu.KenmotsuModel)


def cmd_verify_structure(model, cfg, rep, cache):
    res = kenmotsu.verify_structure(model, cfg.samples, cfg.seed)
    for k, v in res.residuals.items():
        rep.check(f"structure.{k}", v, cfg.tol("structure"))


def cmd_verify_identities(model, cfg, rep, cache):
    res = kenmotsu.verify_kenmotsu_identities(model, cfg.samples, cfg.seed)
    for k, v in res.residuals.items():
        rep.check(f"identities.{k}", v, cfg.tol("identity"))


def cmd_curvature_report(model, cfg, rep, cache):
    pts = model.chart.sample(cfg.samples, np.random.default_rng(cfg.seed))
    b = curvature(model.metric, pts, nabla=True)
    R = b.R_low
    bianchi = R + np.einsum("...jkil->...ijkl", R) + np.einsum("...kijl->...ijkl", R)
    rep.check("curvature.first_bianchi", frame_max(bianchi, b.g, "dddd"), cfg.tol("bianchi"))
    divS = np.einsum("...ai,...aij->...j", b.ginv, b.nabla_S)
    rep.check("curvature.contracted_bianchi", frame_max(b.dr - 2 * divS, b.g, "d"),
              cfg.tol("bianchi"))
    rep.results["r_min"] = float(np.min(b.r))
    rep.results["r_max"] = float(np.max(b.r))
    rep.results["r_mean"] = float(np.mean(b.r))
    rep.results["grad_r_max"] = float(np.max(np.linalg.norm(b.dr, axis=-1)))
    kf = getattr(model, "kfun", None)
    if kf is not None and kf.family == "constant" and model.fiber == "flat":
        beta = kf.params["beta"]
        eye = np.eye(model.m)
        # R(e_i, e_j) e_k = -beta^2 (g_jk e_i - g_ik e_j)
        form = -beta ** 2 * (np.einsum("...jk,il->...ijkl", b.g, eye)
                             - np.einsum("...ik,jl->...ijkl", b.g, eye))
        rep.check("curvature.constant_curvature", frame_max(b.R - form, b.g, "dddu"),
                  cfg.tol("formula"))
    if model.m == 3 and _is_kenmotsu_model(model):
        res = kenmotsu.verify_dim3_ricci(model, cfg.samples, cfg.seed)
        rep.check("curvature.dim3_ricci", res.residuals["dim3_ricci"], cfg.tol("formula"))


def _parallel(model, cfg, cache):
    if "parallel" not in cache:
        cache["parallel"] = eisenhart.parallel_space(
            model, remote_samples=cfg.remote_samples, seed=cfg.seed,
            min_gap=cfg.tol("gap"), loop_tol=cfg.tol("loop"))
    return cache["parallel"]


def cmd_parallel_dim(model, cfg, rep, cache):
    pr = _parallel(model, cfg, cache)
    verdict = eisenhart.reducibility_verdict(pr)
    rep.results["d"] = pr.dimension
    rep.results["verdict"] = str(verdict)
    rep.results["gap_ratio"] = pr.gap_ratio
    rep.check("parallel.gap", pr.gap_ratio, cfg.tol("gap"), bound="lower")
    rep.check("parallel.loop_transport", max(pr.transport_residuals, default=0.0),
              cfg.tol("loop"))
    if _is_kenmotsu_model(model) and model.regular:
        # regular f-Kenmotsu: only multiples of g are parallel
        rep.check("parallel.dimension_is_one", pr.dimension, 2)
        rep.check("parallel.metric_deviation", pr.metric_deviation(),
                  cfg.tol("metric_deviation"))


def cmd_sqfi(model, cfg, rep, cache):
    pr = _parallel(model, cfg, cache)
    rep.results["count"] = pr.dimension
    rep.results["nonflat_cap"] = pr.nonflat_cap
    rep.results["flat_cap"] = pr.flat_cap
    rep.check("sqfi.within_flat_cap", pr.dimension, pr.flat_cap + 1)
    if _is_kenmotsu_model(model) and model.regular:
        rep.check("sqfi.below_nonflat_cap", pr.dimension, pr.nonflat_cap)


def cmd_soliton(model, cfg, rep, cache):
    V = resolve_vector(model, cfg.V, "V")
    sr = soliton.solve_lambda(model, V, cfg.samples, cfg.seed)
    rep.results["lambda_xi"] = sr.lambda_xi
    rep.results["lambda_xi_spread"] = sr.lambda_xi_spread
    rep.results["lambda_star"] = sr.lambda_star
    rep.results["class"] = sr.classification
    rep.results["class_star"] = sr.classification_star
    rep.results["residual_star"] = sr.residual_star
    rep.results["residual_xi"] = sr.residual_xi
    rep.results["nabla_alpha_max"] = sr.nabla_alpha_max
    if not _is_kenmotsu_model(model):
        return
    if cfg.V == "xi":
        # alpha(xi, xi) = -4n (f^2 + xi(f)) along the Reeb field
        pts = model.chart.sample(cfg.samples, np.random.default_rng(cfg.seed))
        f, fp = model.kfun.values(pts[:, 0], 1)
        expect = 2 * model.n * (f * f + fp)
        rep.check("soliton.lambda_xi_formula", np.max(np.abs(sr.lambda_xi_points - expect)),
                  cfg.tol("formula"))
        try:
            ar = soliton.verify_alpha_formulas(model, cfg.samples, cfg.seed)
        except _PRECONDITION as err:
            rep.skip("soliton.alpha_formulas", err)
        else:
            for k, v in ar.residuals.items():
                rep.check(f"soliton.{k}", v, cfg.tol("formula"))


def cmd_swrs(model, cfg, rep, cache):
    sw = soliton.swrs_test(model, cfg.samples, cfg.seed)
    rep.results["rho_norm_max"] = sw.rho_norm_max
    rep.results["swrs_fit_residual"] = sw.residual
    rep.results["swrs_xi_residual"] = sw.xi_residual
    holds = sw.residual < cfg.tol("swrs")
    rep.results["swrs_holds"] = holds
    if holds and _is_kenmotsu_model(model):
        # the xi-xi component of the condition must then be satisfied as well
        rep.check("swrs.xi_component", sw.xi_residual, cfg.tol("swrs"))


def cmd_semisymmetry(model, cfg, rep, cache):
    res = soliton.ricci_semisymmetry_test(model, cfg.samples, cfg.seed)
    rep.results["semisymmetry_residual"] = res.residuals["semisymmetry"]
    rep.results["einstein_residual"] = res.residuals["einstein"]
    semi = res.residuals["semisymmetry"] < cfg.tol("semisymmetry")
    rep.results["ricci_semisymmetric"] = semi
    if semi and _is_kenmotsu_model(model) and model.regular:
        rep.check("semisymmetry.implies_einstein", res.residuals["einstein"],
                  cfg.tol("einstein"))


def cmd_eta_einstein(model, cfg, rep, cache):
    fit = kenmotsu.eta_einstein_fit(model, cfg.samples, cfg.seed)
    rep.results["eta_fit_residual"] = fit.residual
    rep.results["a_mean"] = float(np.mean(fit.a))
    rep.results["b_mean"] = float(np.mean(fit.b))
    rep.results["b_spread"] = fit.b_spread
    if _is_kenmotsu_model(model) and model.m == 3:
        rep.check("eta_einstein.dim3_fit", fit.residual, cfg.tol("formula"))
    if fit.a_formula_residual is not None and fit.residual < cfg.tol("formula"):
        rep.check("eta_einstein.a_formula", fit.a_formula_residual, cfg.tol("formula"))
        rep.check("eta_einstein.b_formula", fit.b_formula_residual, cfg.tol("formula"))


def cmd_geodesic_check(model, cfg, rep, cache):
    rng = np.random.default_rng(cfg.seed)
    x0, v0 = dynamics.random_initial_data(model, cfg.geodesics, rng)
    pr = _parallel(model, cfg, cache)
    try:
        basis, worst = eisenhart.realize_basis(model, pr, cfg.tol("basis_realization"))
    except ValueError as err:
        rep.checks["geodesic.basis_realization"] = {"pass": False, "error": "not_realized",
                                                    "message": str(err)}
        basis, worst = [], None
    fields = {f"parallel_{i}": b for i, b in enumerate(basis)}
    if "eta_eta" in model.fields:
        fields["eta_eta"] = model.fields["eta_eta"]
    tr = dynamics.integrate_geodesic(model, x0, v0, cfg.T, cfg.h, fields=fields, check=False)
    rep.check("geodesic.energy_drift", tr.max_energy_drift, cfg.tol("energy"))
    rep.results["truncated"] = int(np.sum(~np.isnan(tr.exit_time)))
    if worst is not None:
        rep.results["basis_realization_residual"] = worst
    for name in sorted(fields):
        if name.startswith("parallel_"):
            rep.check(f"geodesic.qfi_drift.{name}", dynamics.qfi_drift(tr, name), cfg.tol("qfi"))
            kt = dynamics.killing_type_residual(model, fields[name], cfg.samples, cfg.seed)
            rep.check(f"geodesic.killing_type.{name}", kt.killing, cfg.tol("killing"))
    if _is_kenmotsu_model(model):
        kt = dynamics.killing_type_residual(model, model.fields["eta_eta"], cfg.samples, cfg.seed)
        rep.check("geodesic.eta_eta_not_parallel", kt.sqfi, cfg.tol("sqfi_gate"), bound="lower")
        rep.results["eta_eta_qfi_drift"] = dynamics.qfi_drift(tr, "eta_eta")
    conv = dynamics.energy_convergence(model, x0[:1], v0[:1], cfg.T)
    if np.isfinite(conv):
        rep.check("geodesic.convergence_factor", conv, cfg.tol("convergence"), bound="lower")
    else:
        rep.results["convergence_factor"] = conv


def cmd_conformal_fit(model, cfg, rep, cache):
    X = resolve_vector(model, cfg.X, "X")
    cf = dynamics.conformal_fit(model, X, cfg.samples, cfg.seed, cfg.tol("conformal"))
    rep.results["c"] = cf.c
    rep.results["conformal_residual"] = cf.residual
    rep.results["affine_residual"] = cf.affine_residual
    rep.results["c_xi"] = cf.c_xi
    if cf.killing_implies_zero is not None:
        rep.check("conformal.affine_killing_c_zero", abs(cf.c), cfg.tol("conformal"))


_DISPATCH = {
    "verify-structure": cmd_verify_structure,
    "verify-identities": cmd_verify_identities,
    "curvature-report": cmd_curvature_report,
    "parallel-dim": cmd_parallel_dim,
    "sqfi": cmd_sqfi,
    "soliton": cmd_soliton,
    "swrs": cmd_swrs,
    "semisymmetry": cmd_semisymmetry,
    "eta-einstein": cmd_eta_einstein,
    "geodesic-check": cmd_geodesic_check,
    "conformal-fit": cmd_conformal_fit,
}


def run(config):
    """Execute ``config`` (a :class:`RunConfig` or a plain dict) and return a :class:`RunReport`."""
    if not isinstance(config, RunConfig):
        try:
            config = RunConfig.model_validate(config)
        except ValidationError as err:
            raise ConfigError(str(err)) from None
    start = time.perf_counter()
    try:
        model = build_from_config(config.model)
    except InvalidParam as err:
        raise ConfigError(str(err)) from None
    rep = RunReport(config)
    commands = COMMANDS if config.command == "all" else (config.command,)
    cache = {}
    for name in commands:
        try:
            _DISPATCH[name](model, config, rep, cache)
        except _PRECONDITION as err:
            if config.command == "all":
                rep.skip(name, err)
            else:
                rep.error(name, err)
        except GeometryError as err:
            rep.error(name, err)
    if config.timing:
        rep.wall_time = time.perf_counter() - start
    return rep


def _parser():
    p = argparse.ArgumentParser(prog="fkenmotsu", description=__doc__.split("\n")[0])
    p.add_argument("--config", required=True, help="JSON run configuration ('-' for stdin)")
    p.add_argument("--command", choices=COMMANDS + ("all",), help="override the config command")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--samples", type=int, help="override the sample count")
    p.add_argument("--format", choices=("json", "text"), help="report format")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--timing", action="store_true", help="include wall time in the report")
    return p


def load_config(args):
    try:
        if args.config == "-":
            raw = json.load(sys.stdin)
        else:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {args.config!r}: {err}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for key in ("command", "seed", "samples", "format", "out"):
        val = getattr(args, key)
        if val is not None:
            raw[key] = val
    if args.timing:
        raw["timing"] = True
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as err:
        raise ConfigError(str(err)) from None


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args)
        rep = run(cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    text = rep.to_json() if cfg.format == "json" else rep.to_text()
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
