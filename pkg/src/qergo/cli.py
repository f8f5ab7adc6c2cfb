"""Config-driven experiment runner.

Subcommands: ``run <config>``, ``list-models``, ``spectral <model>``,
``mc <model>``.  A run builds the model, its spectral data and the operators
on the configured time grid, evaluates the requested diagnostics, and writes
a series CSV, a summary CSV with fitted rates, a spectral record and a
plain-text verdict file with one PASS/FAIL line per checked claim.  Exit
codes: 0 all checks pass, 2 any FAIL, 1 configuration or runtime error.

CSV bodies are byte-identical across repeated runs of the same config and
seed; only the leading timestamped comment line varies.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from . import diagnostics as dg
from . import models as zoo
from .errors import ModelError, NonuniquenessWarning
from .montecarlo import fk_estimate
from .operators import MarkovModel, adjoint, feynman_kac_operator
from .spectral import principal_triple, principal_triple_from_operator, spectral_to_text
from .statespace import ExhaustingFamily, ball_indicator

DIAGNOSTIC_NAMES = (
    "heat_content",
    "kernel_convergence",
    "quasi_ergodic",
    "qsd",
    "gsd",
    "eta",
    "kappa",
    "uniqueness",
)

_FMT = ".17g"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    model_id: str
    model_params: dict
    t_grid: list
    diagnostics: list
    diag_params: dict = field(default_factory=dict)
    family: dict | None = None
    verdicts: dict = field(default_factory=dict)
    mc: dict | None = None
    output_dir: str = "out"
    source: str = "<memory>"


def _line_of(path: str, needle: str) -> int | None:
    try:
        with open(path) as fh:
            for i, line in enumerate(fh, 1):
                if line.split("=")[0].strip() == needle or line.strip() == f"[{needle}]":
                    return i
    except OSError:
        return None
    return None


def _fail_config(path: str, key: str, msg: str) -> ConfigError:
    line = _line_of(path, key)
    where = f"{path}:{line}" if line else path
    return ConfigError(f"{where}: {msg}")


def parse_config(path: str) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    try:
        read = cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not read:
        raise ConfigError(f"{path}: cannot read config file")
    if "model" not in cp or "id" not in cp["model"]:
        raise _fail_config(path, "model", "missing [model] section with an id")
    model_id = cp["model"]["id"]
    model_params = {k: v for k, v in cp["model"].items() if k != "id"}

    if "times" not in cp or "t_grid" not in cp["times"]:
        raise _fail_config(path, "t_grid", "missing [times] t_grid")
    try:
        t_grid = [float(v) for v in cp["times"]["t_grid"].split()]
    except ValueError as exc:
        raise _fail_config(path, "t_grid", f"bad t_grid: {exc}")
    if any(s >= t for s, t in zip(t_grid, t_grid[1:])) or not t_grid:
        raise _fail_config(path, "t_grid", "t_grid must be strictly increasing")

    names = cp.get("diagnostics", "names", fallback="").split()
    for name in names:
        if name not in DIAGNOSTIC_NAMES:
            raise _fail_config(
                path, "names", f"unknown diagnostic {name!r}; known: {DIAGNOSTIC_NAMES}"
            )
    diag_params = {}
    for name in names:
        sect = f"diagnostics.{name}"
        diag_params[name] = dict(cp[sect]) if sect in cp else {}

    kp = diag_params.get("kappa", {})
    if "a" in kp and "b" in kp:
        a, b = float(kp["a"]), float(kp["b"])
        if abs(a + 2.0 * b - 1.0) > 1e-12:
            raise _fail_config(path, "a", f"kappa needs a + 2b = 1, got {a + 2 * b}")

    family = dict(cp["family"]) if "family" in cp else None
    verdicts = dict(cp["verdicts"]) if "verdicts" in cp else {}
    mc = dict(cp["mc"]) if "mc" in cp else None
    output_dir = cp.get("output", "dir", fallback="out")
    return ExperimentConfig(
        model_id, model_params, t_grid, names, diag_params, family, verdicts, mc,
        output_dir, source=path,
    )


def _radius_fn(spec: str):
    kind, _, arg = spec.partition(":")
    if kind == "linear":
        v = float(arg)
        return lambda t: v * t
    if kind == "const":
        r = float(arg)
        return lambda t: r
    if kind == "power":
        a, b = (float(x) for x in arg.split(","))
        return lambda t: a * t**b
    if kind == "table":
        pairs = [tuple(float(v) for v in p.split(":")) for p in arg.split(",")]
        from .statespace import tabulated_radius

        return tabulated_radius([p[0] for p in pairs], [p[1] for p in pairs])
    raise ConfigError(f"unknown radius spec {spec!r}")


def _build_family(cfg: ExperimentConfig, space) -> ExhaustingFamily | None:
    if cfg.family is None:
        return None
    base = cfg.family.get("base_point", space.points[0])
    try:
        base = type(space.points[0])(base)
    except (TypeError, ValueError):
        pass
    return ExhaustingFamily(
        base_point=base,
        radius_fn=_radius_fn(cfg.family.get("radius", "linear:1.0")),
        t_min=float(cfg.family.get("t_min", 0.0)),
    )


def _parse_sigma(spec: str, model: MarkovModel) -> np.ndarray:
    kind, _, arg = spec.partition(":")
    if kind == "point":
        pt = type(model.space.points[0])(arg)
        return dg.point_mass(model.space, pt)
    if kind == "uniform":
        return np.full(model.n, 1.0 / model.n)
    raise ConfigError(f"unknown sigma spec {spec!r}")


class _Report:
    """Collects series rows, summary rows and verdict lines for one run."""

    def __init__(self, model_label: str):
        self.label = model_label
        self.series_rows: list[tuple] = []
        self.summary_rows: list[tuple] = []
        self.verdicts: list[tuple[bool, str]] = []

    def add_sample(self, diagnostic: str, t: float, value: float, extra: str = ""):
        self.series_rows.append((self.label, diagnostic, t, value, extra))

    def add_fit(self, diagnostic: str, rate: float, intercept: float, r2: float):
        self.summary_rows.append((self.label, diagnostic, rate, intercept, r2))

    def add_verdict(self, ok: bool, name: str, detail: str):
        self.verdicts.append((bool(ok), f"{name} {detail}"))

    @property
    def all_pass(self) -> bool:
        return all(ok for ok, _ in self.verdicts)


def _num(x) -> str:
    return format(float(x), _FMT)


def _write_csv(path: str, header: str, rows, stamp: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"# run {stamp}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(
                ",".join(_num(v) if isinstance(v, (int, float, np.floating)) else str(v) for v in row)
                + "\n"
            )


def run_experiment(cfg: ExperimentConfig):
    """Execute one experiment; returns (report, output paths, exit code)."""
    out_dir = os.environ.get("QERGO_OUTPUT_DIR", cfg.output_dir)
    threads = int(os.environ.get("QERGO_THREADS", "1"))
    os.makedirs(out_dir, exist_ok=True)

    built = zoo.zoo_build(cfg.model_id, cfg.model_params)
    if isinstance(built, tuple):  # oscillator oracle: factory + lattice
        needs_generator = {"kappa", "uniqueness"} & set(cfg.diagnostics)
        if needs_generator:
            raise ConfigError(
                f"diagnostics {sorted(needs_generator)} need a Markov generator; "
                "the ho oracle is kernel-only"
            )
        factory, _ = built
        ops = [factory(t) for t in cfg.t_grid]
        spec = principal_triple_from_operator(ops[len(ops) // 2])
        model = None
        label = "ho"
    else:
        model = built
        label = model.label
        with ThreadPoolExecutor(max_workers=max(threads, 1)) as ex:
            ops = list(ex.map(lambda t: feynman_kac_operator(model, t), cfg.t_grid))
        try:
            spec = principal_triple(model)
        except ModelError:
            spec = None  # reducible chain: spectral diagnostics are unavailable

    report = _Report(label)
    rep_tols = {
        "qsd_tol": float(cfg.verdicts.get("qsd_tol", 1e-9)),
        "match_tol": float(cfg.verdicts.get("match_tol", 1e-8)),
        "rate_tol": float(cfg.verdicts.get("rate_tol", 0.10)),
        "fit_tail": float(cfg.verdicts.get("fit_tail", 0.5)),
        "gsd_level": float(cfg.verdicts.get("gsd_level", 10.0)),
    }
    space = ops[0].space
    fam = _build_family(cfg, space) if cfg.family is not None else None

    for name in cfg.diagnostics:
        if name == "heat_content":
            _run_heat_content(report, model, ops, cfg, rep_tols)
        elif name == "qsd":
            _run_qsd(report, model, spec, ops, rep_tols)
        elif spec is None:
            report.add_verdict(False, name, "SKIPPED: no spectral data (reducible chain)")
        elif name == "kernel_convergence":
            _run_rate_series(
                report, name, [dg.kernel_convergence_error(op, spec) for op in ops],
                cfg, spec, rep_tols,
            )
        elif name == "quasi_ergodic":
            p = cfg.diag_params[name].get("p", "inf")
            sigma = _parse_sigma(cfg.diag_params[name].get("sigma", "uniform"), model)
            vals = [dg.quasi_ergodic_error(op, spec, sigma, p) for op in ops]
            _run_rate_series(report, name, vals, cfg, spec, rep_tols)
        elif name == "gsd":
            _run_gsd(report, space, spec, ops, cfg, rep_tols)
        elif name == "eta":
            _run_eta(report, spec, space, fam, cfg)
        elif name == "kappa":
            _run_kappa(report, model, spec, fam, ops, cfg)
        elif name == "uniqueness":
            stable, sup = dg.uniqueness_condition_check(model, spec, cfg.t_grid)
            report.add_sample(name, cfg.t_grid[-1], sup)
            report.add_verdict(stable, "uniqueness_condition", f"sup={_num(sup)} stabilized={stable}")

    stamp = datetime.now().isoformat()
    paths = {
        "series": os.path.join(out_dir, "series.csv"),
        "summary": os.path.join(out_dir, "summary.csv"),
        "spectral": os.path.join(out_dir, "spectral.txt"),
        "verdict": os.path.join(out_dir, "verdict.txt"),
    }
    _write_csv(paths["series"], "model_id,diagnostic,t,value,extra", report.series_rows, stamp)
    _write_csv(paths["summary"], "model_id,diagnostic,rate,intercept,r2", report.summary_rows, stamp)
    with open(paths["spectral"], "w") as fh:
        if spec is not None:
            fh.write(spectral_to_text(spec))
        else:
            fh.write("# no spectral record: reducible chain\n")

    if cfg.mc is not None and model is not None:
        paths["mc"] = os.path.join(out_dir, "mc.csv")
        _run_mc_block(report, model, ops, cfg, paths["mc"], stamp)

    with open(paths["verdict"], "w") as fh:
        fh.write(f"# verdict {stamp}\n")
        fh.write(f"# config {cfg.source}\n")
        for key, val in sorted(rep_tols.items()):
            fh.write(f"# default {key} = {val}\n")
        for ok, line in report.verdicts:
            fh.write(("PASS " if ok else "FAIL ") + line + "\n")
        fh.write(f"# overall {'PASS' if report.all_pass else 'FAIL'}\n")
    return report, paths, (0 if report.all_pass else 2)


def _run_heat_content(report, model, ops, cfg, tols):
    for t, op in zip(cfg.t_grid, ops):
        z = dg.heat_content(op)
        report.add_sample("heat_content", t, z)
        z_dual = dg.heat_content(adjoint(op))
        report.add_verdict(
            abs(z - z_dual) <= 1e-10 * max(1.0, z),
            "heat_content_duality",
            f"t={_num(t)} |Z-Z*|={_num(abs(z - z_dual))}",
        )
        if model is not None:
            bound = dg.heat_content_upper_bound(model, t)
            report.add_verdict(
                z <= bound * (1.0 + 1e-12),
                "heat_content_upper_bound",
                f"t={_num(t)} Z={_num(z)} bound={_num(bound)}",
            )


def _run_qsd(report, model, spec, ops, tols):
    mid = len(ops) // 2
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NonuniquenessWarning)
        fixed = dg.find_qsd(ops[mid])
    nonunique = any(issubclass(w.category, NonuniquenessWarning) for w in caught)
    if nonunique:
        report.add_verdict(False, "qsd_uniqueness", "NonuniquenessWarning: dominant eigenvalue degenerate")
    if spec is None:
        return
    m = dg.qsd_from_spectral(spec, ops[mid].space)
    dist = float(np.abs(fixed.weights - m.weights).sum())
    if not nonunique:
        report.add_verdict(
            dist <= tols["match_tol"],
            "qsd_cross_method",
            f"L1(find_qsd, psi0-mu)={_num(dist)}",
        )
    for t, op in zip([ops[0].t, ops[mid].t, ops[-1].t], [ops[0], ops[mid], ops[-1]]):
        res = dg.qsd_residual(m, op)
        report.add_sample("qsd_residual", t, res)
        report.add_verdict(
            res <= tols["qsd_tol"], "qsd_residual", f"t={_num(t)} residual={_num(res)}"
        )


def _run_rate_series(report, name, vals, cfg, spec, tols):
    series = dg.DiagnosticSeries(name, list(zip(cfg.t_grid, vals)))
    for t, v in series.samples:
        report.add_sample(name, t, v)
    if len(vals) >= 4 and all(v > 0 for v in vals):
        rate, intercept, r2 = dg.fit_exponential_rate(series, tols["fit_tail"])
        report.add_fit(name, rate, intercept, r2)
        rel = abs(-rate - spec.gap) / spec.gap if spec.gap > 0 else np.inf
        report.add_verdict(
            rel <= tols["rate_tol"],
            f"{name}_rate",
            f"fitted={_num(-rate)} gap={_num(spec.gap)} rel_err={_num(rel)}",
        )


def _run_gsd(report, space, spec, ops, cfg, tols):
    inv_sup_phi = 1.0 / float(spec.phi0.max())
    level = tols["gsd_level"]
    sat = float(np.sum(spec.psi0 * space.mu) / spec.Lambda)
    sups = []
    for t, op in zip(cfg.t_grid, ops):
        prof = dg.gsd_profile(op, spec)
        sups.append(float(prof.max()))
        report.add_sample("gsd_sup", t, sups[-1])
        report.add_verdict(
            bool(prof.min() >= inv_sup_phi * (1.0 - 1e-9)),
            "gsd_reverse_bound",
            f"t={_num(t)} min={_num(prof.min())} 1/sup(phi0)={_num(inv_sup_phi)}",
        )
        base = cfg.family.get("base_point", space.points[0]) if cfg.family else space.points[0]
        base = type(space.points[0])(base)
        r = dg.pgsd_radius(prof, space, base, level * sat)
        report.add_sample("pgsd_radius", t, -1.0 if r is None else r, extra=f"C={_num(level * sat)}")
    certified = max(sups) <= level * sat
    report.add_sample("gsd_certified", cfg.t_grid[-1], float(certified), extra=f"level={_num(level)}")


def _run_eta(report, spec, space, fam, cfg):
    if fam is None:
        report.add_verdict(False, "eta", "SKIPPED: no [family] section")
        return
    gamma = float(cfg.diag_params["eta"].get("gamma", spec.gap))
    vals = []
    for t in cfg.t_grid:
        try:
            vals.append(dg.eta_function(spec, space, fam, gamma, t))
        except ValueError:
            vals.append(np.nan)
        if np.isfinite(vals[-1]):
            report.add_sample("eta", t, vals[-1])
    finite = [v for v in vals if np.isfinite(v)]
    ok = all(a <= b + 1e-12 for a, b in zip(finite, finite[1:]))
    report.add_verdict(ok, "eta_monotone", f"values={[round(v, 6) for v in finite]}")


def _run_kappa(report, model, spec, fam, ops, cfg):
    if fam is None:
        report.add_verdict(False, "kappa", "SKIPPED: no [family] section")
        return
    pars = cfg.diag_params["kappa"]
    a = float(pars.get("a", 1.0 / 3.0))
    b = float(pars.get("b", (1.0 - a) / 2.0))
    t0 = float(pars.get("t0", cfg.t_grid[0]))
    surv = dg.survival_pair(model, t0)
    mu = model.space.mu
    m_density = spec.psi0 / np.sum(spec.psi0 * mu)
    C = None
    ok = True
    detail = []
    for t, op in zip(cfg.t_grid, ops):
        mask = ball_indicator(model.space, fam, a * t)
        if not mask.any():
            continue
        u = op.density[mask]
        surv_sel = u @ mu
        errs = np.abs(u / surv_sel[:, None] - m_density[None, :]) @ mu
        E = float(errs.max())
        kb = dg.kappa_rate(model, spec, fam, t0, b, t, survivals=surv)
        report.add_sample("kappa_b", t, kb, extra=f"E={_num(E)}")
        if C is None:
            C = E / kb
        elif E > C * kb * (1.0 + 1e-9):
            ok = False
        detail.append(f"t={t:g}:E/kb={E / kb:.3g}")
    report.add_verdict(ok, "kappa_progressive_bound", f"C={_num(C or 0)} " + " ".join(detail))


def _run_mc_block(report, model, ops, cfg, path, stamp):
    n = int(cfg.mc.get("n", 10000))
    seed = int(cfg.mc.get("seed", 0))
    x0 = model.space.points[0]
    rows = []
    for t, op in zip(cfg.t_grid, ops):
        est = fk_estimate(model, x0, t, np.ones(model.n), n, seed)
        target = float(op.survival()[model.space.index(x0)])
        rows.append((model.label, "fk_survival", t, est.mean, est.stderr, n, seed))
        report.add_verdict(
            est.within(target),
            "mc_fk_vs_matrix",
            f"t={_num(t)} mc={_num(est.mean)}+-{_num(est.stderr)} matrix={_num(target)}",
        )
    _write_csv(path, "model_id,target,t,mean,stderr,n,seed", rows, stamp)


# ---------------------------------------------------------------------------
# model-string parsing for the spectral and mc subcommands


def parse_model_string(text: str) -> tuple[str, dict]:
    """Compact zoo addresses: swap2, birthdeath(20), box(2,25),
    frac(alpha,delta,beta,kind), ho(8,0.05)."""
    text = text.strip()
    if "(" not in text:
        return text, {}
    mid, _, rest = text.partition("(")
    args = [a.strip() for a in rest.rstrip(")").split(",") if a.strip()]
    if mid == "birthdeath" or mid == "complete" or mid == "cycle":
        return mid, {"n": int(args[0])}
    if mid == "box":
        return mid, {"d": int(args[0]), "n": int(args[1])}
    if mid == "frac":
        kind = args[3] if len(args) > 3 else "polynomial"
        # default potential pairing follows the two worked example families
        pot = "log-power" if kind == "polynomial" else "power"
        return mid, {
            "alpha": float(args[0]),
            "delta": float(args[1]) if len(args) > 1 else 0.0,
            "beta": float(args[2]) if len(args) > 2 else 1.0,
            "kind": kind,
            "potential": pot,
        }
    if mid == "ho":
        return mid, {
            "half_width": float(args[0]) if args else 8.0,
            "h": float(args[1]) if len(args) > 1 else 0.05,
        }
    return mid, {}


def list_models() -> str:
    lines = ["available zoo models:"]
    for name, schema in zoo.zoo_catalog():
        lines.append(f"  {name:12s} {schema}")
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="qergo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    sub.add_parser("list-models", help="print zoo ids and parameter schemas")
    p_spec = sub.add_parser("spectral", help="print the spectral record of a model")
    p_spec.add_argument("model")
    p_spec.add_argument("-o", "--output")
    p_mc = sub.add_parser("mc", help="Monte Carlo cross-check of a model")
    p_mc.add_argument("model")
    p_mc.add_argument("--x0", default=None)
    p_mc.add_argument("--t", type=float, default=1.0)
    p_mc.add_argument("--n", type=int, default=10000)
    p_mc.add_argument("--seed", type=int, default=0)
    p_mc.add_argument("-o", "--output")
    args = parser.parse_args(argv)

    try:
        if args.command == "list-models":
            print(list_models())
            return 0
        if args.command == "run":
            cfg = parse_config(args.config)
            report, paths, code = run_experiment(cfg)
            for ok, line in report.verdicts:
                print(("PASS " if ok else "FAIL ") + line)
            print(f"wrote {', '.join(sorted(paths.values()))}")
            return code
        if args.command == "spectral":
            mid, params = parse_model_string(args.model)
            built = zoo.zoo_build(mid, params)
            if isinstance(built, tuple):
                factory, _ = built
                spec = principal_triple_from_operator(factory(1.0))
            else:
                spec = principal_triple(built)
            text = spectral_to_text(spec)
            if args.output:
                with open(args.output, "w") as fh:
                    fh.write(text)
            else:
                print(text, end="")
            return 0
        if args.command == "mc":
            mid, params = parse_model_string(args.model)
            model = zoo.zoo_build(mid, params)
            if isinstance(model, tuple):
                raise ModelError("mc needs a Markov model, not the ho oracle")
            x0 = model.space.points[0] if args.x0 is None else type(model.space.points[0])(args.x0)
            est = fk_estimate(model, x0, args.t, np.ones(model.n), args.n, args.seed)
            op = feynman_kac_operator(model, args.t)
            target = float(op.survival()[model.space.index(x0)])
            stamp = datetime.now().isoformat()
            row = (model.label, "fk_survival", args.t, est.mean, est.stderr, args.n, args.seed)
            if args.output:
                _write_csv(args.output, "model_id,target,t,mean,stderr,n,seed", [row], stamp)
            print(
                f"fk_survival t={args.t:g} mc={est.mean:.6g}+-{est.stderr:.2g} "
                f"matrix={target:.6g} agree3sigma={est.within(target)}"
            )
            return 0
    except (ConfigError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure distinct from FAIL verdicts
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
