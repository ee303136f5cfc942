"""Command-line interface.

Usage::

    perforated SUBCOMMAND --config CONFIG.json [--out DIR] [--seed N] [--workers N]

Subcommands: validate, solve, corrector, exterior, probe, sweep, fit, plot.
Exit status: 0 success, 1 domain or guard error, 2 configuration error,
3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import inspect
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import probes
from .correctors import build_psi, solve_chi
from .errors import ConfigError, InsufficientSamples, PerforatedError
from .exterior import exterior_summary, solve_phi_star
from .geometry import DomainSpec, build_mask, shape_from_dict, validate_geometry, max_admissible_c0
from .grid import gradient, lp_norm, save_grid_function
from .linsolve import solve_dirichlet
from .probes import Quantity, ScalingSample, fit_quantity, resolution_for

log = logging.getLogger("perforated")

CSV_COLUMNS = ("d", "p", "epsilon", "eta", "R", "n", "quantity", "value", "solver_iters", "residual")
FAILURE_COLUMNS = ("d", "p", "eta", "quantity", "error")


# ---------------------------------------------------------------------------
# configuration schemas
# ---------------------------------------------------------------------------


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ShapeConfig(_Strict):
    kind: Literal["ball", "cube"] = "ball"
    size: float = 0.25

    def build(self):
        return shape_from_dict({"kind": self.kind, "size": self.size})


class GeometryConfig(_Strict):
    d: Literal[2, 3] = 2
    shape: ShapeConfig = Field(default_factory=ShapeConfig)
    c0: float | None = None
    eta: float = 0.2
    epsilon: float = 1.0
    cells: int = 1
    n: int = 64
    outer_bc: Literal["periodic", "dirichlet_zero", "dirichlet_data"] = "periodic"

    def spec(self) -> DomainSpec:
        return DomainSpec(
            d=self.d,
            epsilon=self.epsilon,
            eta=self.eta,
            cells=self.cells,
            n=self.n,
            outer_bc=self.outer_bc,
            shape=self.shape.build(),
        )


class SolveConfig(_Strict):
    geometry: GeometryConfig = Field(default_factory=GeometryConfig)
    F: Literal["zero", "one", "random"] = "one"
    f: Literal["zero", "random"] = "zero"
    tol: float = 1e-10
    seed: int = 0


class CorrectorConfig(_Strict):
    kind: Literal["chi", "psi"] = "chi"
    d: Literal[2, 3] = 2
    shape: ShapeConfig = Field(default_factory=ShapeConfig)
    etas: list[float]
    n: int | None = 64
    nodes_across: int = 8
    p_values: list[float] = [2.0, 4.0]


class ExteriorConfig(_Strict):
    d: Literal[2, 3] = 3
    shape: ShapeConfig = Field(default_factory=ShapeConfig)
    R_trunc: list[float] = [4.0, 6.0]
    n: int = 24
    tol: float = 1e-9


PROBES: dict[str, Callable] = {
    "poincare": probes.poincare_probe,
    "energy": probes.energy_probe,
    "large_scale": probes.large_scale_probe,
    "caccioppoli": probes.caccioppoli_probe,
    "discrete_sobolev": probes.discrete_sobolev_probe,
    "epsilon_scaling": probes.epsilon_scaling_check,
    "s_identity": probes.s_identity_probe,
    "duality": probes.duality_check,
}


class ProbeConfig(_Strict):
    probe: Literal[tuple(PROBES)]  # type: ignore[valid-type]
    params: dict[str, Any] = {}


SWEEP_QUANTITIES = ("NormRatio", "PoincareConst", "Chi", "PsiGradLp", "EnergyRatioF")


class SweepConfig(_Strict):
    d: Literal[2, 3] = 2
    shape: ShapeConfig = Field(default_factory=ShapeConfig)
    etas: list[float]
    p_values: list[float] = [2.0]
    quantities: list[Literal[SWEEP_QUANTITIES]] = ["NormRatio"]  # type: ignore[valid-type]
    n: int | None = 64
    nodes_across: int = 8
    R: int = 1
    sources: list[Literal["RandomSmooth", "ChiWitness"]] = ["RandomSmooth", "ChiWitness"]
    trials: int = 5
    seed: int = 0
    workers: int | None = None


class FitConfig(_Strict):
    samples: str


class PlotConfig(_Strict):
    samples: str
    fits: str


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def load_config(path: str | Path, model: type[BaseModel]) -> BaseModel:
    """Parse and validate a JSON config; every failure maps to :class:`ConfigError`."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def fmt(x) -> str:
    """Floats with 17 significant digits so that parsing recovers them exactly."""
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _sample_key(s: ScalingSample):
    return (s.quantity, s.d, s.p, s.eta, s.n)


def write_samples(path: Path, samples: list[ScalingSample]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for s in sorted(samples, key=_sample_key):
            row = s.as_row()
            writer.writerow([fmt(row[c]) for c in CSV_COLUMNS])


def read_samples(path: str | Path) -> list[ScalingSample]:
    out = []
    if not Path(path).is_file():
        raise PerforatedError(f"samples file {path} does not exist")
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
            raise PerforatedError(f"{path}: expected columns {','.join(CSV_COLUMNS)}")
        for row in reader:
            out.append(
                ScalingSample(
                    d=int(row["d"]),
                    p=float(row["p"]),
                    epsilon=float(row["epsilon"]),
                    eta=float(row["eta"]),
                    R=int(row["R"]),
                    n=int(row["n"]),
                    quantity=row["quantity"],
                    value=float(row["value"]),
                    solver_iters=int(row["solver_iters"]),
                    residual=float(row["residual"]),
                )
            )
    return out


# ---------------------------------------------------------------------------
# sweep jobs (module level so they pickle into worker processes)
# ---------------------------------------------------------------------------


def _job_norm_ratios(cfg: dict, eta: float, p: float, n: int) -> list[ScalingSample]:
    return probes.operator_norm_samples(
        eta, cfg["d"], p, cfg["sources"], n, cfg["R"], shape_from_dict(cfg["shape"]), cfg["seed"]
    )


def _job_poincare(cfg: dict, eta: float, p: float, n: int) -> list[ScalingSample]:
    spec = DomainSpec(d=cfg["d"], eta=eta, cells=cfg["R"], n=n, shape=shape_from_dict(cfg["shape"]))
    value = probes.poincare_constant(spec)
    return [ScalingSample(cfg["d"], 2.0, 1.0, eta, cfg["R"], n, Quantity.POINCARE.value, value)]


def _job_chi(cfg: dict, eta: float, p: float, n: int) -> list[ScalingSample]:
    res = solve_chi(eta, shape_from_dict(cfg["shape"]), n, cfg["d"])
    it, r = res.report.iterations, res.report.final_relative_residual
    return [
        ScalingSample(cfg["d"], 2.0, 1.0, eta, 1, n, Quantity.CHI_GRAD.value, res.grad_l2, it, r),
        ScalingSample(cfg["d"], 2.0, 1.0, eta, 1, n, Quantity.CHI_MEAN.value, res.mean, it, r),
    ]


def _job_psi(cfg: dict, eta: float, p: float, n: int) -> list[ScalingSample]:
    res = build_psi(eta, shape_from_dict(cfg["shape"]), n, cfg["d"], p_values=(p,))
    it = res.report.iterations if res.report else 0
    r = res.report.final_relative_residual if res.report else 0.0
    return [ScalingSample(cfg["d"], p, 1.0, eta, 1, n, Quantity.PSI_GRAD.value, res.grad_lp[p], it, r)]


def _job_energy(cfg: dict, eta: float, p: float, n: int) -> list[ScalingSample]:
    rep, _ = probes.energy_probe(
        eta, cfg["d"], n, cfg["trials"], cfg["seed"], shape_from_dict(cfg["shape"]), cfg["R"]
    )
    return [ScalingSample(cfg["d"], 2.0, 1.0, eta, cfg["R"], n, Quantity.ENERGY_F.value, rep.measured["B2_max"])]


JOBS = {
    "NormRatio": (_job_norm_ratios, True),
    "PoincareConst": (_job_poincare, False),
    "Chi": (_job_chi, False),
    "PsiGradLp": (_job_psi, True),
    "EnergyRatioF": (_job_energy, False),
}


def _run_job(args):
    name, cfg, eta, p, n = args
    func = JOBS[name][0]
    try:
        return name, eta, p, func(cfg, eta, p, n), None
    except PerforatedError as exc:
        return name, eta, p, [], f"{type(exc).__name__}: {exc}"


def run_sweep(cfg: SweepConfig, workers: int) -> tuple[list[ScalingSample], list[dict]]:
    etas = sorted(set(cfg.etas))
    if len(etas) < 3:
        raise InsufficientSamples(f"a sweep needs at least 3 distinct eta values, got {len(etas)}")
    plain = cfg.model_dump()
    plain["shape"] = cfg.shape.model_dump()
    tasks = []
    for name in cfg.quantities:
        per_p = JOBS[name][1]
        for p in (cfg.p_values if per_p else [2.0]):
            for eta in etas:
                n = cfg.n if cfg.n is not None else resolution_for(eta, cfg.nodes_across)
                tasks.append((name, plain, eta, float(p), n))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, tasks))
    else:
        results = [_run_job(t) for t in tasks]
    samples: list[ScalingSample] = []
    failures = []
    for name, eta, p, got, err in results:
        samples.extend(got)
        if err is not None:
            failures.append({"d": cfg.d, "p": p, "eta": eta, "quantity": name, "error": err})
    return samples, failures


def fit_all(samples: list[ScalingSample]) -> dict[str, dict]:
    """Fit every ``(quantity, p)`` group with at least three samples."""
    groups: dict[tuple, list[ScalingSample]] = {}
    for s in samples:
        groups.setdefault((s.quantity, s.d, s.p), []).append(s)
    multi_p = len({(q, d) for q, d, _ in groups}) != len(groups)
    fits = {}
    for (q, d, p), group in sorted(groups.items()):
        key = f"{q}[p={p:g}]" if multi_p else q
        try:
            fit = fit_quantity(q, d, p, [(s.eta, s.value) for s in group])
        except PerforatedError as exc:
            fits[key] = {"error": f"{type(exc).__name__}: {exc}", "pass": False}
            continue
        fit.update({"quantity": q, "d": d, "p": p})
        fits[key] = fit
    return fits


def summary_table(fits: dict[str, dict]) -> str:
    lines = [f"{'quantity':<28} {'fitted':>10} {'theory':>28} {'pass':>5}"]
    for key, fit in fits.items():
        if "error" in fit:
            lines.append(f"{key:<28} {'-':>10} {fit['error'][:28]:>28} {'FAIL':>5}")
            continue
        fitted = fit["r2"] if fit["model"] == "linear_log" else fit["slope"]
        label = "r2" if fit["model"] == "linear_log" else "slope"
        lines.append(
            f"{key:<28} {label + '=' + format(fitted, '.3f'):>10} {str(fit['theoretical']):>28} "
            f"{'PASS' if fit['pass'] else 'FAIL':>5}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# SVG plots
# ---------------------------------------------------------------------------


def _plot_coords(fit: dict, eta: np.ndarray, value: np.ndarray):
    """Transform samples so that the fitted model is a straight line."""
    t, div = fit.get("log_power", 0.0), fit.get("log_divisor", 2.0)
    logs = np.abs(np.log(eta / div))
    if fit["model"] == "linear_log":
        x = logs**t
        return x, value, f"|ln(eta/{div:g})|^{t:g}", "value"
    y = np.log(value) - (t * np.log(logs) if t else 0.0)
    ylabel = "ln(value)" if not t else f"ln(value) - {t:g} ln|ln(eta/{div:g})|"
    return np.log(eta), y, "ln(eta)", ylabel


def render_svg(name: str, fit: dict, eta: np.ndarray, value: np.ndarray, width=480, height=360) -> str:
    x, y, xlabel, ylabel = _plot_coords(fit, eta, value)
    pad = 50
    x0, x1 = float(x.min()), float(x.max())
    if x1 == x0:
        x1 = x0 + 1.0
    xs = np.array([x0, x1])
    fit_y = fit["slope"] * xs + fit["intercept"]
    if fit["model"] == "linear_log":
        # proportional reference: value = c * x, scaled through the centroid
        ref_y = xs * float(np.mean(y) / np.mean(x))
    else:
        ref_y = float(np.mean(y)) + float(fit["theoretical"]) * (xs - float(np.mean(x)))
    ally = np.concatenate([y, fit_y, ref_y])
    y0, y1 = float(ally.min()), float(ally.max())
    if y1 == y0:
        y1 = y0 + 1.0

    def px(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def py(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<title>{name}</title>",
        f'<path d="M{pad},{pad} V{height - pad} H{width - pad}" fill="none" stroke="#444"/>',
        f'<text x="{width / 2:.0f}" y="{height - 12}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="14" y="{height / 2:.0f}" font-size="12" transform="rotate(-90 14 {height / 2:.0f})" '
        f'text-anchor="middle">{ylabel}</text>',
        f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" font-size="14">{name}</text>',
    ]
    for xi, yi in zip(x, y):
        parts.append(f'<circle cx="{px(xi):.2f}" cy="{py(yi):.2f}" r="3" fill="#1f77b4"/>')
    parts.append(
        f'<line class="fit" x1="{px(xs[0]):.2f}" y1="{py(fit_y[0]):.2f}" x2="{px(xs[1]):.2f}" '
        f'y2="{py(fit_y[1]):.2f}" stroke="#1f77b4" stroke-width="1.5"/>'
    )
    parts.append(
        f'<line class="reference" x1="{px(xs[0]):.2f}" y1="{py(ref_y[0]):.2f}" x2="{px(xs[1]):.2f}" '
        f'y2="{py(ref_y[1]):.2f}" stroke="#d62728" stroke-dasharray="5,4"/>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    cfg: GeometryConfig = load_config(args.config, GeometryConfig)
    shape = cfg.shape.build()
    c0 = validate_geometry(shape, cfg.c0) if cfg.c0 is not None else max_admissible_c0(shape)
    mask = build_mask(cfg.spec())
    print(f"geometry ok: {shape.kind}({shape.size}), effective c0 = {c0:.6g}")
    print(f"grid {mask.spec.grid_shape}: {mask.n_fluid} fluid, {mask.n_hole} hole nodes")
    return 0


def cmd_solve(args) -> int:
    cfg: SolveConfig = load_config(args.config, SolveConfig)
    seed = cfg.seed if args.seed is None else args.seed
    spec = cfg.geometry.spec()
    mask = build_mask(spec)
    rng = np.random.default_rng(seed)
    F = None
    if cfg.F == "one":
        F = np.where(mask.fluid, 1.0, 0.0)
    elif cfg.F == "random":
        F = probes.random_scalar(spec, rng, mask)
    f = probes.random_vector(spec, rng) if cfg.f == "random" else None
    boundary = None
    if spec.outer_bc.value == "dirichlet_data":
        boundary = probes.random_smooth(spec.coords(), 2.0 * spec.length, rng)
    u, report = solve_dirichlet(mask, F=F, f=f, boundary=boundary, tol=cfg.tol)
    out = args.out
    save_grid_function(u, out / "solution")
    write_json(out / "report.json", {**report.as_dict(), "seed": seed})
    norms = {
        "u_l2": lp_norm(u, 2.0),
        "grad_l2": lp_norm(gradient(u), 2.0),
        "u_max": float(np.max(np.abs(u.values))),
        "seed": seed,
    }
    write_json(out / "norms.json", norms)
    print(f"solved in {report.iterations} iterations, ||u||_2 = {norms['u_l2']:.6g}")
    return 0


def cmd_corrector(args) -> int:
    cfg: CorrectorConfig = load_config(args.config, CorrectorConfig)
    shape = cfg.shape.build()
    rows = []
    for eta in sorted(cfg.etas):
        n = cfg.n if cfg.n is not None else resolution_for(eta, cfg.nodes_across)
        if cfg.kind == "chi":
            res = solve_chi(eta, shape, n, cfg.d)
            rows += [(eta, Quantity.CHI_MEAN.value, 2.0, res.mean), (eta, Quantity.CHI_GRAD.value, 2.0, res.grad_l2)]
        else:
            res = build_psi(eta, shape, n, cfg.d, p_values=cfg.p_values)
            rows += [(eta, Quantity.PSI_GRAD.value, p, v) for p, v in res.grad_lp.items()]
    with (args.out / f"{cfg.kind}.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("eta", "quantity", "p", "value"))
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    print(f"wrote {len(rows)} rows to {args.out / (cfg.kind + '.csv')}")
    return 0


def cmd_exterior(args) -> int:
    cfg: ExteriorConfig = load_config(args.config, ExteriorConfig)
    shape = cfg.shape.build()
    results = [solve_phi_star(shape, R, cfg.n, d=cfg.d, tol=cfg.tol) for R in sorted(cfg.R_trunc)]
    summary = exterior_summary(results)
    summary["solves"] = [r.as_dict() for r in results]
    write_json(args.out / "exterior.json", summary)
    print(f"c_star per R_trunc: {summary['c_star']}; extrapolated: {summary['extrapolated_c_star']}")
    return 0


def cmd_probe(args) -> int:
    cfg: ProbeConfig = load_config(args.config, ProbeConfig)
    func = PROBES[cfg.probe]
    params = dict(cfg.params)
    sig = inspect.signature(func)
    if "shape" in params:
        params["shape"] = shape_from_dict(params["shape"])
    if args.seed is not None and "seed" in sig.parameters:
        params["seed"] = args.seed
    try:
        sig.bind(**params)
    except TypeError as exc:
        raise ConfigError(f"probe {cfg.probe}: {exc}") from exc
    result = func(**params)
    report = result[0] if isinstance(result, tuple) else result
    write_json(args.out / f"probe_{cfg.probe}.json", {**report.as_dict(), "params": cfg.params})
    print(f"{cfg.probe}: {'PASS' if report.passed else 'FAIL'} {report.measured}")
    return 0


def cmd_sweep(args) -> int:
    cfg: SweepConfig = load_config(args.config, SweepConfig)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    workers = args.workers or cfg.workers or os.cpu_count() or 1
    samples, failures = run_sweep(cfg, workers)
    out = args.out
    write_samples(out / "samples.csv", samples)
    with (out / "failures.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FAILURE_COLUMNS)
        for fail in sorted(failures, key=lambda r: (r["quantity"], r["p"], r["eta"])):
            writer.writerow([fmt(fail[c]) for c in FAILURE_COLUMNS])
    fits = fit_all(samples)
    write_json(out / "fits.json", fits)
    write_json(out / "run.json", {"config": cfg.model_dump(), "seed": cfg.seed, "failures": len(failures)})
    table = summary_table(fits)
    (out / "summary.txt").write_text(table)
    sys.stdout.write(table)
    if not samples:
        print("no successful sweep cells", file=sys.stderr)
        return 3
    return 0


def cmd_fit(args) -> int:
    cfg: FitConfig = load_config(args.config, FitConfig)
    samples = read_samples(cfg.samples)
    if not samples:
        raise InsufficientSamples(f"{cfg.samples} has no samples")
    fits = fit_all(samples)
    write_json(args.out / "fits.json", fits)
    sys.stdout.write(summary_table(fits))
    return 0


def cmd_plot(args) -> int:
    cfg: PlotConfig = load_config(args.config, PlotConfig)
    samples = read_samples(cfg.samples)
    if not samples:
        raise PerforatedError(f"{cfg.samples} has no samples")
    try:
        fits = json.loads(Path(cfg.fits).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise PerforatedError(f"cannot read fits {cfg.fits}: {exc}") from exc
    written = 0
    for key, fit in sorted(fits.items()):
        if "error" in fit:
            continue
        group = [s for s in samples if s.quantity == fit["quantity"] and s.p == fit["p"] and s.d == fit["d"]]
        if not group:
            raise PerforatedError(f"fit {key} has no matching samples in {cfg.samples}")
        group.sort(key=lambda s: s.eta)
        eta = np.array([s.eta for s in group])
        value = np.array([s.value for s in group])
        safe = key.replace("[", "_").replace("]", "").replace("=", "")
        (args.out / f"{safe}.svg").write_text(render_svg(key, fit, eta, value))
        written += 1
    if written == 0:
        raise PerforatedError("no fits to plot")
    print(f"wrote {written} SVG files to {args.out}")
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "corrector": cmd_corrector,
    "exterior": cmd_exterior,
    "probe": cmd_probe,
    "sweep": cmd_sweep,
    "fit": cmd_fit,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="perforated", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")
        p.add_argument("--workers", type=int, default=None, help="worker processes for sweeps")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return 2
    args.out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](args)
    except PerforatedError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
