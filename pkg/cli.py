"""
Command-line interface for the partitioned IMEX-RK integrator.
Runs simulations, gradient checks, optimization studies and order studies.

Usage:
    python cli.py simulate --config piston.json
    python cli.py grad-check --scheme all
    python cli.py optimize --cross-check
    python cli.py order-study --problem linear-model
    python cli.py verify-tableaux
"""
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import typer
from loguru import logger

from adjoint import adjoint_sweep
from benchmarks.registry import Problem, build_problem, order_study_reference
from config import RunConfig, get_settings, load_run_config
from core import integrate
from errors import ImexError, LineSearchError
from optimize import MinimizeOptions, OptimizationTrace, gradient_fd, make_objective, minimize
from reporting import (
    GRADIENT_METHODS, gradient_check_report, gradient_report, lambda_norm_frame, observed_orders, order_study_frame,
    state_norms, time_series_frame, write_csv, write_json,
)
from sensitivity import gradient_direct, sensitivity_sweep
from tableaux import get_scheme, list_schemes, verify_all
from trajectory_store import FileTrajectoryStore, open_trajectory_store
from verification import compare_gradients, corrupt_system

app = typer.Typer(add_completion=False, help="Partitioned IMEX-RK integration with discrete adjoint gradients.")

# adjoint vs direct, adjoint vs finite differences, adjoint vs closed form
DIRECT_RTOL = 1e-10
FD_RTOL = 1e-5
FD_ATOL = 1e-12
CLOSED_FORM_RTOL = 1e-6
ORDER_TOLERANCE = 0.4

ConfigOption = typer.Option(None, "--config", help="JSON run configuration (or flat piston configuration)")
ProblemOption = typer.Option(None, "--problem", help="piston | linear-model | scalar-decay")
SchemeOption = typer.Option(None, "--scheme", help="imex1..imex4")
DtOption = typer.Option(None, "--dt", help="Time step")
FinalTimeOption = typer.Option(None, "--T", help="Final time")
MuOption = typer.Option(None, "--mu", help="Parameter value (repeat for each component)")
QoiOption = typer.Option(None, "--qoi", help="Objective integrand")
OutOption = typer.Option(None, "--out", help="Output directory (default IMEX_OUTPUT_DIR)")
VerboseOption = typer.Option(False, "--verbose", "-v", help="Debug logging")


def _setup_logging(verbose: bool) -> None:
    level = "DEBUG" if verbose else get_settings().log_level
    logger.remove()
    logger.add(sys.stderr, level=level, format="<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | "
                                               "<level>{message}</level>")


def _run_config(config: Optional[Path], problem: Optional[str] = None, scheme: Optional[str] = None,
                dt: Optional[float] = None, T: Optional[float] = None, mu: Optional[List[float]] = None,
                qoi: Optional[str] = None, out: Optional[Path] = None) -> RunConfig:
    """Config file (or defaults) with CLI flags applied on top."""
    base = load_run_config(config) if config else RunConfig()
    return base.with_overrides(problem=problem, scheme=scheme, dt=dt, T=T, mu=list(mu) if mu else None,
                               qoi=qoi, output_dir=str(out) if out else None)


def _fail(exc: Exception, out_dir: Optional[Path] = None, name: str = "error.json") -> None:
    typer.echo(f"❌ {type(exc).__name__}: {exc}", err=True)
    if out_dir is not None:
        write_json({"passed": False, "error": type(exc).__name__, "message": str(exc)}, out_dir / name)
    raise typer.Exit(code=1)


def _output_dir(config: RunConfig) -> Path:
    return config.resolved_output_dir()


@app.command("simulate")
def cmd_simulate(
    config: Optional[Path] = ConfigOption,
    problem: Optional[str] = ProblemOption,
    scheme: Optional[str] = SchemeOption,
    dt: Optional[float] = DtOption,
    T: Optional[float] = FinalTimeOption,
    mu: Optional[List[float]] = MuOption,
    qoi: Optional[str] = QoiOption,
    out: Optional[Path] = OutOption,
    verbose: bool = VerboseOption,
):
    """Integrate one problem; write time_series.csv and summary.json."""
    _setup_logging(verbose)
    out_dir = None
    try:
        run = _run_config(config, problem, scheme, dt, T, mu, qoi, out)
        out_dir = _output_dir(run)
        prob = build_problem(run)

        typer.echo(f"🚀 Simulating {prob.name} with {prob.tab.name} (dt={prob.dt:g}, T={prob.T:g})")
        store = open_trajectory_store(run.trajectory)
        try:
            state, J, store = integrate(prob.system, prob.tab, prob.qoi, prob.t_grid, store=store)
            frame = time_series_frame(store, prob.columns, t0=prob.t0)
        finally:
            if isinstance(store, FileTrajectoryStore):
                store.close()
    except (ImexError, ValueError, OSError) as exc:
        _fail(exc, out_dir, "summary.json")

    names = [sub.name for sub in prob.system.subsystems]
    summary = {
        "problem": prob.name,
        "scheme": prob.tab.name,
        "dt": prob.dt,
        "t0": prob.t0,
        "T": prob.T,
        "n_steps": len(store),
        "mu": prob.system.mu.tolist(),
        "qoi": prob.qoi_name,
        "J": J,
        "final_state_norms": state_norms(state, names),
        "config": run.normalized(),
        "passed": True,
    }
    write_csv(frame, out_dir / "time_series.csv")
    write_json(summary, out_dir / "summary.json")

    typer.echo(f"✅ J = {J:.11e} after {len(store)} steps")
    for name, norm in summary["final_state_norms"].items():
        typer.echo(f"   |{name}| = {norm:.6e}")
    typer.echo(f"💾 {out_dir / 'time_series.csv'}")


def _grad_check_one(prob: Problem, trajectory: str, eps: Optional[float], n_jobs: Optional[int],
                    corrupt: Optional[float]) -> Tuple[Dict, Dict[str, Dict], pd.DataFrame]:
    """Cross-check report, per-method gradient reports and lambda norms of one scheme."""
    system = corrupt_system(prob.system, corrupt) if corrupt is not None else prob.system
    t_grid = prob.t_grid
    store = open_trajectory_store(trajectory)
    try:
        _, J, store = integrate(system, prob.tab, prob.qoi, t_grid, store=store)
        solution = adjoint_sweep(system, prob.tab, prob.qoi, store)
        _, direct = sensitivity_sweep(system, prob.tab, prob.qoi, store)
    finally:
        if isinstance(store, FileTrajectoryStore):
            store.close()
    fd = gradient_fd(system, prob.tab, prob.qoi, t_grid, eps=eps, n_jobs=n_jobs)

    gradients = {"adjoint": solution.grad, "direct": direct, "fd": fd}
    comparisons = [
        compare_gradients("adjoint vs direct", direct, solution.grad, rtol=DIRECT_RTOL, atol=DIRECT_RTOL),
        compare_gradients("adjoint vs fd", fd, solution.grad, rtol=FD_RTOL, atol=FD_ATOL),
    ]
    if prob.closed_form is not None:
        _, exact = prob.closed_form(prob.system.mu)
        gradients["closed_form"] = exact
        comparisons.append(compare_gradients("adjoint vs closed form", exact, solution.grad, rtol=CLOSED_FORM_RTOL))

    check = gradient_check_report(prob.tab.name, prob.dt, J, gradients, [c.to_dict() for c in comparisons])
    reports = {method: gradient_report(prob.tab.name, prob.dt, J, gradients[method], method)
               for method in GRADIENT_METHODS}
    norms = lambda_norm_frame(solution.lambda_norms, [sub.name for sub in system.subsystems])
    return check, reports, norms


@app.command("grad-check")
def cmd_grad_check(
    config: Optional[Path] = ConfigOption,
    problem: Optional[str] = ProblemOption,
    scheme: Optional[str] = typer.Option(None, "--scheme", help="imex1..imex4 or 'all'"),
    dt: Optional[float] = DtOption,
    T: Optional[float] = FinalTimeOption,
    mu: Optional[List[float]] = MuOption,
    qoi: Optional[str] = QoiOption,
    out: Optional[Path] = OutOption,
    eps: Optional[float] = typer.Option(None, "--eps", help="Finite-difference step (default IMEX_FD_EPS)"),
    parallel_fd: bool = typer.Option(False, "--parallel-fd", help="Run the FD integrations concurrently"),
    corrupt_jacobian: Optional[float] = typer.Option(None, "--corrupt-jacobian", hidden=True),
    verbose: bool = VerboseOption,
):
    """Compare adjoint, direct and finite-difference gradients; exit 1 on any violated tolerance."""
    _setup_logging(verbose)
    out_dir = None
    try:
        schemes = [None]
        if scheme is not None and scheme.lower() == "all":
            schemes, scheme = list_schemes(), None
        run = _run_config(config, problem, scheme, dt, T, mu, qoi, out)
        out_dir = _output_dir(run)
        base = build_problem(run)
        n_jobs = -1 if parallel_fd else None

        reports = []
        for name in schemes:
            prob = base.with_scheme(name) if name else base
            typer.echo(f"🔍 Gradient check: {prob.name}, {prob.tab.name}, dt={prob.dt:g}")
            report, gradient_reports, norms = _grad_check_one(prob, run.trajectory, eps, n_jobs, corrupt_jacobian)
            reports.append(report)
            write_csv(norms, out_dir / f"lambda_norms_{prob.tab.name}.csv")
            for method, document in gradient_reports.items():
                write_json(document, out_dir / f"gradient_{method}_{prob.tab.name}.json")
            for comparison in report["comparisons"]:
                mark = "✅" if comparison["passed"] else "❌"
                typer.echo(f"   {mark} {comparison['name']}: max rel error {comparison['max_rel_error']:.3e}")
            typer.echo(f"   J = {report['J']:.11e}, dJ/dmu (adjoint) = {report['gradients']['adjoint']}")
    except (ImexError, ValueError, OSError) as exc:
        _fail(exc, out_dir, "grad_check.json")

    passed = all(report["passed"] for report in reports)
    write_json({"problem": base.name, "mu": base.system.mu.tolist(), "reports": reports, "passed": passed},
               out_dir / "grad_check.json")
    if not passed:
        typer.echo("❌ Gradient check failed", err=True)
        raise typer.Exit(code=1)
    typer.echo("✅ All gradient checks passed")


@app.command("optimize")
def cmd_optimize(
    config: Optional[Path] = ConfigOption,
    problem: Optional[str] = ProblemOption,
    scheme: Optional[str] = SchemeOption,
    dt: Optional[float] = DtOption,
    T: Optional[float] = FinalTimeOption,
    mu: Optional[List[float]] = MuOption,
    qoi: Optional[str] = QoiOption,
    out: Optional[Path] = OutOption,
    method: str = typer.Option("adjoint", "--method", help="adjoint | direct | fd"),
    max_iter: int = typer.Option(20, "--max-iter", help="Iteration cap"),
    cross_check: bool = typer.Option(False, "--cross-check", help="Compare against direct and FD at every iterate"),
    eps: Optional[float] = typer.Option(None, "--eps", help="Finite-difference step for cross checks"),
    parallel_fd: bool = typer.Option(False, "--parallel-fd", help="Run the FD integrations concurrently"),
    verbose: bool = VerboseOption,
):
    """Minimize the objective over the box; write optimization_trace.csv and optimization.json."""
    _setup_logging(verbose)
    out_dir = None
    trace = OptimizationTrace()
    failures: List[str] = []
    try:
        run = _run_config(config, problem, scheme, dt, T, mu, qoi, out)
        out_dir = _output_dir(run)
        prob = build_problem(run)
        t_grid = prob.t_grid
        n_jobs = -1 if parallel_fd else None
        options = MinimizeOptions(max_iter=max_iter, method=method)
        objective = make_objective(prob.system, prob.tab, prob.qoi, t_grid, method)

        def cross(iteration, x, f, g):
            system = prob.system.with_mu(x)
            _, direct = gradient_direct(system, prob.tab, prob.qoi, t_grid)
            fd = gradient_fd(system, prob.tab, prob.qoi, t_grid, eps=eps, n_jobs=n_jobs)
            checks = [compare_gradients("direct", direct, g, rtol=DIRECT_RTOL, atol=DIRECT_RTOL),
                      compare_gradients("fd", fd, g, rtol=FD_RTOL, atol=FD_ATOL)]
            failures.extend(f"iteration {iteration}: {c.name}" for c in checks if not c.passed)
            return {f"{c.name}_max_rel_error": float(np.max(c.rel_error)) for c in checks}

        typer.echo(f"🎯 Optimizing {prob.name} ({prob.tab.name}, {method} gradients) from mu = "
                   f"{prob.system.mu.tolist()}")
        mu_opt, trace = minimize(objective, prob.system.mu, prob.box, options,
                                 callback=cross if cross_check else None)
    except LineSearchError as exc:
        if exc.trace is not None:
            trace = exc.trace
        if out_dir is not None and len(trace):
            write_csv(trace.to_frame(), out_dir / "optimization_trace.csv")
        _fail(exc, out_dir, "optimization.json")
    except (ImexError, ValueError, OSError) as exc:
        _fail(exc, out_dir, "optimization.json")

    history = [rec.J for rec in trace.records]
    monotone = all(b <= a for a, b in zip(history, history[1:]))
    summary = trace.summary()
    summary.update({
        "problem": prob.name,
        "scheme": prob.tab.name,
        "method": method,
        "lower": prob.box.lower.tolist(),
        "upper": prob.box.upper.tolist(),
        "nonincreasing": monotone,
        "cross_check_failures": failures,
        "passed": trace.converged and monotone and not failures,
    })
    write_csv(trace.to_frame(), out_dir / "optimization_trace.csv")
    write_json(summary, out_dir / "optimization.json")

    typer.echo(f"{'✅' if summary['passed'] else '❌'} {trace.message} after {trace.iterations} iterations")
    typer.echo(f"   mu* = {mu_opt.tolist()}, J = {trace.records[-1].J:.11e}")
    if not summary["passed"]:
        raise typer.Exit(code=1)


@app.command("order-study")
def cmd_order_study(
    config: Optional[Path] = ConfigOption,
    problem: str = typer.Option("linear-model", "--problem", help="linear-model | scalar-decay"),
    scheme: Optional[str] = typer.Option(None, "--scheme", help="Scheme to study (all when omitted)"),
    dt: Optional[float] = DtOption,
    T: Optional[float] = FinalTimeOption,
    levels: int = typer.Option(4, "--levels", help="Number of step sizes dt, dt/2, ..."),
    out: Optional[Path] = OutOption,
    verbose: bool = VerboseOption,
):
    """Final-time error against the exact solution under dt halving, per scheme."""
    _setup_logging(verbose)
    out_dir = None
    try:
        if levels < 2:
            raise ValueError("an order study needs at least two step sizes")
        run = _run_config(config, problem, None, dt, T)
        out_dir = _output_dir(run)
        base = build_problem(run)
        reference = order_study_reference(base)
        exact = reference(base.T - base.t0)
        schemes = [get_scheme(scheme).name] if scheme else list_schemes()

        results = {}
        for name in schemes:
            entries = []
            for level in range(levels):
                prob = base.with_scheme(name).with_dt(base.dt / 2 ** level)
                state, _, _ = integrate(prob.system, prob.tab, prob.qoi, prob.t_grid)
                entries.append((prob.dt, float(np.max(np.abs(np.concatenate(state) - exact)))))
            results[name] = entries
    except (ImexError, ValueError, OSError) as exc:
        _fail(exc, out_dir, "order_study.json")

    summary = {"problem": base.name, "T": base.T, "schemes": {}}
    typer.echo(f"📈 Order study on {base.name} (T={base.T:g})")
    for name, entries in results.items():
        successive, slope = observed_orders([dt for dt, _ in entries], [err for _, err in entries])
        design = get_scheme(name).design_order
        ok = bool(np.isfinite(slope) and abs(slope - design) <= ORDER_TOLERANCE)
        summary["schemes"][name] = {
            "design_order": design,
            "dt": [dt for dt, _ in entries],
            "error": [err for _, err in entries],
            "observed_orders": successive,
            "fitted_order": slope,
            "passed": ok,
        }
        typer.echo(f"   {'✅' if ok else '❌'} {name}: observed order {slope:.3f} (design {design})")
    summary["passed"] = all(entry["passed"] for entry in summary["schemes"].values())

    write_csv(order_study_frame(results), out_dir / "order_study.csv")
    write_json(summary, out_dir / "order_study.json")
    if not summary["passed"]:
        raise typer.Exit(code=1)


@app.command("verify-tableaux")
def cmd_verify_tableaux(
    out: Optional[Path] = OutOption,
    verbose: bool = VerboseOption,
):
    """Check structure, order conditions and L-stability of every registered tableau pair."""
    _setup_logging(verbose)
    out_dir = Path(out) if out else get_settings().output_path
    out_dir.mkdir(parents=True, exist_ok=True)

    results = verify_all()
    document = {"schemes": {}, "passed": True}
    for name, checks in results.items():
        failed = [check for check in checks if not check.passed]
        document["schemes"][name] = [
            {"check": c.name, "defect": c.defect, "tolerance": c.tolerance, "passed": c.passed} for c in checks
        ]
        document["passed"] = document["passed"] and not failed
        typer.echo(f"{'✅' if not failed else '❌'} {name}: {len(checks) - len(failed)}/{len(checks)} checks passed")
        for check in failed:
            typer.echo(f"   {check.name}: defect {check.defect:.3e} > {check.tolerance:g}")

    write_json(document, out_dir / "tableaux.json")
    if not document["passed"]:
        raise typer.Exit(code=1)


def main():
    app()


if __name__ == "__main__":
    main()
