"""Command line interface: ``clusterlasso cluster|fit|simulate|diagnose|replay``.

Every command resolves its options into a plain parameter dict, writes it
to ``config_snapshot.txt`` and then runs from that dict alone, so
``clusterlasso replay config_snapshot.txt --out DIR`` repeats a run.
Exit codes: 0 success, 2 input error, 3 solver non-convergence.
"""

from __future__ import annotations

import os
import sys
import warnings
from pathlib import Path

import click
import numpy as np

from . import __version__
from .clustering import Partition, cancor_cluster, cancor_cluster_auto, corr_hclust
from .diagnostics import group_compat_bound
from .io import (
    InputError,
    atomic_write,
    read_document,
    read_matrix_csv,
    read_response_csv,
    write_csv,
    write_document,
)
from .pipelines import cluster_representatives, crl_select, cgl_select, lasso_select, method_path
from .simgen import GENERATOR, SCENARIOS, Scenario, catalog_scenario, run_scenario
from .solvers import ConvergenceWarning, SolverOptions, cv_select, group_lasso_bcd, lasso_cd
from .svgplot import line_plot

SEED_ENV = "CLUSTERLASSO_SEED"
EXIT_INPUT = 2
EXIT_NONCONVERGENCE = 3


class NonConvergence(RuntimeError):
    pass


def resolve_seed(flag: int | None, default: int = 0) -> tuple[int, str]:
    """Seed from the flag, else from ``CLUSTERLASSO_SEED``, else ``default``."""
    if flag is not None:
        return int(flag), "flag"
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env), "env"
        except ValueError:
            raise InputError(f"{SEED_ENV}={env!r} is not an integer") from None
    return int(default), "default"


def load_design(path) -> np.ndarray:
    X, _ = read_matrix_csv(path, "design")
    return X


def load_partition(path, p: int) -> Partition:
    text = Path(path).read_text() if Path(path).exists() else None
    if text is None:
        raise InputError(f"partition: cannot read {path}")
    try:
        if text.lstrip().startswith("{"):
            part = Partition.from_dict(read_document(path, "partition"))
        else:
            part = Partition.from_text(text)
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"partition: {path}: {e}") from None
    if part.p != p:
        raise InputError(f"partition covers {part.p} variables, design has {p}")
    return part


def _write_snapshot(out: Path, command: str, params: dict) -> None:
    write_document(out / "config_snapshot.txt", "config_snapshot",
                   {"command": command, "params": params, "version": __version__, "generator": GENERATOR})


def _partition_doc(part: Partition, extra: dict) -> dict:
    body = {"p": part.p, "q": part.q, "groups": [list(g) for g in part.groups]}
    body.update(extra)
    return body


# ---------------------------------------------------------------- commands

def exec_cluster(params: dict, out: Path) -> None:
    X = load_design(params["design"])
    if X.shape[1] < 2:
        raise InputError(f"design has p={X.shape[1]}; clustering needs p >= 2")
    method, tau = params["method"], params["tau"]
    extra = {"method": method}
    if method == "cancor":
        if tau == "auto":
            part, trace, b = cancor_cluster_auto(X)
            rows = trace.path()[:-1] if X.shape[1] > 2 else trace.path()
            extra.update(tau="auto", cut=b)
        else:
            part, trace = cancor_cluster(X, float(tau))
            rows = trace.path()
            extra.update(tau=float(tau), cut=trace.cut)
        label = "rho_max"
    elif method == "corr":
        part, trace = corr_hclust(X)
        rows = trace.path()
        extra.update(cut=trace.cut)
        label = "height"
    else:
        raise InputError(f"unknown clustering method {method!r}")
    write_document(out / "partition.txt", "partition", _partition_doc(part, extra))
    write_csv(out / "trace.csv", ["b", "value"], rows)
    if params.get("svg"):
        b, v = zip(*rows)
        atomic_write(out / "trace.svg", line_plot({label: (b, v)}, "merge trace", "b", label))


def _fit_one(method, X, y, part, lam, opts):
    if method == "crl":
        return crl_select(lasso_cd(cluster_representatives(X, part), y, lam, opts), part)
    if method == "cgl":
        return cgl_select(group_lasso_bcd(X, y, part, lam, opts=opts), part)
    return lasso_select(lasso_cd(X, y, lam, opts))


def _coef_rows(sel):
    fit = sel.fit
    if sel.method == "CRL":
        return ["cluster", "coefficient"], [(r, b) for r, b in enumerate(fit.beta)]
    return ["variable", "coefficient"], [(j, b) for j, b in enumerate(fit.beta)]


def exec_fit(params: dict, out: Path) -> None:
    X = load_design(params["design"])
    y = read_response_csv(params["response"])
    if y.shape[0] != X.shape[0]:
        raise InputError(f"response has {y.shape[0]} rows, design has {X.shape[0]}")
    method = params["method"]
    if method not in ("crl", "cgl", "lasso"):
        raise InputError(f"unknown method {method!r}")
    opts = SolverOptions(max_iter=params["max_iter"], tol=params["tol"], kkt_tol=params["kkt_tol"],
                         center=params["center"])
    part = None
    if method != "lasso":
        if params["partition"] == "auto":
            part = cancor_cluster_auto(X)[0]
        else:
            part = load_partition(params["partition"], X.shape[1])
    mode = params["lambda"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        if mode == "path":
            sels = method_path({"crl": "CRL", "cgl": "CGL", "lasso": "Lasso"}[method], X, y, part,
                               n_lambda=params["n_lambda"], lambda_min_ratio=params["lambda_min_ratio"],
                               opts=opts)
            unit = "cluster" if method == "crl" else "variable"
            rows = []
            for k, s in enumerate(sels):
                rows += [(k, s.lam, j, b) for j, b in enumerate(s.fit.beta) if b != 0]
            write_csv(out / "coefficients.csv", ["lambda_index", "lambda", unit, "coefficient"], rows)
            doc = {"method": method, "mode": "path", "path": [s.to_dict() for s in sels]}
            if part is not None:
                doc["partition"] = [list(g) for g in part.groups]
            write_document(out / "selection.txt", "selection", doc)
            bad = [s.lam for s in sels if not s.fit.converged]
        else:
            extra = {}
            if mode == "cv":
                if method == "crl":
                    res = cv_select(cluster_representatives(X, part), y, "lasso", K=params["folds"],
                                    seed=params["seed"], n_lambda=params["n_lambda"],
                                    lambda_min_ratio=params["lambda_min_ratio"], opts=opts)
                elif method == "cgl":
                    res = cv_select(X, y, "group-lasso", part, K=params["folds"], seed=params["seed"],
                                    n_lambda=params["n_lambda"],
                                    lambda_min_ratio=params["lambda_min_ratio"], opts=opts)
                else:
                    res = cv_select(X, y, "lasso", K=params["folds"], seed=params["seed"],
                                    n_lambda=params["n_lambda"],
                                    lambda_min_ratio=params["lambda_min_ratio"], opts=opts)
                write_csv(out / "cv_curve.csv", ["lambda", "mean", "se"],
                          zip(res.lambdas, res.cv_mean, res.cv_se))
                lam = res.lambda_min
                extra = {"lambda_min": res.lambda_min, "lambda_1se": res.lambda_1se, "folds": params["folds"]}
            else:
                lam = float(mode)
                if lam < 0:
                    raise InputError("lambda must be non-negative")
            sel = _fit_one(method, X, y, part, lam, opts)
            header, rows = _coef_rows(sel)
            write_csv(out / "coefficients.csv", header, rows)
            doc = {"mode": "cv" if mode == "cv" else "fixed", **sel.to_dict(), **extra,
                   "intercept": sel.fit.intercept}
            doc["method"] = method
            if part is not None:
                doc["partition"] = [list(g) for g in part.groups]
            write_document(out / "selection.txt", "selection", doc)
            bad = [] if sel.fit.converged else [sel.lam]
    if bad:
        raise NonConvergence(f"solver did not reach the KKT tolerance at lambda = {bad}")


def _scenario_from_params(params: dict) -> Scenario:
    name = params["scenario"]
    if name in SCENARIOS:
        sc = catalog_scenario(name, noise_sigma=params["noise_sigma"], seed=params["seed"], n=params["n"])
    else:
        doc = read_document(name, "scenario")
        body = {k: v for k, v in doc.items() if k not in ("schema_version", "kind")}
        try:
            sc = Scenario.from_dict(body)
        except (TypeError, ValueError) as e:
            raise InputError(f"scenario document {name}: {e}") from None
        sc.seed = params["seed"]
    return sc


def exec_simulate(params: dict, out: Path) -> None:
    sc = _scenario_from_params(params)
    methods = params["methods"]
    res = run_scenario(sc, methods=methods, clusterer=params["clusterer"], n_lambda=params["n_lambda"],
                       lambda_min_ratio=params["lambda_min_ratio"], runs=params["runs"], cv=params["cv"])
    table = res.mse_table()
    header = list(table[0])
    write_csv(out / "mse_table.csv", header, [[r[h] for h in header] for r in table])
    series = {}
    for m in methods:
        curve = res.mean_curve(m)
        write_csv(out / f"screening_{m}.csv", ["size", "tpr"], zip(res.curve_sizes, curve))
        series[m] = (res.curve_sizes, curve)
    write_document(out / "run_summary.txt", "run_summary", {
        "scenario": sc.to_dict(),
        "runs": res.runs,
        "generator": res.generator,
        "seed": sc.seed,
        "clusterer": res.clusterer,
        "q": res.partition.q,
        "oracle_mse_mean": float(np.mean(res.oracle_mse)),
        "mse": {m: res.mse[m] for m in methods},
        "lambda_best": {m: res.lambda_best[m] for m in methods},
    })
    if params.get("svg"):
        atomic_write(out / "screening.svg",
                     line_plot(series, f"screening, scenario {sc.name}", "|S_hat|", "TPR"))


def exec_diagnose(params: dict, out: Path) -> None:
    X = load_design(params["design"])
    part = load_partition(params["partition"], X.shape[1])
    active = params["active_groups"]
    if not active:
        raise InputError("need at least one active group")
    if min(active) < 0 or max(active) >= part.q:
        raise InputError(f"active groups must lie in 0..{part.q - 1}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = group_compat_bound(X, part, active, C=params["C"])
    body = rep.to_dict()
    body["warnings"] = [str(w.message) for w in caught]
    write_document(out / "compat_report.txt", "compat_report", body)


EXECUTORS = {"cluster": exec_cluster, "fit": exec_fit, "simulate": exec_simulate, "diagnose": exec_diagnose}


def run_command(command: str, params: dict, out) -> None:
    """Snapshot the parameters, then execute; maps errors to exit codes."""
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_snapshot(out, command, params)
        EXECUTORS[command](params, out)
    except NonConvergence as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_NONCONVERGENCE)
    except (InputError, ValueError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_INPUT)


# ---------------------------------------------------------------- click layer

def _abs(path) -> str:
    return str(Path(path).resolve())


def _int_list(text: str) -> list[int]:
    try:
        return sorted({int(t) for t in text.split(",") if t.strip()})
    except ValueError:
        raise click.BadParameter(f"expected comma separated integers, got {text!r}") from None


@click.group()
@click.version_option(__version__)
def main():
    """Cluster-then-select sparse regression (CRL / CGL / Lasso)."""


@main.command("cluster")
@click.argument("design", type=click.Path(dir_okay=False))
@click.option("--method", type=click.Choice(["cancor", "corr"]), default="cancor", show_default=True)
@click.option("--tau", default="auto", show_default=True, help="threshold in (0,1) or 'auto'")
@click.option("--out", "out", type=click.Path(file_okay=False), required=True)
@click.option("--svg", is_flag=True, help="also write trace.svg")
def cluster_cmd(design, method, tau, out, svg):
    """Cluster the columns of DESIGN."""
    if tau != "auto":
        try:
            t = float(tau)
        except ValueError:
            raise click.BadParameter("tau must be a number or 'auto'") from None
        if not 0 < t < 1:
            raise click.BadParameter("tau must lie in (0, 1)")
        tau = t
    run_command("cluster", {"design": _abs(design), "method": method, "tau": tau, "svg": svg}, out)


@main.command("fit")
@click.argument("design", type=click.Path(dir_okay=False))
@click.argument("response", type=click.Path(dir_okay=False))
@click.option("--method", type=click.Choice(["crl", "cgl", "lasso"]), default="crl", show_default=True)
@click.option("--partition", default="auto", show_default=True, help="partition file or 'auto'")
@click.option("--lambda", "lam", default="cv", show_default=True, help="a value, 'path' or 'cv'")
@click.option("--n-lambda", default=100, show_default=True)
@click.option("--lambda-min-ratio", default=1e-3, show_default=True)
@click.option("--folds", default=10, show_default=True)
@click.option("--seed", type=int, default=None, help=f"fold seed (else ${SEED_ENV}, else 0)")
@click.option("--center/--no-center", default=False, show_default=True, help="fit an intercept")
@click.option("--max-iter", default=100_000, show_default=True)
@click.option("--tol", default=1e-7, show_default=True)
@click.option("--kkt-tol", default=1e-6, show_default=True)
@click.option("--out", "out", type=click.Path(file_okay=False), required=True)
def fit_cmd(design, response, method, partition, lam, n_lambda, lambda_min_ratio, folds, seed,
            center, max_iter, tol, kkt_tol, out):
    """Fit CRL, CGL or the Lasso of RESPONSE on DESIGN."""
    if lam not in ("path", "cv"):
        try:
            lam = float(lam)
        except ValueError:
            raise click.BadParameter("lambda must be a number, 'path' or 'cv'") from None
    try:
        seed, source = resolve_seed(seed)
    except InputError as e:
        raise click.BadParameter(str(e)) from None
    params = {
        "design": _abs(design), "response": _abs(response), "method": method,
        "partition": partition if partition == "auto" else _abs(partition),
        "lambda": lam, "n_lambda": n_lambda, "lambda_min_ratio": lambda_min_ratio, "folds": folds,
        "seed": seed, "seed_source": source, "center": center,
        "max_iter": max_iter, "tol": tol, "kkt_tol": kkt_tol,
    }
    run_command("fit", params, out)


@main.command("simulate")
@click.option("--scenario", required=True, help=f"one of {', '.join(SCENARIOS)} or a scenario document")
@click.option("--methods", default="CRL,CGL,Lasso", show_default=True)
@click.option("--runs", default=50, show_default=True, type=click.IntRange(min=1))
@click.option("--seed", type=int, default=None, help=f"base seed (else ${SEED_ENV}, else 0)")
@click.option("--noise-sigma", default=3.0, show_default=True)
@click.option("--n", "n", default=100, show_default=True)
@click.option("--clusterer", type=click.Choice(["cancor", "corr", "true"]), default="cancor", show_default=True)
@click.option("--n-lambda", default=100, show_default=True)
@click.option("--lambda-min-ratio", default=1e-3, show_default=True)
@click.option("--cv/--no-cv", default=False, show_default=True, help="also report CV-selected MSE")
@click.option("--svg", is_flag=True, help="also write screening.svg")
@click.option("--out", "out", type=click.Path(file_okay=False), required=True)
def simulate_cmd(scenario, methods, runs, seed, noise_sigma, n, clusterer, n_lambda, lambda_min_ratio,
                 cv, svg, out):
    """Run a simulation scenario and write MSE and screening tables."""
    ms = [m.strip() for m in methods.split(",") if m.strip()]
    bad = [m for m in ms if m not in ("CRL", "CGL", "Lasso")]
    if bad or not ms:
        raise click.BadParameter(f"methods must be drawn from CRL, CGL, Lasso; got {methods!r}")
    if scenario not in SCENARIOS:
        if not Path(scenario).is_file():
            click.echo(f"error: unknown scenario {scenario!r}", err=True)
            sys.exit(EXIT_INPUT)
        scenario = _abs(scenario)
    try:
        seed, source = resolve_seed(seed)
    except InputError as e:
        raise click.BadParameter(str(e)) from None
    params = {
        "scenario": scenario, "methods": ms, "runs": runs, "seed": seed, "seed_source": source,
        "noise_sigma": noise_sigma, "n": n, "clusterer": clusterer, "n_lambda": n_lambda,
        "lambda_min_ratio": lambda_min_ratio, "cv": cv, "svg": svg,
    }
    run_command("simulate", params, out)


@main.command("diagnose")
@click.argument("design", type=click.Path(dir_okay=False))
@click.option("--partition", required=True, type=click.Path(dir_okay=False))
@click.option("--active-groups", required=True, help="comma separated zero-based group indices")
@click.option("--C", "C", default=0.5, show_default=True, type=click.FloatRange(0, 1, min_open=True, max_open=True))
@click.option("--out", "out", type=click.Path(file_okay=False), required=True)
def diagnose_cmd(design, partition, active_groups, C, out):
    """Compatibility bound report for DESIGN under a partition."""
    params = {"design": _abs(design), "partition": _abs(partition),
              "active_groups": _int_list(active_groups), "C": C}
    run_command("diagnose", params, out)


@main.command("replay")
@click.argument("snapshot", type=click.Path(dir_okay=False, exists=True))
@click.option("--out", "out", type=click.Path(file_okay=False), required=True)
def replay_cmd(snapshot, out):
    """Repeat a run from its config_snapshot.txt."""
    try:
        doc = read_document(snapshot, "config_snapshot")
    except InputError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_INPUT)
    if doc.get("command") not in EXECUTORS:
        click.echo(f"error: unknown command {doc.get('command')!r} in snapshot", err=True)
        sys.exit(EXIT_INPUT)
    run_command(doc["command"], doc["params"], out)


if __name__ == "__main__":
    main()
