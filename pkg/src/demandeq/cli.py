"""Command-line driver wiring ingestion, simulation, estimation and checks.

Every run creates the output directory if needed, writes a ``manifest.json``
echoing the fully resolved configuration (including the seed), and emits
plain CSV files whose first line is a comment with tool version, command and
seed. Outputs are byte-identical across reruns with the same inputs and
seed. No graphics are rendered; per-figure data is written as CSV.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .anomaly import decompose_anomaly
from .charnorm import CharacteristicsPanel, build_panel
from .dataio import (
    header_comment,
    load_manifest,
    load_panel_csv,
    panel_rows,
    write_csv,
    write_run_manifest,
)
from .errors import DemandeqError, InputFormatError
from .identities import run_verification_grid
from .manifest import build_beliefs, build_simulation
from .market import simulate_panel
from .meanvar import optimal_weights, reconstruction_error
from .panel import regressor_names, rolling_estimate

TSTAT_REFERENCE_LINES = (-2.5, 2.5)  # 1% two-sided significance guides


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("DEMANDEQ_THREADS", "1")))
    except ValueError:
        return 1


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--out-dir", type=Path, required=True, help="output directory")
    sub.add_argument("--seed", type=int, default=1234, help="64-bit seed recorded in outputs")
    sub.add_argument(
        "--threads",
        type=int,
        default=_default_threads(),
        help="worker threads (default from DEMANDEQ_THREADS)",
    )


def _add_panel_inputs(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--input", type=Path, required=True, help="panel CSV")
    group = sub.add_mutually_exclusive_group(required=True)
    group.add_argument("--chars", help="comma-separated characteristic column names")
    group.add_argument(
        "--manifest", type=Path, help="manifest naming the characteristic columns"
    )
    sub.add_argument(
        "--normalize",
        action="store_true",
        help="rank-Gaussianize the characteristic columns before use "
        "(otherwise they are taken as scores)",
    )


def _add_estimation_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--window", type=int, default=12, help="rolling window length in months")
    sub.add_argument("--method", choices=("pooled", "within"), default="within")
    sub.add_argument("--variant", type=int, choices=(1, 2), default=1)
    sub.add_argument("--timing", choices=("lagged", "sync"), default="lagged")
    sub.add_argument("--robust-se", action="store_true", help="heteroskedasticity-robust SEs")


def _char_names(args) -> list[str]:
    if args.chars:
        names = [c.strip() for c in args.chars.split(",") if c.strip()]
    else:
        cfg = load_manifest(args.manifest)
        names = cfg.get("characteristics") or cfg.get("char_names")
        if not names:
            raise InputFormatError(
                f"{args.manifest}: manifest must list 'characteristics'"
            )
    return list(names)


def _load_chars(args) -> tuple[CharacteristicsPanel, np.ndarray, list[str]]:
    names = _char_names(args)
    raw = load_panel_csv(args.input, names)
    if args.normalize:
        chars = build_panel(raw)
    else:
        chars = CharacteristicsPanel(
            dates=raw.dates, firms=raw.firms, k_names=raw.k_names, scores=raw.raw
        )
    return chars, raw.returns, names


def _timing(args) -> str:
    return "synchronous" if args.timing == "sync" else "lagged"


def cmd_normalize(args) -> int:
    chars, returns, names = _load_chars(args)
    comment = header_comment("normalize", args.seed)
    columns = ["date", "firm_id", "ret", *names, *[f"delta_{c}" for c in names]]
    write_csv(
        args.out_dir / "scores.csv",
        columns,
        panel_rows(chars.dates, chars.firms, returns, chars.scores, extra=chars.deltas),
        comment,
    )
    write_run_manifest(
        args.out_dir,
        {
            "command": "normalize",
            "version": __version__,
            "seed": args.seed,
            "input": str(args.input),
            "characteristics": names,
            "normalize": bool(args.normalize),
            "outputs": ["scores.csv"],
        },
    )
    return 0


def cmd_simulate(args) -> int:
    cfg = load_manifest(args.manifest)
    agents, chars, supply, resolved = build_simulation(cfg, args.seed)
    panel = simulate_panel(
        agents,
        chars,
        supply,
        variant=resolved["variant"],
        timing=resolved["timing"],
    )
    comment = header_comment("simulate", args.seed)
    names = chars.k_names
    write_csv(
        args.out_dir / "panel.csv",
        ["date", "firm_id", "ret", *names],
        panel_rows(panel.dates, panel.firms, panel.log_returns, chars.scores),
        comment,
    )
    write_csv(
        args.out_dir / "truth.csv",
        ["date", "kappa", *[f"beta_{c}" for c in names], *[f"eta_{c}" for c in names]],
        (
            [d, panel.kappa[t], *panel.true_beta[t], *panel.true_eta[t]]
            for t, d in enumerate(panel.dates)
        ),
        comment,
    )
    write_csv(
        args.out_dir / "truth_alpha.csv",
        ["date", "firm_id", "alpha"],
        (
            [d, f, panel.true_alpha[t, n]]
            for t, d in enumerate(panel.dates)
            for n, f in enumerate(panel.firms)
        ),
        comment,
    )
    write_run_manifest(
        args.out_dir,
        {
            "command": "simulate",
            "version": __version__,
            "seed": args.seed,
            "input": str(args.manifest),
            "resolved": resolved,
            "outputs": ["panel.csv", "truth.csv", "truth_alpha.csv"],
        },
    )
    return 0


def _rolling_from_args(args):
    chars, returns, names = _load_chars(args)
    rolling = rolling_estimate(
        chars,
        returns,
        window_len=args.window,
        method=args.method,
        variant=args.variant,
        timing=_timing(args),
        robust=args.robust_se,
        n_jobs=args.threads,
    )
    return chars, returns, names, rolling


def cmd_estimate(args) -> int:
    chars, returns, names, rolling = _rolling_from_args(args)
    comment = header_comment("estimate", args.seed)
    coef_names = regressor_names(names)

    def coef_rows():
        for est in rolling.estimates:
            zeta = est.zeta
            for j, coef in enumerate(coef_names):
                yield [est.window[1], coef, zeta[j], est.std_errors[j], est.t_stats[j]]

    write_csv(
        args.out_dir / "coefficients.csv",
        ["terminal_date", "coefficient", "estimate", "std_error", "t_stat"],
        coef_rows(),
        comment,
    )

    def fe_rows():
        for est in rolling.estimates:
            if est.method == "pooled":
                yield [est.window[1], "(intercept)", est.alpha_hat]
            else:
                for firm, a in zip(est.firm_ids, est.alpha_hat):
                    yield [est.window[1], firm, a]

    write_csv(
        args.out_dir / "fixed_effects.csv",
        ["terminal_date", "firm_id", "alpha_hat"],
        fe_rows(),
        comment,
    )

    def quantile_rows():
        for est in rolling.estimates:
            values = (
                np.array([est.alpha_hat])
                if est.method == "pooled"
                else np.asarray(est.alpha_hat)
            )
            qs = np.quantile(values, [0.05, 0.25, 0.5, 0.75, 0.95])
            yield [est.window[1], *qs]

    write_csv(
        args.out_dir / "fe_quantiles.csv",
        ["terminal_date", "q05", "q25", "q50", "q75", "q95"],
        quantile_rows(),
        comment,
    )
    write_run_manifest(
        args.out_dir,
        {
            "command": "estimate",
            "version": __version__,
            "seed": args.seed,
            "input": str(args.input),
            "characteristics": names,
            "normalize": bool(args.normalize),
            "window": args.window,
            "method": args.method,
            "variant": args.variant,
            "timing": _timing(args),
            "robust_se": bool(args.robust_se),
            "skipped_windows": [list(s) for s in rolling.skipped],
            "plot": {"tstat_reference_lines": list(TSTAT_REFERENCE_LINES)},
            "outputs": ["coefficients.csv", "fixed_effects.csv", "fe_quantiles.csv"],
        },
    )
    return 0


def cmd_decompose(args) -> int:
    chars, returns, names, rolling = _rolling_from_args(args)
    try:
        k = names.index(args.sort_char)
    except ValueError:
        try:
            k = int(args.sort_char)
        except ValueError:
            raise InputFormatError(
                f"--sort-char {args.sort_char!r} is neither a characteristic name nor an index"
            ) from None
    if not 0 <= k < len(names):
        raise InputFormatError(f"--sort-char index {k} out of range for {names}")
    report = decompose_anomaly(rolling.estimates, chars, returns, k)
    comment = header_comment("decompose", args.seed)

    per_date_cols = ["terminal_date", "ls_return", "lambda", "xi"]
    for c in names:
        per_date_cols += [f"psi_{c}", f"phi_{c}", f"beta_psi_{c}", f"eta_phi_{c}"]

    def per_date_rows():
        for i, d in enumerate(report.dates):
            row = [d, report.ls_returns[i], report.lambdas[i], report.xis[i]]
            for j in range(len(names)):
                row += [
                    report.psis[i, j],
                    report.phis[i, j],
                    report.betas[i, j] * report.psis[i, j],
                    report.etas[i, j] * report.phis[i, j],
                ]
            yield row

    write_csv(args.out_dir / "per_date.csv", per_date_cols, per_date_rows(), comment)
    write_csv(
        args.out_dir / "summary.csv",
        [
            "sort_char",
            "mean_ls_return",
            "mean_lambda",
            "mu_beta_term",
            "mu_eta_term",
            "covariance_beta_psi",
            "covariance_eta_phi",
            "residual",
        ],
        [
            [
                names[k],
                report.mean_ls_return,
                report.mean_lambda,
                report.mu_beta_term,
                report.mu_eta_term,
                report.covariance_beta_psi,
                report.covariance_eta_phi,
                report.residual,
            ]
        ],
        comment,
    )
    write_run_manifest(
        args.out_dir,
        {
            "command": "decompose",
            "version": __version__,
            "seed": args.seed,
            "input": str(args.input),
            "characteristics": names,
            "sort_char": names[k],
            "normalize": bool(args.normalize),
            "window": args.window,
            "method": args.method,
            "variant": args.variant,
            "timing": _timing(args),
            "skipped_windows": [list(s) for s in rolling.skipped],
            "note": report.note,
            "outputs": ["per_date.csv", "summary.csv"],
        },
    )
    return 0


def cmd_verify(args) -> int:
    results = run_verification_grid(
        n_samples=args.samples, n_reps=args.reps, seed=args.seed
    )
    comment = header_comment("verify", args.seed)
    write_csv(
        args.out_dir / "verify.csv",
        ["check", "estimate", "target", "tolerance", "passed"],
        (
            [r.name, r.estimate, r.target, r.tolerance, str(r.passed)]
            for r in results
        ),
        comment,
    )
    width = max(len(r.name) for r in results)
    for r in results:
        print(
            f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  "
            f"estimate={r.estimate:+.6f}  target={r.target:+.6f}  tol={r.tolerance:.2e}"
        )
    n_failed = sum(not r.passed for r in results)
    print(f"{len(results) - n_failed}/{len(results)} checks passed")
    write_run_manifest(
        args.out_dir,
        {
            "command": "verify",
            "version": __version__,
            "seed": args.seed,
            "samples": args.samples,
            "reps": args.reps,
            "passed": n_failed == 0,
            "outputs": ["verify.csv"],
        },
    )
    return 0 if n_failed == 0 else 1


def cmd_mv_weights(args) -> int:
    beliefs = build_beliefs(load_manifest(args.beliefs))
    solution = optimal_weights(beliefs)
    comment = header_comment("mv-weights", args.seed)
    k = beliefs.n_chars
    columns = ["asset", "weight", "f1", *[f"f2_{j}" for j in range(k)]]
    write_csv(
        args.out_dir / "weights.csv",
        columns,
        (
            [n, solution.weights[n], solution.f1[n], *solution.f2[n]]
            for n in range(beliefs.n_assets)
        ),
        comment,
    )
    write_run_manifest(
        args.out_dir,
        {
            "command": "mv-weights",
            "version": __version__,
            "seed": args.seed,
            "input": str(args.beliefs),
            "delta": solution.delta,
            "budget": beliefs.budget,
            "budget_gap": float(solution.weights.sum() - beliefs.budget),
            "reconstruction_max_abs_err": reconstruction_error(solution, beliefs),
            "outputs": ["weights.csv"],
        },
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="demandeq",
        description="Characteristics-driven equilibrium returns: simulate, estimate, decompose, verify.",
    )
    parser.add_argument("--version", action="version", version=f"demandeq {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("normalize", help="rank-Gaussianize raw characteristics")
    _add_panel_inputs(sub)
    sub.set_defaults(normalize=True)  # normalizing is the whole point here
    _add_common(sub)
    sub.set_defaults(func=cmd_normalize)

    sub = subs.add_parser("simulate", help="simulate an equilibrium return panel")
    sub.add_argument("--manifest", type=Path, required=True, help="simulation manifest (JSON/TOML)")
    _add_common(sub)
    sub.set_defaults(func=cmd_simulate)

    sub = subs.add_parser("estimate", help="rolling pooled/within demand estimation")
    _add_panel_inputs(sub)
    _add_estimation_flags(sub)
    _add_common(sub)
    sub.set_defaults(func=cmd_estimate)

    sub = subs.add_parser("decompose", help="long-short anomaly decomposition")
    _add_panel_inputs(sub)
    _add_estimation_flags(sub)
    sub.add_argument("--sort-char", required=True, help="characteristic name or index to sort on")
    _add_common(sub)
    sub.set_defaults(func=cmd_decompose)

    sub = subs.add_parser("verify", help="run the identity verification grid")
    sub.add_argument("--samples", type=int, default=1_000_000, help="MC samples per grid point")
    sub.add_argument("--reps", type=int, default=200, help="MC replications per dispersion spec")
    _add_common(sub)
    sub.set_defaults(func=cmd_verify)

    sub = subs.add_parser("mv-weights", help="budget-constrained mean-variance weights")
    sub.add_argument("--beliefs", type=Path, required=True, help="beliefs manifest (JSON/TOML)")
    _add_common(sub)
    sub.set_defaults(func=cmd_mv_weights)
    return parser


def _blame(exc: BaseException) -> tuple[str, str]:
    """Innermost package module and function that raised, for error reports."""
    module, operation = "cli", "run"
    tb = exc.__traceback__
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", "")
        if name.startswith("demandeq."):
            module = name.split(".", 1)[1]
            operation = tb.tb_frame.f_code.co_name
        tb = tb.tb_next
    return module, operation


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"demandeq {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except DemandeqError as exc:
        module, operation = _blame(exc)
        print(
            f"demandeq {args.command}: error in {module}.{operation}: "
            f"{type(exc).__name__}: {exc}",
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
