"""Command-line interface: ``analyze``, ``simulate`` and ``validate``.

Outputs are written only when the whole run succeeds; on any error the files
created so far are removed and the exit status is nonzero.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .bootstrap import run_bootstrap
from .data import AnalysisConfig, TrialDataset, load_trial
from .errors import BenefitmarkError, ValidationError
from .metrics import roc_on_grid
from .pipeline import analyze
from .report import build_report, dumps, roc_csv_text
from .simulator import Scenario, load_full_trial, oracle_pi_z, roc_from_labels, simulate_trial

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVALID = 2


class OutputSet:
    """Files written by one command, removed together if the command fails."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.written: list[Path] = []
        self._made_dir = False

    def __enter__(self):
        if self.dir.exists() and not self.dir.is_dir():
            raise ValidationError(f"output path is not a directory: {self.dir}")
        if not self.dir.exists():
            self.dir.mkdir(parents=True)
            self._made_dir = True
        return self

    def write(self, name: str, text: str) -> Path:
        path = self.dir / name
        tmp = path.with_name(path.name + ".partial")
        self.written.append(tmp)
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
        self.written[-1] = path
        return path

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            return False
        for path in self.written:
            path.unlink(missing_ok=True)
        if self._made_dir and not any(self.dir.iterdir()):
            self.dir.rmdir()
        return False


def _config_overrides(args) -> dict:
    return {
        "seed": args.seed,
        "bootstrap_replicates": args.replicates,
        "approach": args.approach,
        "link": args.link,
        "pair_fraction": args.pair_fraction,
        "ci_level": args.ci_level,
        "quadrature_nodes": args.quadrature_nodes,
    }


def load_config(args) -> AnalysisConfig:
    return AnalysisConfig.from_json(args.config).with_overrides(**_config_overrides(args))


def run_analysis(data: TrialDataset, config: AnalysisConfig, workers: int | None = None):
    result = analyze(data, config)
    boot = None
    if config.bootstrap_replicates > 0:
        boot = run_bootstrap(data, config, keys=[s.key for s in result.settings],
                             workers=workers)
    return result, boot


def cmd_analyze(args) -> int:
    config = load_config(args)
    data = load_trial(args.data, config)
    result, boot = run_analysis(data, config, args.threads)
    report = build_report(data, config, result, boot)
    with OutputSet(args.out) as out:
        for entry in report["results"]:
            out.write(entry["roc_csv"], roc_csv_text(entry["roc_band"]))
        out.write("report.json", dumps(report) + "\n")
    print(f"wrote {out.dir / 'report.json'}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = Scenario.from_json(args.scenario)
    full = simulate_trial(scenario, args.n, args.seed)
    with OutputSet(args.out) as out:
        for name, masked in (("full.csv", False), ("masked.csv", True)):
            path = out.dir / name
            out.written.append(path)
            full.write_csv(path, masked=masked)
    print(f"wrote {args.n} subjects to {out.dir}")
    return EXIT_OK


def validation_summary(data: TrialDataset, config: AnalysisConfig, result, b: np.ndarray,
                       scenario: Scenario | None = None, mc_draws: int = 20_000) -> dict:
    """Estimated versus true benefit classification, per setting."""
    oracle = {m: roc_from_labels(data.marker(m), b) for m in config.marker_columns}
    pi_oracle: dict = {}
    rows = []
    for s in result.settings:
        true_roc = oracle[s.marker]
        z = s.curve.z
        if s.marker not in pi_oracle:
            if scenario is not None:
                pi_oracle[s.marker] = oracle_pi_z(scenario, z, mc_draws, config.seed, s.marker)
            elif s.curve.marker_kind == "binary":
                zm = data.marker(s.marker)
                pi_oracle[s.marker] = np.array([b[zm == v].mean() for v in z])
            else:
                pi_oracle[s.marker] = None
        truth = pi_oracle[s.marker]
        rows.append({
            "marker": s.marker,
            "approach": s.approach,
            "parameter": s.parameter,
            "value": s.value,
            "auc": s.auc,
            "oracle_auc": true_roc.auc,
            "auc_abs_error": abs(s.auc - true_roc.auc),
            "roc_sup_error": float(np.max(np.abs(roc_on_grid(s.roc) - roc_on_grid(true_roc)))),
            "pi_z_sup_error": None if truth is None else float(np.max(np.abs(s.curve.pi_z - truth))),
        })
    return {"n": data.n, "benefit_rate": float(np.mean(b)), "settings": rows}


def cmd_validate(args) -> int:
    config = load_config(args)
    data = load_trial(args.full_data, config)
    cf, ids = load_full_trial(args.full_data, config.covariate_names)
    if tuple(ids) != data.ids:
        raise ValidationError("counterfactual rows do not line up with the trial rows")
    scenario = Scenario.from_json(args.scenario) if args.scenario else None
    result, boot = run_analysis(data, config, args.threads)
    report = build_report(data, config, result, boot)
    summary = validation_summary(data, config, result, cf["b"], scenario, args.mc_draws)
    with OutputSet(args.out) as out:
        for entry in report["results"]:
            out.write(entry["roc_csv"], roc_csv_text(entry["roc_band"]))
        out.write("validation.json", dumps(summary) + "\n")
        out.write("report.json", dumps(report) + "\n")
    for row in summary["settings"]:
        print(f"{row['marker']:>12s} {row['approach']:>8s} {row['parameter']}={row['value']:<8.4g}"
              f" auc={row['auc']:.4f} oracle={row['oracle_auc']:.4f}"
              f" |error|={row['auc_abs_error']:.4f}")
    return EXIT_OK


def _analysis_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="analysis config (JSON)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--replicates", type=int, help="bootstrap replicates (0 disables)")
    p.add_argument("--approach", choices=("direct", "indirect", "both"))
    p.add_argument("--link", choices=("logit", "probit"))
    p.add_argument("--pair-fraction", type=float)
    p.add_argument("--ci-level", type=float)
    p.add_argument("--quadrature-nodes", type=int)
    p.add_argument("--threads", type=int,
                   help="bootstrap worker processes; default BENEFITMARK_THREADS or 1, 0 = all CPUs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="benefitmark",
        description="Evaluate markers for classifying who benefits from treatment in a randomized trial.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="estimate benefit-classification accuracy of markers")
    p.add_argument("--data", required=True, help="trial CSV")
    _analysis_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="simulate a trial with both potential outcomes")
    p.add_argument("--scenario", required=True, help="scenario (JSON)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="compare estimates with the simulated truth")
    p.add_argument("--full-data", required=True, help="full-trial CSV with y0, y1, u, b")
    p.add_argument("--scenario", help="generating scenario, enables the pi_Z oracle")
    p.add_argument("--mc-draws", type=int, default=20_000)
    _analysis_flags(p)
    p.set_defaults(func=cmd_validate, replicates=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except BenefitmarkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
