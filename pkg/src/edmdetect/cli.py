"""Command-line runner: simulate, predict, audit.

Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure,
4 audit tolerance exceeded. All outputs are deterministic for a fixed
config and seed (no timestamps); each output file embeds the resolved
configuration in a comment header or a ``config`` JSON field.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import edm, geometry, montecarlo, perturbation
from .errors import ConfigError, DegenerateEigenvalueError, GeometryError, SpectrumError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_AUDIT = 4

_DEFAULTS = {
    "n_sats": 12,
    "elevation_mask_deg": geometry.DEFAULT_ELEVATION_MASK_DEG,
    "orbit_radius_m": geometry.DEFAULT_ORBIT_RADIUS_M,
    "scenario_seed": 1,
    "sigma_v": geometry.DEFAULT_SIGMA_V_M,
    "bias_b": geometry.DEFAULT_BIAS_M,
    "bias_inflation": 0.0,
    "trials": 10_000,
    "master_seed": 42,
    "ordering": edm.DEFAULT_ORDERING,
    "p_fa": 0.01,
    "fd_step": 1e-3,
    "workers": 1,
}

# Tolerances enforced by `audit` (matching the library's invariants).
AUDIT_FD_TOL = 1e-4
AUDIT_CENTERING_TOL = 1e-9
AUDIT_PROJECTOR_TOL = 1e-12
AUDIT_RANK_TOL = 1e-9


@dataclass
class RunConfig:
    """Fully resolved run parameters (file values overridden by flags)."""

    scenario_file: Path | None
    n_sats: int
    elevation_mask_deg: float
    orbit_radius_m: float
    scenario_seed: int
    sigma_v: float
    bias_b: float
    bias_inflation: float
    trials: int
    master_seed: int
    ordering: str
    p_fa: float
    out_dir: Path
    fd_step: float
    workers: int

    def validate(self) -> None:
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if not 0.0 < self.p_fa < 0.5:
            raise ConfigError(f"pfa must lie in (0, 0.5), got {self.p_fa}")
        if self.ordering not in edm.ORDERINGS:
            raise ConfigError(
                f"ordering must be one of {edm.ORDERINGS}, got {self.ordering!r}"
            )
        if self.master_seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.scenario_file is not None and not self.scenario_file.is_file():
            raise ConfigError(f"scenario file not found: {self.scenario_file}")

    def provenance(self) -> dict:
        doc = {
            "scenario_file": str(self.scenario_file) if self.scenario_file else "",
            "n_sats": self.n_sats,
            "elevation_mask_deg": self.elevation_mask_deg,
            "orbit_radius_m": self.orbit_radius_m,
            "scenario_seed": self.scenario_seed,
            "sigma_v": self.sigma_v,
            "bias_b": self.bias_b,
            "bias_inflation": self.bias_inflation,
            "trials": self.trials,
            "master_seed": self.master_seed,
            "ordering": self.ordering,
            "p_fa": self.p_fa,
        }
        return doc


def _load_config_file(path: Path) -> dict:
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    return doc


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, config-file values, and flags (flags win)."""
    file_doc: dict = {}
    scenario_file: Path | None = None
    if args.config is not None:
        cfg_path = Path(args.config)
        file_doc = _load_config_file(cfg_path)
        if "receiver" in file_doc or "satellites" in file_doc or "constellation" in file_doc:
            # The config file doubles as the scenario file.
            scenario_file = cfg_path

    def pick(flag_value, file_key, default):
        if flag_value is not None:
            return flag_value
        if file_key in file_doc:
            return file_doc[file_key]
        return default

    constellation = file_doc.get("constellation") or {}
    cfg = RunConfig(
        scenario_file=scenario_file,
        n_sats=int(constellation.get("n_sats", _DEFAULTS["n_sats"])),
        elevation_mask_deg=float(
            constellation.get("elevation_mask_deg", _DEFAULTS["elevation_mask_deg"])
        ),
        orbit_radius_m=float(
            constellation.get("orbit_radius_m", _DEFAULTS["orbit_radius_m"])
        ),
        scenario_seed=int(file_doc.get("seed", _DEFAULTS["scenario_seed"])),
        sigma_v=float(pick(args.sigma, "sigma_v", _DEFAULTS["sigma_v"])),
        bias_b=float(pick(args.bias, "bias_b", _DEFAULTS["bias_b"])),
        bias_inflation=float(
            pick(args.inflate_bias, "bias_inflation", _DEFAULTS["bias_inflation"])
        ),
        trials=int(pick(args.trials, "trials", _DEFAULTS["trials"])),
        master_seed=int(pick(args.seed, "master_seed", _DEFAULTS["master_seed"])),
        ordering=str(pick(args.ordering, "ordering", _DEFAULTS["ordering"])),
        p_fa=float(pick(args.pfa, "p_fa", _DEFAULTS["p_fa"])),
        out_dir=Path(args.out if args.out is not None else file_doc.get("out", "out")),
        fd_step=float(pick(getattr(args, "fd_step", None), "fd_step", _DEFAULTS["fd_step"])),
        workers=int(pick(getattr(args, "workers", None), "workers", _DEFAULTS["workers"])),
    )
    cfg.validate()
    return cfg


def build_scenario(cfg: RunConfig) -> tuple[geometry.ScenarioGeometry, geometry.NoiseModel]:
    """Scenario from the config file when given, else a generated constellation."""
    if cfg.scenario_file is not None:
        # cfg already merged the file's noise keys with any flag overrides,
        # so only the geometry is taken from the file here.
        geom, _ = geometry.load_scenario_file(cfg.scenario_file)
        nm = geometry.NoiseModel(
            sigma_v=cfg.sigma_v, bias_b=cfg.bias_b, bias_inflation=cfg.bias_inflation
        )
        return geom, nm
    geom = geometry.generate_constellation(
        n_sats=cfg.n_sats,
        elevation_mask_deg=cfg.elevation_mask_deg,
        orbit_radius_m=cfg.orbit_radius_m,
        seed=cfg.scenario_seed,
    )
    nm = geometry.NoiseModel(
        sigma_v=cfg.sigma_v, bias_b=cfg.bias_b, bias_inflation=cfg.bias_inflation
    )
    return geom, nm


def cmd_simulate(cfg: RunConfig) -> int:
    """Run the Monte Carlo experiment and write trials/summary/histogram files."""
    geom, nm = build_scenario(cfg)
    dist = perturbation.predict_q_distribution(geom, nm, cfg.ordering)
    thresholds = perturbation.detection_threshold(dist, cfg.p_fa)
    records = montecarlo.run_trials(
        geom,
        nm,
        cfg.trials,
        cfg.master_seed,
        ordering=cfg.ordering,
        threshold=thresholds.one_sided_hi,
        workers=cfg.workers,
    )
    summary = montecarlo.summarize(records, dist, threshold=thresholds.one_sided_hi)

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    prov = cfg.provenance()
    montecarlo.write_trials_csv(records, cfg.out_dir / "trials.csv", prov)
    montecarlo.write_summary_json(summary, cfg.out_dir / "summary.json", prov)
    montecarlo.write_histogram_csv(summary, cfg.out_dir / "histogram.csv", prov)

    ks_flag = "<=5%crit" if summary.ks_statistic <= summary.ks_critical_5pct else (
        "<=1%crit" if summary.ks_statistic <= summary.ks_critical_1pct else ">1%crit"
    )
    print(
        f"q: predicted mu={dist.mu_q:.6e} sigma={dist.sigma_q:.6e} | "
        f"empirical mean={summary.q_mean:.6e} std={summary.q_std:.6e} | "
        f"KS={summary.ks_statistic:.4f} ({ks_flag}, n={summary.n_trials}) | "
        f"false-alarm {summary.false_alarm_rate:.4f} (target {cfg.p_fa:.4f})"
    )
    return EXIT_OK


def cmd_predict(cfg: RunConfig) -> int:
    """Write the predicted q distribution and thresholds; no simulation."""
    geom, nm = build_scenario(cfg)
    dist = perturbation.predict_q_distribution(geom, nm, cfg.ordering)
    thresholds = perturbation.detection_threshold(dist, cfg.p_fa)
    doc = dist.to_json_dict()
    doc["thresholds"] = {
        "p_fa": thresholds.p_fa,
        "two_sided_lo": thresholds.two_sided_lo,
        "two_sided_hi": thresholds.two_sided_hi,
        "one_sided_hi": thresholds.one_sided_hi,
        "degenerate": thresholds.degenerate,
    }
    doc["config"] = cfg.provenance()
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.out_dir / "prediction.json"
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(
        f"prediction: mu_q={dist.mu_q:.6e} sigma_q={dist.sigma_q:.6e} "
        f"one-sided threshold={thresholds.one_sided_hi:.6e} (p_fa={cfg.p_fa}) -> {out}"
    )
    return EXIT_OK


def _audit_checks(cfg: RunConfig) -> list[tuple[str, float, float, bool]]:
    """(name, value, tolerance, passed) rows for every audit check."""
    geom, nm = build_scenario(cfg)
    d = geometry.true_ranges(geom)
    rows: list[tuple[str, float, float, bool]] = []

    fd = montecarlo.finite_difference_audit(geom, nm, cfg.fd_step, cfg.ordering)
    rows.append(
        (
            f"finite-difference max relative discrepancy (h={cfg.fd_step} m)",
            fd.max_relative_discrepancy,
            AUDIT_FD_TOL,
            fd.max_relative_discrepancy <= AUDIT_FD_TOL,
        )
    )

    rho = geometry.nominal_pseudoranges(d, nm).rho
    D = edm.edm_from_gram(edm.gram_from_positions(geom.satellites.T))
    G_c = edm.gram_centered(edm.augment_edm(D, rho))
    centering = float(
        np.linalg.norm(G_c @ np.ones(G_c.shape[0])) / np.linalg.norm(G_c)
    )
    rows.append(("centering residual |G_c.1|/|G_c|", centering, AUDIT_CENTERING_TOL,
                 centering <= AUDIT_CENTERING_TOL))

    sens = perturbation.gram_sensitivities(rho)
    ones = np.ones(G_c.shape[0])
    res = max(
        float(np.linalg.norm(M @ ones) / np.linalg.norm(M)) for M in sens.matrices
    )
    rows.append(("sensitivity centering residual max_j |dG_j.1|/|dG_j|", res,
                 AUDIT_CENTERING_TOL, res <= AUDIT_CENTERING_TOL))

    J = edm.centering_matrix(G_c.shape[0])
    proj = float(np.abs(J @ J - J).max())
    rows.append(("projector idempotence |J.J - J|_max", proj, AUDIT_PROJECTOR_TOL,
                 proj <= AUDIT_PROJECTOR_TOL))

    w0 = edm.spectrum(edm.gram_centered(edm.augment_edm(D, d)), cfg.ordering).eigenvalues
    n_nonzero_unbiased = int(np.sum(np.abs(w0) > AUDIT_RANK_TOL * np.abs(w0).max()))
    rows.append(("rank collapse: non-zero eigenvalues, zero bias, no noise",
                 float(n_nonzero_unbiased), 3.0, n_nonzero_unbiased == 3))

    if nm.effective_bias != 0.0:
        w1 = edm.spectrum(G_c, cfg.ordering).eigenvalues
        n_nonzero_biased = int(np.sum(np.abs(w1) > AUDIT_RANK_TOL * np.abs(w1).max()))
        rows.append(("bias activation: non-zero eigenvalues with bias, no noise",
                     float(n_nonzero_biased), 5.0, n_nonzero_biased == 5))
    return rows


def cmd_audit(cfg: RunConfig) -> int:
    """Run the finite-difference and invariant audits; nonzero exit on failure."""
    rows = _audit_checks(cfg)
    all_ok = True
    for name, value, tol, ok in rows:
        status = "PASS" if ok else "FAIL"
        print(f"{status}  {name}: {value:.6g} (tolerance {tol:g})")
        all_ok &= ok
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "checks": [
            {"name": name, "value": value, "tolerance": tol, "passed": ok}
            for name, value, tol, ok in rows
        ],
        "passed": all_ok,
        "config": cfg.provenance(),
    }
    (cfg.out_dir / "audit.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if all_ok else EXIT_AUDIT


def _build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="YAML config / scenario file")
    shared.add_argument("--trials", type=int, help="number of Monte Carlo trials")
    shared.add_argument("--seed", type=int, help="master seed for trial noise")
    shared.add_argument("--sigma", type=float, help="pseudorange noise sigma_v, meters")
    shared.add_argument("--bias", type=float, help="receiver clock bias, meters")
    shared.add_argument(
        "--inflate-bias", dest="inflate_bias", type=float,
        help="artificial additive clock bias, meters",
    )
    shared.add_argument("--pfa", type=float, help="false-alarm probability in (0, 0.5)")
    shared.add_argument(
        "--ordering", choices=list(edm.ORDERINGS), help="eigenvalue ordering"
    )
    shared.add_argument("--out", help="output directory (default: out)")
    shared.add_argument("--workers", type=int, help="worker processes for trials")

    parser = argparse.ArgumentParser(
        prog="edmdetect",
        description=(
            "Distance-matrix GNSS fault-detection statistic: analytic nominal "
            "distribution and Monte Carlo validation."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser(
        "simulate", parents=[shared],
        help="run noisy trials and compare against the prediction",
    )
    sub.add_parser(
        "predict", parents=[shared],
        help="write the predicted q distribution and thresholds",
    )
    audit = sub.add_parser(
        "audit", parents=[shared],
        help="finite-difference and invariant audits",
    )
    audit.add_argument(
        "--fd-step", dest="fd_step", type=float,
        help="central-difference step, meters (default 1e-3)",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    commands = {"simulate": cmd_simulate, "predict": cmd_predict, "audit": cmd_audit}
    try:
        cfg = resolve_config(args)
        return commands[args.command](cfg)
    except ConfigError as exc:
        print(f"error (config): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GeometryError as exc:
        print(f"error (geometry): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DegenerateEigenvalueError, SpectrumError, ZeroDivisionError) as exc:
        print(f"error (numerical): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error (io): {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
