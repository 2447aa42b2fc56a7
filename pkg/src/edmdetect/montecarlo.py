"""Monte Carlo validation harness for the analytic q-distribution prediction.

Repeats noisy trials at a fixed geometry, collects the statistic and the
leading eigenvalues, and compares the empirical distribution with the
first-order prediction. Trial t draws its noise from a seed derived from
(master_seed, t), so results are bit-identical regardless of execution
order or worker count.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import mpmath
import numpy as np
from scipy import stats

from . import edm, geometry
from .errors import SpectrumError
from .perturbation import StatisticDistribution, eigenvalue_sensitivities, gram_sensitivities

# Trials are processed in fixed-size blocks so that batching (and the split
# across workers) never depends on the worker count.
_BLOCK = 1024

# One-sample Kolmogorov-Smirnov critical values D = c(alpha) / (sqrt(n) +
# 0.12 + 0.11/sqrt(n)) (Stephens' finite-n form of the asymptotic table).
KS_COEFF = {0.05: 1.358, 0.01: 1.628}

_CORRELATION_LABELS = ("lambda1", "lambda4", "lambda5", "lambda4+lambda5")


@dataclass
class TrialRecord:
    """One noisy trial: the statistic and the first five eigenvalues.

    ``q_alt`` is the statistic recomputed under the other eigenvalue
    ordering; it is a diagnostic and not part of the CSV contract.
    """

    trial_index: int
    q: float
    lambdas: np.ndarray  # (5,) leading eigenvalues per configured ordering
    exceeded_threshold: bool | None = None
    q_alt: float | None = None


@dataclass
class SimulationSummary:
    """Empirical statistics of a trial batch plus the comparison verdict data."""

    n_trials: int
    ordering: str
    q_mean: float
    q_std: float
    lambda_mean: np.ndarray  # (5,)
    lambda_var: np.ndarray  # (5,)
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    ks_statistic: float
    ks_critical_5pct: float
    ks_critical_1pct: float
    false_alarm_rate: float | None
    correlation: np.ndarray  # (4, 4) over _CORRELATION_LABELS
    degenerate: bool
    predicted: StatisticDistribution
    alt_ordering: str | None = None
    q_alt_mean: float | None = None
    q_alt_std: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "n_trials": self.n_trials,
            "ordering": self.ordering,
            "q_mean": self.q_mean,
            "q_std": self.q_std,
            "lambda_mean": [float(x) for x in self.lambda_mean],
            "lambda_var": [float(x) for x in self.lambda_var],
            "histogram": {
                "edges": [float(x) for x in self.hist_edges],
                "counts": [int(x) for x in self.hist_counts],
            },
            "ks": {
                "statistic": self.ks_statistic,
                "critical_5pct": self.ks_critical_5pct,
                "critical_1pct": self.ks_critical_1pct,
            },
            "false_alarm_rate": self.false_alarm_rate,
            "correlation": {
                "labels": list(_CORRELATION_LABELS),
                "matrix": [[float(x) for x in row] for row in self.correlation],
            },
            "degenerate": self.degenerate,
            "predicted": self.predicted.to_json_dict(),
            "q_alt": {
                "ordering": self.alt_ordering,
                "mean": self.q_alt_mean,
                "std": self.q_alt_std,
            },
        }


def _other_ordering(ordering: str) -> str:
    return (
        edm.ORDERING_ALGEBRAIC
        if ordering == edm.ORDERING_MAGNITUDE
        else edm.ORDERING_MAGNITUDE
    )


def _exceeds(q: np.ndarray, threshold) -> np.ndarray:
    """Exceedance mask; scalar = one-sided upper, pair = outside the band."""
    if np.isscalar(threshold):
        return q > threshold
    lo, hi = threshold
    return (q < lo) | (q > hi)


def _trial_block(
    satellites: np.ndarray,
    d: np.ndarray,
    sigma_v: float,
    b_eff: float,
    master_seed: int,
    start: int,
    stop: int,
    ordering: str,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run trials [start, stop): returns (q, first-5 eigenvalues, q_alt)."""
    m = d.shape[0]
    n = m + 1
    D = edm.edm_from_gram(edm.gram_from_positions(satellites.T)).entries
    k = stop - start
    Dc = np.zeros((k, n, n))
    Dc[:, 1:, 1:] = D
    for t in range(start, stop):
        rng = np.random.default_rng(np.random.SeedSequence([master_seed, t]))
        rho = d + b_eff + rng.normal(0.0, sigma_v, m)
        Dc[t - start, 0, 1:] = rho**2
        Dc[t - start, 1:, 0] = rho**2
    J = edm.centering_matrix(n)
    Gc = -0.5 * (J @ Dc @ J)
    Gc = 0.5 * (Gc + np.transpose(Gc, (0, 2, 1)))
    w = np.linalg.eigvalsh(Gc)  # ascending per trial

    def _sorted(vals: np.ndarray, order: str) -> np.ndarray:
        if order == edm.ORDERING_ALGEBRAIC:
            return vals[:, ::-1]
        idx = np.argsort(-np.abs(vals), axis=1, kind="stable")
        return np.take_along_axis(vals, idx, axis=1)

    w_main = _sorted(w, ordering)
    w_alt = _sorted(w, _other_ordering(ordering))
    lam1 = w_main[:, 0]
    bad = np.flatnonzero(lam1 == 0.0)
    if bad.size:
        raise SpectrumError(
            f"trial {start + int(bad[0])}: leading eigenvalue is zero (degenerate geometry)"
        )
    q = (w_main[:, 3] + w_main[:, 4]) / (2.0 * lam1)
    q_alt = (w_alt[:, 3] + w_alt[:, 4]) / (2.0 * w_alt[:, 0])
    return q, w_main[:, :5], q_alt


def run_trials(
    g: geometry.ScenarioGeometry,
    nm: geometry.NoiseModel,
    n_trials: int,
    master_seed: int,
    ordering: str = edm.DEFAULT_ORDERING,
    threshold=None,
    workers: int = 1,
) -> list[TrialRecord]:
    """Run ``n_trials`` independent noisy trials at a fixed geometry.

    ``threshold`` may be a scalar (one-sided upper) or a (lo, hi) pair; when
    given, each record carries an exceedance flag. ``workers`` > 1 fans the
    fixed-size trial blocks out to a process pool; outputs are identical for
    any worker count.
    """
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    if master_seed < 0:
        raise ValueError("master_seed must be non-negative")
    if ordering not in edm.ORDERINGS:
        raise ValueError(f"ordering must be one of {edm.ORDERINGS}, got {ordering!r}")
    d = geometry.true_ranges(g)
    b_eff = nm.effective_bias
    spans = [(s, min(s + _BLOCK, n_trials)) for s in range(0, n_trials, _BLOCK)]
    args = [
        (g.satellites, d, nm.sigma_v, b_eff, master_seed, start, stop, ordering)
        for start, stop in spans
    ]
    if workers <= 1 or len(spans) == 1:
        blocks = [_trial_block(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(_trial_block, *zip(*args)))

    records: list[TrialRecord] = []
    for (start, _stop), (q, lams, q_alt) in zip(spans, blocks):
        exceeded = _exceeds(q, threshold) if threshold is not None else None
        for i in range(q.shape[0]):
            records.append(
                TrialRecord(
                    trial_index=start + i,
                    q=float(q[i]),
                    lambdas=lams[i].copy(),
                    exceeded_threshold=bool(exceeded[i]) if exceeded is not None else None,
                    q_alt=float(q_alt[i]),
                )
            )
    return records


def _ks_statistic(sample: np.ndarray, mu: float, sigma: float) -> float:
    """One-sample KS distance between the sample and N(mu, sigma^2)."""
    x = np.sort(sample)
    n = x.shape[0]
    F = stats.norm.cdf(x, loc=mu, scale=sigma)
    i = np.arange(1, n + 1)
    return float(max((i / n - F).max(), (F - (i - 1) / n).max()))


def ks_critical_value(alpha: float, n: int) -> float:
    """Critical KS distance at level ``alpha`` for sample size ``n``."""
    return KS_COEFF[alpha] / (np.sqrt(n) + 0.12 + 0.11 / np.sqrt(n))


def summarize(
    records: Sequence[TrialRecord],
    dist: StatisticDistribution,
    threshold=None,
) -> SimulationSummary:
    """Reduce trial records to empirical statistics and fit diagnostics.

    The histogram uses Freedman-Diaconis binning; the KS statistic compares
    the q sample with N(mu_q, sigma_q^2). The false-alarm rate comes from
    ``threshold`` when supplied, else from the records' stored flags.
    """
    if len(records) < 2:
        raise ValueError("need at least 2 trial records to summarize")
    qs = np.array([r.q for r in records])
    lams = np.vstack([r.lambdas for r in records])

    q_mean = float(qs.mean())
    q_std = float(qs.std(ddof=1))
    degenerate = q_std == 0.0 or dist.sigma_q == 0.0
    if degenerate:
        ks = 1.0
    else:
        ks = _ks_statistic(qs, dist.mu_q, dist.sigma_q)

    edges = np.histogram_bin_edges(qs, bins="fd")
    counts, _ = np.histogram(qs, bins=edges)

    if threshold is not None:
        rate = float(np.mean(_exceeds(qs, threshold)))
    else:
        flags = [r.exceeded_threshold for r in records]
        rate = float(np.mean([bool(f) for f in flags])) if all(
            f is not None for f in flags
        ) else None

    cols = np.column_stack([lams[:, 0], lams[:, 3], lams[:, 4], lams[:, 3] + lams[:, 4]])
    sd = cols.std(axis=0, ddof=1)
    corr = np.eye(4)
    ok = sd > 0
    if ok.any():
        sub = np.corrcoef(cols[:, ok], rowvar=False)
        corr[np.ix_(ok, ok)] = np.atleast_2d(sub)

    q_alts = [r.q_alt for r in records]
    have_alt = all(a is not None for a in q_alts)
    alt = np.array(q_alts, dtype=float) if have_alt else None

    return SimulationSummary(
        n_trials=len(records),
        ordering=dist.ordering,
        q_mean=q_mean,
        q_std=q_std,
        lambda_mean=lams.mean(axis=0),
        lambda_var=lams.var(axis=0, ddof=1),
        hist_edges=edges,
        hist_counts=counts,
        ks_statistic=ks,
        ks_critical_5pct=ks_critical_value(0.05, len(records)),
        ks_critical_1pct=ks_critical_value(0.01, len(records)),
        false_alarm_rate=rate,
        correlation=corr,
        degenerate=degenerate,
        predicted=dist,
        alt_ordering=_other_ordering(dist.ordering) if have_alt else None,
        q_alt_mean=float(alt.mean()) if have_alt else None,
        q_alt_std=float(alt.std(ddof=1)) if have_alt else None,
    )


def inject_fault(
    sample: geometry.PseudorangeSample, sat_index: int, fault_bias: float
) -> geometry.PseudorangeSample:
    """Return a copy of the sample with ``fault_bias`` added to one channel.

    ``sat_index`` is 0-based. The copy is tagged with the fault so
    consistency checks know channel ``sat_index`` no longer satisfies the
    nominal measurement model.
    """
    if not 0 <= sat_index < sample.m:
        raise IndexError(f"sat_index {sat_index} outside 0..{sample.m - 1}")
    rho = sample.rho.copy()
    rho[sat_index] += fault_bias
    return replace(sample, rho=rho, fault_index=sat_index, fault_bias=fault_bias)


# ---------------------------------------------------------------------------
# Finite-difference audit
# ---------------------------------------------------------------------------

@dataclass
class FiniteDifferenceAudit:
    """Comparison of analytic sensitivities against central differences."""

    h: float
    positions: tuple[int, ...]
    sensitivities: np.ndarray  # (len(positions), m)
    finite_differences: np.ndarray  # (len(positions), m)
    relative_discrepancy: np.ndarray  # (len(positions), m)
    max_relative_discrepancy: float


def relative_discrepancy(reference: np.ndarray, other: np.ndarray) -> np.ndarray:
    """|reference - other| / max(|reference|, 1), elementwise."""
    reference = np.asarray(reference, dtype=float)
    other = np.asarray(other, dtype=float)
    return np.abs(reference - other) / np.maximum(np.abs(reference), 1.0)


def _mp_eigenvalues(satellites: np.ndarray, rho, ordering: str):
    """Extended-precision spectrum of the centered Gram built from ``rho``.

    The pipeline is rebuilt from scratch in mpmath arithmetic: eigenvalue
    differences of order h * s sit ~9 decades below the matrix norm, far
    inside double-precision eigensolver noise, so the audit's reference side
    needs more precision than float64 carries.
    """
    m = satellites.shape[0]
    n = m + 1
    pts = [[mpmath.mpf(float(c)) for c in row] for row in satellites]
    D = mpmath.zeros(n, n)
    for i in range(m):
        for j in range(i + 1, m):
            dd = sum((pts[i][k] - pts[j][k]) ** 2 for k in range(3))
            D[i + 1, j + 1] = dd
            D[j + 1, i + 1] = dd
    for j in range(m):
        r2 = rho[j] ** 2
        D[0, j + 1] = r2
        D[j + 1, 0] = r2
    J = mpmath.eye(n) - mpmath.ones(n, n) / n
    Gc = -J * D * J / 2
    E = mpmath.eigsy(Gc, eigvals_only=True)
    vals = [E[i] for i in range(n)]
    if ordering == edm.ORDERING_ALGEBRAIC:
        vals.sort(key=lambda x: -x)
    else:
        vals.sort(key=lambda x: -abs(x))
    return vals


def finite_difference_audit(
    g: geometry.ScenarioGeometry,
    nm: geometry.NoiseModel,
    h: float,
    ordering: str = edm.DEFAULT_ORDERING,
    tracked: tuple[int, ...] = (1, 4, 5),
    dps: int = 40,
) -> FiniteDifferenceAudit:
    """Audit the analytic sensitivities with a central-difference oracle.

    For every tracked eigenvalue position i and satellite j the oracle value
    is (lambda_i(v_j = +h) - lambda_i(v_j = -h)) / (2h) with each perturbed
    spectrum recomputed through the full pipeline in ``dps``-digit
    arithmetic (see _mp_eigenvalues). Discrepancies are relative with an
    absolute floor of 1 m^2/m.
    """
    if not 1e-6 <= h <= 1.0:
        raise ValueError(f"step h must lie in [1e-6, 1] m, got {h}")
    d = geometry.true_ranges(g)
    sample = geometry.nominal_pseudoranges(d, nm)
    D = edm.edm_from_gram(edm.gram_from_positions(g.satellites.T))
    G_c = edm.gram_centered(edm.augment_edm(D, sample.rho))
    spec = edm.spectrum(G_c, ordering)
    table = eigenvalue_sensitivities(spec, gram_sensitivities(sample.rho), tuple(tracked))

    m = g.m
    fd = np.empty((len(tracked), m))
    with mpmath.workdps(dps):
        hm = mpmath.mpf(float(h))
        rho_mp = [mpmath.mpf(float(x)) for x in sample.rho]
        for j in range(m):
            plus = list(rho_mp)
            plus[j] += hm
            minus = list(rho_mp)
            minus[j] -= hm
            w_plus = _mp_eigenvalues(g.satellites, plus, ordering)
            w_minus = _mp_eigenvalues(g.satellites, minus, ordering)
            for a, pos in enumerate(tracked):
                fd[a, j] = float((w_plus[pos - 1] - w_minus[pos - 1]) / (2 * hm))
    rel = relative_discrepancy(table.s, fd)
    return FiniteDifferenceAudit(
        h=h,
        positions=tuple(tracked),
        sensitivities=table.s,
        finite_differences=fd,
        relative_discrepancy=rel,
        max_relative_discrepancy=float(rel.max()),
    )


# ---------------------------------------------------------------------------
# Serialization (deterministic; provenance goes in comment headers)
# ---------------------------------------------------------------------------

def _provenance_lines(provenance: Mapping[str, object] | None) -> list[str]:
    if not provenance:
        return []
    return [f"# {key}={provenance[key]}" for key in sorted(provenance)]


def write_trials_csv(
    records: Sequence[TrialRecord],
    path: str | Path,
    provenance: Mapping[str, object] | None = None,
) -> None:
    """Columns: trial, q, lambda1..lambda5, exceeded (empty if no threshold)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        for line in _provenance_lines(provenance):
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["trial", "q", "lambda1", "lambda2", "lambda3", "lambda4", "lambda5", "exceeded"]
        )
        for r in records:
            exceeded = "" if r.exceeded_threshold is None else int(r.exceeded_threshold)
            writer.writerow(
                [r.trial_index, repr(r.q)] + [repr(float(x)) for x in r.lambdas] + [exceeded]
            )


def write_summary_json(
    summary: SimulationSummary,
    path: str | Path,
    provenance: Mapping[str, object] | None = None,
) -> None:
    doc = summary.to_json_dict()
    if provenance:
        doc["config"] = {k: provenance[k] for k in sorted(provenance)}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_histogram_csv(
    summary: SimulationSummary,
    path: str | Path,
    provenance: Mapping[str, object] | None = None,
) -> None:
    """Columns: bin_left, bin_right, count, predicted_density.

    ``predicted_density`` samples the predicted Gaussian pdf at each bin
    midpoint, which is the overlay-curve content of the histogram figure.
    """
    path = Path(path)
    dist = summary.predicted
    mids = 0.5 * (summary.hist_edges[:-1] + summary.hist_edges[1:])
    if dist.sigma_q > 0:
        density = stats.norm.pdf(mids, loc=dist.mu_q, scale=dist.sigma_q)
    else:
        density = np.zeros_like(mids)
    with path.open("w", newline="") as fh:
        for line in _provenance_lines(provenance):
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(["bin_left", "bin_right", "count", "predicted_density"])
        for left, right, count, dens in zip(
            summary.hist_edges[:-1], summary.hist_edges[1:], summary.hist_counts, density
        ):
            writer.writerow([repr(float(left)), repr(float(right)), int(count), repr(float(dens))])
