"""
Logical error-rate extraction, threshold location, scaling-law fits and
resource estimates built on them.

The scaling law is

    p_L = exp[(alpha * log eps2 + beta) * (d + delta) + gamma]

and the gauge-code level curves are ``P = exp(kappa * log p_CNOT + eta)``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, curve_fit


class NoThresholdError(ValueError):
    pass


class UnattainableError(ValueError):
    pass


# -- per-round rates ---------------------------------------------------------

@dataclass(frozen=True)
class RateEstimate:
    p_L: float
    stderr: float
    saturated: bool = False
    upper: Optional[float] = None  # one-sided 95% bound when no failures were seen

    def as_tuple(self) -> tuple[float, float]:
        return self.p_L, self.stderr


def _invert(P: float, rounds: int) -> float:
    return 0.5 * (1.0 - (1.0 - 2.0 * P) ** (1.0 / rounds))


def per_round_rate(failures: int, trials: int, rounds: int) -> RateEstimate:
    """Per-round logical rate from ``P_fail = (1 - (1 - 2 p_L)^rounds) / 2``."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if failures < 0 or failures > trials:
        raise ValueError(f"failures={failures} outside [0, {trials}]")
    P = failures / trials
    if failures == 0:
        # 95% one-sided binomial bound
        P_up = 1.0 - 0.05 ** (1.0 / trials)
        return RateEstimate(0.0, 0.0, False, _invert(min(P_up, 0.5), rounds))
    if P >= 0.5:
        return RateEstimate(0.5, math.inf, True)
    sigma_P = math.sqrt(P * (1 - P) / trials)
    slope = (1.0 - 2.0 * P) ** (1.0 / rounds - 1.0) / rounds
    return RateEstimate(_invert(P, rounds), slope * sigma_P)


# -- scaling law -------------------------------------------------------------

@dataclass
class ScalingFit:
    alpha: float
    beta: float
    gamma: float
    delta: float
    cov: Optional[np.ndarray] = None
    grid: list = field(default_factory=list)  # (eps2, d, p_L, stderr)
    residuals: list = field(default_factory=list)  # log-space

    @property
    def params(self) -> tuple[float, float, float, float]:
        return self.alpha, self.beta, self.gamma, self.delta

    @property
    def sigmas(self) -> tuple[float, ...]:
        if self.cov is None:
            return (math.nan,) * 4
        return tuple(float(math.sqrt(max(v, 0.0))) for v in np.diag(self.cov))

    @property
    def threshold(self) -> float:
        """Rate where the d-dependence vanishes: ``exp(-beta/alpha)``."""
        return math.exp(-self.beta / self.alpha)

    def evaluate(self, eps2, d):
        return evaluate(self, eps2, d)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha, "beta": self.beta, "gamma": self.gamma, "delta": self.delta,
            "sigmas": list(self.sigmas),
            "cov": None if self.cov is None else np.asarray(self.cov).tolist(),
            "threshold": self.threshold,
            "grid": [list(map(float, g)) for g in self.grid],
            "residuals": [float(r) for r in self.residuals],
        }


def _log_model(X, alpha, beta, gamma, delta):
    log_eps, d = X
    return (alpha * log_eps + beta) * (d + delta) + gamma


def evaluate(fit: ScalingFit, eps2, d):
    """Closed-form scaling law; broadcasts over arrays."""
    return np.exp(_log_model((np.log(eps2), np.asarray(d, dtype=float)), *fit.params))


# fitted values reported alongside the original simulations, with their sigmas
TABLE_I = ScalingFit(0.5978, 2.9767, -3.9819, 0.2923,
                     cov=np.diag(np.square([0.0058, 0.0330, 0.0256, 0.0413])))


@dataclass(frozen=True)
class EmpiricalModel:
    """``p_L = p_th * (eps2 / eps2_th) ** ((d + 1) / 2)``."""

    eps2_th: float
    p_th: float = 0.02

    def evaluate(self, eps2, d):
        return self.p_th * (np.asarray(eps2) / self.eps2_th) ** ((np.asarray(d) + 1) / 2)

    def as_scaling(self) -> ScalingFit:
        # alpha (d + delta) must equal (d + 1) / 2, hence delta = 1
        return ScalingFit(0.5, -0.5 * math.log(self.eps2_th), math.log(self.p_th), 1.0)


EMPIRICAL = EmpiricalModel(eps2_th=math.exp(-2.4809 / 0.5))


def fit_scaling(grid: Iterable[Sequence[float]]) -> ScalingFit:
    """Weighted least squares of ``log p_L`` against the scaling law.

    ``grid`` rows are ``(eps2, d, p_L, stderr)``; weights are inverse
    variances in log space (``stderr / p_L``). Points with ``p_L <= 0`` are dropped.
    """
    rows = [tuple(map(float, g)) for g in grid if g[2] > 0]
    if len(rows) < 5:
        raise ValueError(f"need at least 5 points with p_L > 0, got {len(rows)}")
    eps = np.array([r[0] for r in rows])
    d = np.array([r[1] for r in rows])
    p = np.array([r[2] for r in rows])
    se = np.array([r[3] for r in rows])
    if len(set(d)) < 2 or len(set(eps)) < 2:
        raise ValueError("need at least two distances and two rates")
    y = np.log(p)
    sig = np.where(se > 0, se / p, 1.0)
    L = np.log(eps)
    # the model is linear in (alpha, beta, alpha*delta, beta*delta + gamma)
    A = np.stack([L * d, d, L, np.ones_like(L)], axis=1)
    coef, *_ = np.linalg.lstsq(A / sig[:, None], y / sig, rcond=None)
    a0, b0 = coef[0], coef[1]
    d0 = coef[2] / a0 if a0 else 0.0
    g0 = coef[3] - b0 * d0
    popt, pcov = curve_fit(_log_model, (L, d), y, p0=[a0, b0, g0, d0], sigma=sig,
                           absolute_sigma=True, maxfev=20000)
    if not np.all(np.isfinite(popt)):
        raise ValueError("fit diverged")
    resid = y - _log_model((L, d), *popt)
    return ScalingFit(*map(float, popt), cov=pcov, grid=rows, residuals=list(resid))


def select_subthreshold(grid: Iterable[Sequence[float]], eps2_th: float,
                        max_rel_err: float = 0.3, frac: float = 0.8) -> list[tuple]:
    """Keep points with ``stderr/p_L < max_rel_err`` and ``eps2 <= frac * eps2_th``."""
    out = []
    for g in grid:
        eps, d, p, se = g[:4]
        if p > 0 and se / p < max_rel_err and eps <= frac * eps2_th:
            out.append(tuple(g))
    return out


# -- threshold ---------------------------------------------------------------

@dataclass
class ThresholdEstimate:
    eps2_th: float
    stderr: float
    crossings: dict  # (d1, d2) -> crossing

    def to_dict(self) -> dict:
        return {"eps2_th": self.eps2_th, "stderr": self.stderr,
                "crossings": {f"{a}-{b}": v for (a, b), v in self.crossings.items()}}


def _pair_crossing(eps: np.ndarray, lp1: np.ndarray, lp2: np.ndarray) -> Optional[float]:
    # lp2 belongs to the larger distance; below threshold it is the smaller rate
    diff = lp2 - lp1
    for i in range(len(eps) - 1):
        if diff[i] < 0 <= diff[i + 1]:
            # both curves are straight lines in log-log between the two points
            x0, x1 = math.log(eps[i]), math.log(eps[i + 1])
            t = diff[i] / (diff[i] - diff[i + 1])
            return math.exp(x0 + t * (x1 - x0))
    return None


def _crossings(table: dict, ds: list[int], eps_all: list[float], logp) -> dict:
    out = {}
    for d1, d2 in zip(ds, ds[1:]):
        common = [e for e in eps_all if (e, d1) in table and (e, d2) in table]
        if len(common) < 2:
            continue
        e = np.array(common)
        c = _pair_crossing(e, np.array([logp[(x, d1)] for x in common]),
                           np.array([logp[(x, d2)] for x in common]))
        if c is not None:
            out[(d1, d2)] = c
    return out


def find_threshold(grid: Iterable[Sequence[float]], n_boot: int = 200, seed: int = 0) -> ThresholdEstimate:
    """Crossing of ``p_L(eps2)`` curves for successive distances.

    ``grid`` rows are ``(eps2, d, p_L[, stderr])``. The estimate is the mean
    over distance pairs of the log-log interpolated crossing; its uncertainty
    comes from a parametric bootstrap on ``log p_L``.
    """
    table = {}
    for g in grid:
        eps, d, p = float(g[0]), int(g[1]), float(g[2])
        se = float(g[3]) if len(g) > 3 else 0.0
        if p > 0:
            table[(eps, d)] = (p, se)
    ds = sorted({d for _, d in table})
    if len(ds) < 2:
        raise ValueError("need at least two distances")
    eps_all = sorted({e for e, _ in table})
    logp = {k: math.log(v[0]) for k, v in table.items()}
    cross = _crossings(table, ds, eps_all, logp)
    if not cross:
        raise NoThresholdError("no threshold in range")
    est = float(np.mean(list(cross.values())))
    rng = np.random.default_rng(seed)
    boots = []
    for _ in range(n_boot):
        lp = {k: logp[k] + rng.normal() * (v[1] / v[0] if math.isfinite(v[1]) else 0.0)
              for k, v in table.items()}
        c = _crossings(table, ds, eps_all, lp)
        if c:
            boots.append(np.mean(list(c.values())))
    err = float(np.std(boots)) if len(boots) > 1 else math.nan
    return ThresholdEstimate(est, err, cross)


# -- resources ---------------------------------------------------------------

TABLE_II = {  # level -> (kappa, eta, sigma)
    1: (0.9973, 4.1141, 0.0463),
    2: (1.0303, 5.8552, 0.0815),
    3: (2.0717, 18.7274, 0.2723),
    4: (3.4795, 36.4548, 1.4622),
}


def p_cnot(eps2: float, d: int, fit: ScalingFit = TABLE_I) -> float:
    """Surface-code CNOT error rate priced by its space-time volume: ``14 d p_L``."""
    return 14 * d * float(evaluate(fit, eps2, d))


def required_segment(eps2: float, target_p_cnot: float, fit: ScalingFit = TABLE_I,
                     d_max: int = 201) -> int:
    """Smallest segment size ``s = d + 2`` (odd ``d``) with ``14 d p_L <= target``."""
    if eps2 >= fit.threshold:
        raise UnattainableError(f"eps2={eps2} is not below threshold {fit.threshold:.4g}")
    for d in range(3, d_max + 1, 2):
        if p_cnot(eps2, d, fit) <= target_p_cnot:
            return d + 2
    raise UnattainableError(f"no d <= {d_max} reaches {target_p_cnot}")


def gauge_overhead(level: int) -> int:
    """Surface-code qubits per gauge-code information qubit."""
    return 4 * 6 ** level if level > 0 else 1


def gauge_rate(p: float, level: int, table: Optional[dict] = None) -> float:
    kappa, eta, _ = (table or TABLE_II)[level]
    return math.exp(kappa * math.log(p) + eta)


def gates_before_failure(eps2: float, s: int, level: int = 0, fit: ScalingFit = TABLE_I,
                         table: Optional[dict] = None) -> float:
    """Expected logical CNOTs before the first logical error."""
    if eps2 >= fit.threshold:
        raise UnattainableError(f"eps2={eps2} is not below threshold {fit.threshold:.4g}")
    d = s - 2
    if d < 1:
        raise ValueError("segment too small")
    p = p_cnot(eps2, d, fit)
    if level == 0:
        return 1.0 / p
    if p >= 1.0:
        raise UnattainableError("surface-code CNOT rate saturates")
    return 1.0 / min(1.0, gauge_rate(p, level, table))


def resource_table(eps_grid: Sequence[float], targets: Sequence[float],
                   fit: ScalingFit = TABLE_I) -> list[dict]:
    """Required segment size per (eps2, target); ``None`` where unattainable."""
    rows = []
    for t in targets:
        for e in eps_grid:
            try:
                s = required_segment(e, t, fit)
            except UnattainableError:
                s = None
            rows.append({"eps2": e, "target": t, "s": s})
    return rows


def gates_table(eps_grid: Sequence[float], sizes: Sequence[int], levels=(0, 3, 4),
                fit: ScalingFit = TABLE_I) -> list[dict]:
    rows = []
    for lvl in levels:
        for e in eps_grid:
            for s in sizes:
                try:
                    g = gates_before_failure(e, s, lvl, fit)
                except UnattainableError:
                    g = None
                rows.append({"level": lvl, "eps2": e, "s": s, "gates": g,
                             "qubits_per_logical": gauge_overhead(lvl) * s})
    return rows


# -- IO ----------------------------------------------------------------------

def read_surface_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = []
    for r in csv.DictReader(io.StringIO("".join(lines))):
        rows.append({k: (int(v) if k in ("d", "s", "rounds", "trials", "failures_Z", "failures_X")
                         else float(v)) for k, v in r.items()})
    return rows


def surface_grid(rows: Iterable[dict], kind: str = "Z") -> list[tuple]:
    """(eps2, d, p_L, stderr) tuples for one error type."""
    return [(r["eps2"], r["d"], r[f"p_L_{kind}"], r[f"stderr_{kind}"]) for r in rows]


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))
