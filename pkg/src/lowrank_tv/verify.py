"""Monte-Carlo checks of the concentration bounds used by the estimators.

Each verifier is one-sided: it counts how often a bound is exceeded and
compares that frequency with the stated failure probability plus three
binomial standard errors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from lowrank_tv.linalg import bracket_norm, operator_norm
from lowrank_tv.models import as_rng, check_prob_matrix

SIGMAS = 3.0


def binomial_slack(p: float, trials: int, sigmas: float = SIGMAS) -> float:
    return sigmas * math.sqrt(max(p * (1 - p), 0.0) / trials)


@dataclass
class VerifierReport:
    """Rows of (observed, bound, violated) plus the pass rule.

    ``kind == "per-trial"``: each row is one Monte-Carlo trial and the check
    passes when the violation rate is at most ``budget`` plus slack.
    ``kind == "per-point"``: each row is an empirical frequency compared with
    a probability bound; the row's own slack is already folded into
    ``violated`` and the check passes when no row is violated.
    """
    name: str
    kind: str
    observed: np.ndarray
    bound: np.ndarray
    violated: np.ndarray
    budget: float = 0.0
    params: dict = field(default_factory=dict)

    @property
    def trials(self) -> int:
        return int(self.params.get("trials", len(self.observed)))

    @property
    def violations(self) -> int:
        return int(np.sum(self.violated))

    @property
    def rate(self) -> float:
        return self.violations / len(self.violated)

    @property
    def allowed(self) -> float:
        if self.kind == "per-point":
            return 0.0
        return min(self.budget, 1.0) + binomial_slack(min(self.budget, 1.0), len(self.violated))

    @property
    def passed(self) -> bool:
        if self.kind == "per-point":
            return self.violations == 0
        return self.rate <= self.allowed

    @property
    def flagged(self) -> bool:
        """Passed, but by less than one standard error beyond 2 sigma."""
        if self.kind == "per-point" or not self.passed:
            return False
        b = min(self.budget, 1.0)
        return self.rate > b + binomial_slack(b, len(self.violated), 2.0)

    def summary(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        return (f"{self.name}: {self.violations}/{len(self.violated)} violations, "
                f"allowed rate {self.allowed:.4g} -> {verdict}")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["trial", "observed", "bound", "violated"])
            for i, (o, b, v) in enumerate(zip(self.observed, self.bound, self.violated)):
                w.writerow([i, f"{o:.12g}", f"{b:.12g}", int(v)])


# ---------------------------------------------------------------- multinomial noise

def noise_bound(q, alpha: float, N: float, n: int) -> float:
    """``9 max(alpha [Q] log N / n, (alpha log N / n)^2)`` for ``||W_Q||^2``."""
    a = alpha * math.log(N) / n
    return 9.0 * max(a * bracket_norm(q), a * a)


def verify_noise_bound(p, block=None, alpha: float = 2.0, N: float = 10.0,
                       n: int = 10_000, trials: int = 500, seed=None) -> VerifierReport:
    """Draw ``Y ~ M(p, n)`` and compare ``||(Y/n - p)_{IJ}||^2`` with the bound.

    ``block`` is ``(I, J)`` (index arrays); ``None`` means the whole matrix.
    The failure budget is ``(|I| + |J|) / N^alpha``.
    """
    if not alpha > 1 or not N > 1:
        raise ValueError("need alpha > 1 and N > 1")
    p = check_prob_matrix(p)
    if block is None:
        I, J = np.arange(p.shape[0]), np.arange(p.shape[1])
    else:
        I, J = (np.atleast_1d(np.asarray(b, dtype=np.int64)) for b in block)
    if len(I) == 0 or len(J) == 0:
        raise ValueError("block must have at least one row and one column")
    q = p[np.ix_(I, J)]
    bound = noise_bound(q, alpha, N, n)
    rng = as_rng(seed)
    obs = np.empty(trials)
    flat = p.ravel()
    for t in range(trials):
        y = rng.multinomial(n, flat).reshape(p.shape)
        w = (y / n - p)[np.ix_(I, J)]
        obs[t] = operator_norm(w) ** 2 if np.any(w) else 0.0
    return VerifierReport("noise_bound", "per-trial", obs, np.full(trials, bound),
                          obs > bound, (len(I) + len(J)) / N ** alpha,
                          {"alpha": alpha, "N": N, "n": n, "rows": len(I),
                           "cols": len(J), "trials": trials})


# ---------------------------------------------------------------- row mass

def verify_row_concentration(p, alpha: float, N: float, n: int, trials: int = 500,
                             seed=None, axis: int = 1) -> VerifierReport:
    """Event: every row with mass in ``[14 alpha log N / n, 1)`` keeps a quarter of it.

    With ``axis=1`` the statistic is the row sum ``Z_i`` of ``Y ~ M(p, n)``;
    ``axis=0`` uses column sums. Each trial records the smallest ratio
    ``(Z_i / n) / lambda_i`` over qualifying rows (``inf`` if there are
    none); a violation is a ratio below 1/4. Budget ``(count + 1) / N^alpha``.
    """
    if not n > 14 * alpha * math.log(N):
        raise ValueError("need n > 14 alpha log N")
    p = check_prob_matrix(p)
    lam = p.sum(axis=axis)
    keep = (lam >= 14 * alpha * math.log(N) / n) & (lam < 1)
    rng = as_rng(seed)
    obs = np.full(trials, np.inf)
    flat = p.ravel()
    if keep.any():
        for t in range(trials):
            z = rng.multinomial(n, flat).reshape(p.shape).sum(axis=axis)
            obs[t] = np.min(z[keep] / n / lam[keep])
    return VerifierReport("row_concentration", "per-trial", obs, np.full(trials, 0.25),
                          obs < 0.25, (int(keep.sum()) + 1) / N ** alpha,
                          {"alpha": alpha, "N": N, "n": n, "qualifying": int(keep.sum()),
                           "trials": trials})


# ---------------------------------------------------------------- Poisson tails

def poisson_lower_tail_bound(lam: float, x: float) -> float:
    """Bound on ``P(zeta <= lam - x)`` for ``0 < x < lam``."""
    if not 0 < x < lam:
        raise ValueError("need 0 < x < lambda")
    return math.exp(-x - (lam - x) * math.log((lam - x) / lam))


def poisson_upper_tail_bound(lam: float, x: float) -> float:
    """Bound on ``P(zeta >= lam + x)`` for ``x > 0``."""
    if not x > 0:
        raise ValueError("need x > 0")
    return math.exp(x - (lam + x) * math.log((lam + x) / lam))


def verify_poisson_tails(lam: float, x_grid, trials: int = 100_000,
                         seed=None) -> VerifierReport:
    """Empirical lower and upper tail frequencies against the two bounds.

    Rows alternate lower/upper tail for each x; the lower tail is skipped
    for ``x >= lam``.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    z = as_rng(seed).poisson(lam, size=trials)
    obs, bnd, viol, rows = [], [], [], []
    for x in np.atleast_1d(np.asarray(x_grid, dtype=float)):
        if not x > 0:
            raise ValueError("x must be positive")
        tails = [("upper", np.mean(z >= lam + x), poisson_upper_tail_bound(lam, x))]
        if x < lam:
            tails.insert(0, ("lower", np.mean(z <= lam - x),
                             poisson_lower_tail_bound(lam, x)))
        for side, f, b in tails:
            obs.append(f)
            bnd.append(b)
            viol.append(f > min(b, 1.0) + binomial_slack(min(b, 1.0), trials))
            rows.append((side, float(x)))
    return VerifierReport("poisson_tails", "per-point", np.array(obs), np.array(bnd),
                          np.array(viol), 0.0,
                          {"lambda": lam, "trials": trials, "rows": rows})


# ---------------------------------------------------------------- histogram deviation

def histogram_deviation_bound(ell: int, m: int, delta: float) -> float:
    return math.sqrt(ell / m) + math.sqrt(2 * math.log(1 / delta) / m)


def verify_histogram_deviation(ell: int, m: int, delta: float, trials: int = 1000,
                               seed=None, p=None) -> VerifierReport:
    """``sum_j |p_j - hat p_j|`` over ``trials`` samples of size ``m``.

    ``p`` defaults to the uniform distribution on ``ell`` bins. Budget ``delta``.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    p = np.full(ell, 1.0 / ell) if p is None else np.asarray(p, dtype=float)
    if len(p) != ell or abs(p.sum() - 1) > 1e-10 or np.any(p < 0):
        raise ValueError("p must be a distribution on ell bins")
    bound = histogram_deviation_bound(ell, m, delta)
    counts = as_rng(seed).multinomial(m, p, size=trials)
    obs = np.abs(counts / m - p).sum(axis=1)
    return VerifierReport("histogram_deviation", "per-trial", obs, np.full(trials, bound),
                          obs > bound, delta,
                          {"ell": ell, "m": m, "delta": delta, "trials": trials})
