"""Small fitting and interval helpers shared by the Monte-Carlo experiments."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import statsmodels.api as sm
from statsmodels.stats.proportion import proportion_confint


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    slope_se: float
    r2: float
    n: int

    def predict(self, x):
        return self.intercept + self.slope * np.asarray(x)


def linear_fit(x, y, weights=None):
    """(Weighted) least-squares line y = intercept + slope * x."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if len(x) < 2:
        raise ValueError("need at least two points for a line fit")
    design = sm.add_constant(x, has_constant="add")
    if weights is None:
        res = sm.OLS(y, design).fit()
    else:
        res = sm.WLS(y, design, weights=np.asarray(weights, float)).fit()
    se = float(res.bse[1]) if len(x) > 2 else float("nan")
    r2 = float(res.rsquared) if np.ptp(y) > 0 else 1.0
    return LinearFit(float(res.params[1]), float(res.params[0]), se, r2, len(x))


def loglog_slope(x, y):
    """Slope of log y against log x."""
    return linear_fit(np.log(x), np.log(y))


def wilson_interval(count, nobs, alpha=0.05):
    lo, hi = proportion_confint(np.asarray(count), nobs, alpha=alpha, method="wilson")
    return np.asarray(lo, float), np.asarray(hi, float)


def convergence_order(steps, errors):
    """Observed order p in error ~ C step^p from a log-log fit."""
    return loglog_slope(steps, errors).slope
