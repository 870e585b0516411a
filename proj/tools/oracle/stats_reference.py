"""Freezes reference values for the statistics tests into
tests/data/stats_reference.json using scipy, statsmodels and scikit-learn.
Run from the repo root:

    python3 tools/oracle/stats_reference.py
"""
import json
from fractions import Fraction

import numpy as np
import pandas as pd
import statsmodels.api as sm
import statsmodels.formula.api as smf
from scipy import stats
from sklearn.linear_model import Ridge

rng = np.random.default_rng(99)
out = {}

# pooled two-sample t-tests
tt = []
for na, nb, shift in [(5, 5, 0.0), (12, 9, 0.8), (30, 30, 0.2), (100, 100, 0.5), (3, 17, -1.5)]:
    a = rng.normal(0, 1, na).round(6)
    b = rng.normal(shift, 1.3, nb).round(6)
    r = stats.ttest_ind(a, b, equal_var=True)
    tt.append({"a": a.tolist(), "b": b.tolist(), "t": float(r.statistic), "df": na + nb - 2, "p": float(r.pvalue)})
out["t_tests"] = tt

# hand-checkable balanced 2x2 ANOVA, exact arithmetic
cells = {("h", "uni"): [4, 6, 5], ("h", "multi"): [8, 9, 10], ("m", "uni"): [3, 2, 4], ("m", "multi"): [5, 7, 6]}
vals = [Fraction(v) for c in cells.values() for v in c]
grand = sum(vals) / len(vals)
mean = {k: Fraction(sum(v), len(v)) for k, v in cells.items()}
r = 3
ma = {a: (mean[(a, "uni")] + mean[(a, "multi")]) / 2 for a in ("h", "m")}
mb = {b: (mean[("h", b)] + mean[("m", b)]) / 2 for b in ("uni", "multi")}
ss_a = sum(2 * r * (ma[a] - grand) ** 2 for a in ma)
ss_b = sum(2 * r * (mb[b] - grand) ** 2 for b in mb)
ss_ab = sum(r * (mean[(a, b)] - ma[a] - mb[b] + grand) ** 2 for a in ma for b in mb)
ss_e = sum((Fraction(v) - mean[k]) ** 2 for k, c in cells.items() for v in c)
ss_t = sum((v - grand) ** 2 for v in vals)
assert ss_a + ss_b + ss_ab + ss_e == ss_t
ms_e = ss_e / (len(vals) - 4)
rows = [(a, b, v) for (a, b), c in cells.items() for v in c]
df = pd.DataFrame(rows, columns=["subject", "modality", "y"])
table = sm.stats.anova_lm(smf.ols("y ~ C(subject) * C(modality)", data=df).fit(), typ=2)
hand = {
    "values": [float(v) for _, _, v in rows],
    "a": [s for s, _, _ in rows],
    "b": [m for _, m, _ in rows],
    "ss_a": float(ss_a), "ss_b": float(ss_b), "ss_ab": float(ss_ab), "ss_error": float(ss_e), "ss_total": float(ss_t),
    "f_a": float(ss_a / ms_e), "f_b": float(ss_b / ms_e), "f_ab": float(ss_ab / ms_e),
    "p_a": float(table.loc["C(subject)", "PR(>F)"]),
    "p_b": float(table.loc["C(modality)", "PR(>F)"]),
    "p_ab": float(table.loc["C(subject):C(modality)", "PR(>F)"]),
    "df_error": len(vals) - 4,
}
assert abs(hand["f_a"] - table.loc["C(subject)", "F"]) < 1e-9
out["anova_hand"] = hand

anovas = []
for n_cell in (4, 25, 100):
    a = np.repeat(["human", "machine"], 2 * n_cell)
    b = np.tile(np.repeat(["uni", "multi"], n_cell), 2)
    y = rng.normal(0, 1, 4 * n_cell) + 0.4 * (a == "human") - 0.3 * (b == "multi") + 0.2 * ((a == "human") & (b == "multi"))
    y = y.round(6)
    df = pd.DataFrame({"a": a, "b": b, "y": y})
    t = sm.stats.anova_lm(smf.ols("y ~ C(a) * C(b)", data=df).fit(), typ=2)
    anovas.append({
        "values": y.tolist(), "a": a.tolist(), "b": b.tolist(),
        "f_a": float(t.loc["C(a)", "F"]), "f_b": float(t.loc["C(b)", "F"]), "f_ab": float(t.loc["C(a):C(b)", "F"]),
        "p_a": float(t.loc["C(a)", "PR(>F)"]), "p_b": float(t.loc["C(b)", "PR(>F)"]),
        "p_ab": float(t.loc["C(a):C(b)", "PR(>F)"]), "df_error": 4 * n_cell - 4,
    })
out["anova_random"] = anovas

# ridge: single feature, no intercept, solved by hand
x = [1, 2, 3, 4]
y = [2, 3, 5, 7]
lam = Fraction(1, 2)
coef = Fraction(sum(a * b for a, b in zip(x, y))) / (sum(a * a for a in x) + lam)
out["ridge_single"] = {"x": x, "y": y, "lambda": float(lam), "coef": float(coef)}

# ridge on standardized features with intercept (population sd scaling)
X = rng.normal(0, 1, (40, 6)) * np.array([1, 2, 0.5, 3, 1, 10]) + np.array([0, 1, -2, 5, 0, 3])
beta = rng.normal(0, 1, 6)
yv = X @ beta + rng.normal(0, 0.3, 40)
Z = (X - X.mean(0)) / X.std(0)
m = Ridge(alpha=2.5, fit_intercept=True).fit(Z, yv)
out["ridge_multi"] = {"x": X.round(10).tolist(), "y": yv.round(10).tolist(), "lambda": 2.5}
Xr = np.array(out["ridge_multi"]["x"])
yr = np.array(out["ridge_multi"]["y"])
Zr = (Xr - Xr.mean(0)) / Xr.std(0)
m = Ridge(alpha=2.5, fit_intercept=True).fit(Zr, yr)
out["ridge_multi"]["coef"] = m.coef_.tolist()
out["ridge_multi"]["intercept"] = float(m.intercept_)

with open("tests/data/stats_reference.json", "w") as f:
    json.dump(out, f, indent=1)
print("ok")
