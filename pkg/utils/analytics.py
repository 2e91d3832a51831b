# utils/analytics.py
"""
Benchmark analytics
- Report list -> flat results table (CSV round-trip)
- Variant x test-case table of averages
- Derived ratios: sync/async (TC4/TC3), blockchain overhead (ZTA_BC/NO_BC),
  engine scaling (12 vs 3 engines, engine-count sweeps)
- Functional equivalence of variants and a plain-text summary
"""

import logging
import re

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ["variant", "test_case", "average"]
RATIO_COLUMNS = ["ratio", "test_case", "numerator", "denominator", "value"]

_SWEEP_LABEL = re.compile(r"^(?P<base>[A-Z_0-9]+?)\[(?P<engines>\d+)\]$")


# --------------------------
# RESULTS TABLE
# --------------------------
def reports_to_frame(reports):
    rows = [r.to_row() for r in reports]
    if not rows:
        return pd.DataFrame(columns=RESULT_COLUMNS)
    df = pd.DataFrame(rows)
    runs = sorted((c for c in df.columns if c.startswith("run")), key=lambda c: int(c[3:]))
    return df[["variant", "test_case"] + runs + ["average"]]


def save_results(df, path):
    df.to_csv(path, index=False)
    logger.info("wrote %d result rows to %s", len(df), path)


def load_results(path):
    return pd.read_csv(path)


def averages_table(df):
    """Variant rows x test-case columns of average seconds."""
    if df is None or df.empty:
        return pd.DataFrame()
    table = df.pivot_table(index="variant", columns="test_case", values="average", aggfunc="mean")
    return table.reindex(sorted(table.columns), axis=1)


def _average(table, variant, tc):
    if variant not in table.index or tc not in table.columns:
        return None
    value = table.at[variant, tc]
    return None if pd.isna(value) or value == 0 else float(value)


def _ratio(table, name, tc, num, den):
    a = _average(table, num[0], num[1])
    b = _average(table, den[0], den[1])
    if a is None or b is None:
        return None
    return {"ratio": name, "test_case": tc, "numerator": f"{num[0]} {num[1]}",
            "denominator": f"{den[0]} {den[1]}", "value": a / b}


# --------------------------
# RATIOS
# --------------------------
def sync_async_ratios(table):
    """TC4 (synchronous reads) over TC3 (asynchronous writes), per variant."""
    out = []
    for variant in table.index:
        r = _ratio(table, "sync_async", "TC4/TC3", (variant, "TC4"), (variant, "TC3"))
        if r:
            out.append(r)
    return out


def bc_overhead_ratios(table):
    out = []
    for with_bc, without in (("ZTA_BC", "NO_BC"), ("ZTA_BC_X4", "NO_BC_X4")):
        for tc in table.columns:
            r = _ratio(table, "bc_overhead", tc, (with_bc, tc), (without, tc))
            if r:
                out.append(r)
    return out


def engine_scaling_ratios(table, tc="TC4"):
    """12 vs 3 engines per variant family, plus every sweep point against its base."""
    out = []
    for x4, base in (("ZTA_BC_X4", "ZTA_BC"), ("NO_BC_X4", "NO_BC")):
        r = _ratio(table, "engine_scaling", tc, (x4, tc), (base, tc))
        if r:
            out.append(r)
    for variant in table.index:
        m = _SWEEP_LABEL.match(variant)
        if m:
            r = _ratio(table, "engine_scaling", tc, (variant, tc), (m["base"], tc))
            if r:
                out.append(r)
    return out


def ratios_frame(df):
    table = averages_table(df)
    if table.empty or len(table.index) * len(table.columns) < 2:
        return pd.DataFrame(columns=RATIO_COLUMNS)
    rows = sync_async_ratios(table) + bc_overhead_ratios(table) + engine_scaling_ratios(table)
    return pd.DataFrame(rows, columns=RATIO_COLUMNS)


def sweep_series(df, base="ZTA_BC", tc="TC4"):
    """Average per engine count for a base variant (3 engines unless swept)."""
    points = {}
    for _, row in df[df["test_case"] == tc].iterrows():
        m = _SWEEP_LABEL.match(row["variant"])
        if m and m["base"] == base:
            points[int(m["engines"])] = row["average"]
        elif row["variant"] == base:
            points.setdefault(3, row["average"])
        elif row["variant"] == f"{base}_X4":
            points.setdefault(12, row["average"])
    return pd.Series(points, dtype=float).sort_index()


def is_monotone(series):
    return bool(np.all(np.diff(series.to_numpy()) >= 0))


# --------------------------
# FUNCTIONAL EQUIVALENCE
# --------------------------
def functional_equivalence(reports):
    """Per test case: identical per-request outcomes and final data across variants."""
    by_tc = {}
    for report in reports:
        by_tc.setdefault(report.test_case.value, []).append(report)
    result = {}
    for tc, group in sorted(by_tc.items()):
        first = group[0]
        result[tc] = all(
            r.outcomes == first.outcomes and r.final_data == first.final_data for r in group[1:]
        )
        if not result[tc]:
            logger.warning("%s: variants disagree on outcomes or stored data", tc)
    return result


# --------------------------
# SUMMARY
# --------------------------
def summary_text(df):
    table = averages_table(df)
    if table.empty:
        return "No results."
    lines = ["Average execution time (s)", table.round(3).to_string(), ""]
    ratios = ratios_frame(df)
    if ratios.empty:
        return "\n".join(lines).rstrip()
    labels = {
        "sync_async": "Synchronous reads vs asynchronous writes",
        "bc_overhead": "Ledger overhead",
        "engine_scaling": "Engine scaling",
    }
    for name, group in ratios.groupby("ratio", sort=False):
        lines.append(f"{labels.get(name, name)}:")
        for _, r in group.iterrows():
            lines.append(f"  {r['numerator']} / {r['denominator']}: {r['value']:.2f}x")
    return "\n".join(lines)
