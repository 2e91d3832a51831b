"""
PDF Export Utilities — benchmark report
- Auto-fit tables (averages, run times, ratios)
- Wrap long text
- Grouped bar chart of averages (matplotlib PNG)
"""

import io
import re

import numpy as np
import pandas as pd
from matplotlib.figure import Figure
from reportlab.lib import colors
from reportlab.lib.pagesizes import A4, landscape
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import (
    Image,
    PageBreak,
    Paragraph,
    Preformatted,
    SimpleDocTemplate,
    Spacer,
    Table,
    TableStyle,
)

from utils.analytics import averages_table, ratios_frame


# --------------------------
# SANITIZE TEXT
# --------------------------
def _sanitize(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.3f}"
    text = re.sub(r"[^\x00-\x7F]+", " ", str(value))
    return text.strip()


# --------------------------
# BUILD SAFE TABLE
# --------------------------
def _build_table(df, page_width):
    if df is None or df.empty:
        return None

    styles = getSampleStyleSheet()
    cell_style = ParagraphStyle("cell", parent=styles["Normal"], fontSize=7, leading=9)

    data = [[_sanitize(c) for c in df.columns]]
    for _, row in df.iterrows():
        data.append([Paragraph(_sanitize(cell), cell_style) for cell in row])

    col_width = page_width / len(df.columns)
    table = Table(data, colWidths=[col_width] * len(df.columns), repeatRows=1)
    table.setStyle(TableStyle([
        ("BACKGROUND", (0, 0), (-1, 0), colors.lightblue),
        ("GRID", (0, 0), (-1, -1), 0.3, colors.grey),
        ("FONTNAME", (0, 0), (-1, 0), "Helvetica-Bold"),
        ("FONTSIZE", (0, 0), (-1, 0), 8),
        ("VALIGN", (0, 0), (-1, -1), "TOP"),
        ("LEFTPADDING", (0, 0), (-1, -1), 4),
        ("RIGHTPADDING", (0, 0), (-1, -1), 4),
    ]))
    return table


# --------------------------
# PNG → IMAGE
# --------------------------
def _png_to_image(png_bytes, width=9, height=4):
    if png_bytes is None:
        return None
    return Image(io.BytesIO(png_bytes), width * inch, height * inch)


# --------------------------
# CHART
# --------------------------
def averages_chart(table: pd.DataFrame):
    """Grouped bars: one group per test case, one bar per variant. Returns PNG bytes."""
    if table is None or table.empty:
        return None
    fig = Figure(figsize=(10, 4.5))
    ax = fig.subplots()
    x = np.arange(len(table.columns))
    width = 0.8 / len(table.index)
    for i, variant in enumerate(table.index):
        ax.bar(x + i * width, table.loc[variant].fillna(0).to_numpy(), width, label=variant)
    ax.set_xticks(x + width * (len(table.index) - 1) / 2)
    ax.set_xticklabels(table.columns)
    ax.set_ylabel("average execution time (s)")
    ax.legend(fontsize=7)
    fig.tight_layout()

    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=120)
    return buf.getvalue()


# --------------------------
# BENCHMARK REPORT
# --------------------------
def generate_benchmark_pdf(buffer, results: pd.DataFrame, summary: str = "", title="Zero Trust Benchmark Report"):
    doc = SimpleDocTemplate(
        buffer,
        pagesize=landscape(A4),
        rightMargin=20,
        leftMargin=20,
        topMargin=20,
        bottomMargin=20,
    )
    styles = getSampleStyleSheet()
    elements = [Paragraph(title, styles["Title"]), Spacer(1, 12)]

    table = averages_table(results)
    if not table.empty:
        elements.append(Paragraph("Average execution time (s)", styles["Heading2"]))
        elements.append(_build_table(table.reset_index(), doc.width))
        img = _png_to_image(averages_chart(table))
        if img:
            elements.append(Spacer(1, 12))
            elements.append(img)
        elements.append(PageBreak())

        elements.append(Paragraph("Run times", styles["Heading2"]))
        elements.append(_build_table(results, doc.width))

    ratios = ratios_frame(results)
    if not ratios.empty:
        elements.append(Spacer(1, 12))
        elements.append(Paragraph("Derived ratios", styles["Heading2"]))
        elements.append(_build_table(ratios, doc.width))

    if summary:
        elements.append(Spacer(1, 12))
        elements.append(Preformatted(_sanitize(summary), styles["Code"]))

    doc.build(elements)
    buffer.seek(0)
