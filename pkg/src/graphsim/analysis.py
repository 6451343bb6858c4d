"""Stratified Pearson correlations between rater scores and the six measures."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .similarity import MEASURES


class InsufficientData(ValueError):
    pass


class UndefinedCorrelation(ValueError):
    pass


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson r with mean-subtracted (two-pass) sums."""
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 3:
        raise InsufficientData(f"need at least 3 points, got {len(x)}")
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    dx = [a - mx for a in x]
    dy = [b - my for b in y]
    sxx = math.fsum(a * a for a in dx)
    syy = math.fsum(b * b for b in dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelation("zero variance")
    sxy = math.fsum(a * b for a, b in zip(dx, dy))
    r = sxy / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


# -- table -------------------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    r: Optional[float]
    n: int
    status: str  # ok | zero_variance | insufficient_n


@dataclass
class CorrelationTable:
    strata: list[tuple[str, str]]
    measures: list[str]
    cells: dict[tuple[str, str, str], Cell] = field(default_factory=dict)

    def get(self, size: str, density: str, measure: str) -> Cell:
        return self.cells[(size, density, measure)]

    @property
    def sizes(self) -> list[str]:
        return list(dict.fromkeys(s for s, _ in self.strata))

    @property
    def densities(self) -> list[str]:
        return list(dict.fromkeys(d for _, d in self.strata))


def correlation_table(
    records: Iterable,
    strata: Optional[Sequence[tuple[str, str]]] = None,
    measures: Sequence[str] = MEASURES,
    extra: Optional[Mapping[str, Callable[[dict], float]]] = None,
) -> CorrelationTable:
    """Per-stratum r between rater score and each measure over rated records.

    ``extra`` adds derived columns computed from a record's score dict.
    """
    extra = dict(extra or {})
    columns = list(measures) + list(extra)
    groups: dict[tuple[str, str], list] = {}
    for r in records:
        if r.status != "rated" or r.stratum_size is None:
            continue
        groups.setdefault((r.stratum_size, r.stratum_density), []).append(r)
    if strata is None:
        strata = sorted(groups)
    table = CorrelationTable(list(strata), columns)
    for stratum in strata:
        # fixed order keeps cells independent of record order
        rows = sorted(groups.get(stratum, []), key=lambda r: r.pair_id)
        y = [r.rater_score for r in rows]
        for col in columns:
            fn = extra.get(col)
            x = [fn(r.scores) if fn else r.scores[col] for r in rows]
            try:
                cell = Cell(pearson(x, y), len(rows), "ok")
            except InsufficientData:
                cell = Cell(None, len(rows), "insufficient_n")
            except UndefinedCorrelation:
                cell = Cell(None, len(rows), "zero_variance")
            table.cells[(stratum[0], stratum[1], col)] = cell
    return table


CSV_HEADER = ["stratum_size", "stratum_density", "measure", "r", "n", "status"]


def table_to_csv(table: CorrelationTable) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for size, dens in table.strata:
        for m in table.measures:
            c = table.get(size, dens, m)
            w.writerow([size, dens, m, "" if c.r is None else repr(c.r), c.n, c.status])
    return buf.getvalue().encode("utf-8")


def table_from_csv(data: bytes) -> CorrelationTable:
    rows = list(csv.DictReader(io.StringIO(data.decode("utf-8"))))
    strata = list(dict.fromkeys((r["stratum_size"], r["stratum_density"]) for r in rows))
    measures = list(dict.fromkeys(r["measure"] for r in rows))
    table = CorrelationTable(strata, measures)
    for r in rows:
        table.cells[(r["stratum_size"], r["stratum_density"], r["measure"])] = Cell(
            float(r["r"]) if r["r"] else None, int(r["n"]), r["status"]
        )
    return table


# -- findings ------------------------------------------------------------------


def _sign(a: float, b: float, eps: float = 1e-12) -> str:
    if b > a + eps:
        return "+"
    if b < a - eps:
        return "-"
    return "0"


@dataclass
class MeasureFindings:
    measure: str
    min_r: Optional[float]
    all_above: bool
    complete: bool
    size_monotone: dict[str, Optional[bool]]
    density_signs: dict[str, str]


@dataclass
class Findings:
    threshold: float
    per_measure: list[MeasureFindings]
    top_stratum: tuple[str, str]
    top_ranking: list[tuple[str, float]]
    density_trend_consistent: dict[str, bool]

    def rank_of(self, measure: str) -> Optional[int]:
        for i, (m, _) in enumerate(self.top_ranking, 1):
            if m == measure:
                return i
        return None


def trend_report(table: CorrelationTable, threshold: float = 0.8) -> Findings:
    """Describe whether this run shows each of the four reported patterns.

    Nothing here asserts the patterns; missing cells are skipped and flagged
    through ``complete``.
    """
    per = []
    consistent = {}
    for m in table.measures:
        vals = [table.get(s, d, m).r for s, d in table.strata]
        defined = [v for v in vals if v is not None]
        monotone = {}
        for d in table.densities:
            col = [table.cells.get((s, d, m)) for s in table.sizes]
            rs = [c.r for c in col if c is not None and c.r is not None]
            monotone[d] = all(b <= a + 1e-12 for a, b in zip(rs, rs[1:])) if len(rs) >= 2 else None
        signs = {}
        for s in table.sizes:
            row = [table.cells.get((s, d, m)) for d in table.densities]
            rs = [c.r for c in row if c is not None and c.r is not None]
            signs[s] = "".join(_sign(a, b) for a, b in zip(rs, rs[1:]))
        # consistent = every size class moves the same single direction with density
        patterns = {p for p in signs.values() if p}
        only = next(iter(patterns)) if len(patterns) == 1 else ""
        consistent[m] = len(set(only)) == 1 and only[0] != "0"
        per.append(MeasureFindings(
            m,
            min(defined) if defined else None,
            bool(defined) and all(v >= threshold for v in defined),
            len(defined) == len(vals),
            monotone,
            signs,
        ))
    top = (table.sizes[-1], table.densities[-1])
    ranking = sorted(
        ((m, table.get(*top, m).r) for m in table.measures if table.get(*top, m).r is not None),
        key=lambda t: (-t[1], t[0]),
    )
    return Findings(threshold, per, top, ranking, consistent)


def _fmt(v: Optional[float]) -> str:
    return "n/a" if v is None else f"{v:.3f}"


def findings_markdown(f: Findings) -> str:
    lines = ["# Correlation findings", ""]
    lines.append(f"## 1. All strata at or above r = {f.threshold:g}")
    lines.append("")
    lines.append("| measure | min r | all >= threshold | complete |")
    lines.append("|---|---|---|---|")
    for m in f.per_measure:
        lines.append(f"| {m.measure} | {_fmt(m.min_r)} | {'yes' if m.all_above else 'no'} | {'yes' if m.complete else 'no'} |")
    lines += ["", "## 2. r non-increasing with size, per density class", ""]
    dens = list(f.per_measure[0].size_monotone) if f.per_measure else []
    lines.append("| measure | " + " | ".join(dens) + " |")
    lines.append("|---" * (len(dens) + 1) + "|")
    for m in f.per_measure:
        cells = ["n/a" if v is None else ("yes" if v else "no") for v in m.size_monotone.values()]
        lines.append(f"| {m.measure} | " + " | ".join(cells) + " |")
    lines += ["", "## 3. Direction of change across density classes, per size class", ""]
    sizes = list(f.per_measure[0].density_signs) if f.per_measure else []
    lines.append("| measure | " + " | ".join(sizes) + " | consistent |")
    lines.append("|---" * (len(sizes) + 2) + "|")
    for m in f.per_measure:
        lines.append(f"| {m.measure} | " + " | ".join(m.density_signs[s] or "-" for s in sizes)
                     + f" | {'yes' if f.density_trend_consistent[m.measure] else 'no'} |")
    lines += ["", f"## 4. Ranking in the largest, densest stratum ({f.top_stratum[0]}/{f.top_stratum[1]})", ""]
    for i, (m, r) in enumerate(f.top_ranking, 1):
        lines.append(f"{i}. {m}: {r:.3f}")
    lines.append("")
    lines.append(f"Cm rank: {f.rank_of('Cm') or 'n/a'}; Bc rank: {f.rank_of('Bc') or 'n/a'}")
    return "\n".join(lines) + "\n"


# -- heatmap -----------------------------------------------------------------


_NEG = (33, 102, 172)
_MID = (247, 247, 247)
_POS = (178, 24, 43)


def diverging_color(r: float) -> str:
    r = max(-1.0, min(1.0, r))
    end = _POS if r >= 0 else _NEG
    t = abs(r)
    rgb = tuple(round(a + (b - a) * t) for a, b in zip(_MID, end))
    return "#%02x%02x%02x" % rgb


def heatmap_svg(table: CorrelationTable, cell: int = 56) -> bytes:
    left, top = 96, 40
    width = left + cell * len(table.measures) + 16
    height = top + cell * len(table.strata) + 48
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        '<defs><pattern id="missing" width="8" height="8" patternUnits="userSpaceOnUse" '
        'patternTransform="rotate(45)"><rect width="8" height="8" fill="#ffffff"/>'
        '<line x1="0" y1="0" x2="0" y2="8" stroke="#999999" stroke-width="3"/></pattern></defs>',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    for j, m in enumerate(table.measures):
        x = left + j * cell + cell / 2
        out.append(f'<text x="{x:g}" y="{top - 10}" text-anchor="middle">{m}</text>')
    for i, (s, d) in enumerate(table.strata):
        y = top + i * cell
        out.append(f'<text x="{left - 8}" y="{y + cell / 2 + 4:g}" text-anchor="end">{s} {d}</text>')
        for j, m in enumerate(table.measures):
            c = table.get(s, d, m)
            x = left + j * cell
            if c.r is None:
                out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="url(#missing)" stroke="#ffffff"/>')
                out.append(f'<text x="{x + cell / 2:g}" y="{y + cell / 2 + 4:g}" text-anchor="middle" font-size="9">{c.status}</text>')
            else:
                fill = diverging_color(c.r)
                ink = "#ffffff" if abs(c.r) > 0.6 else "#000000"
                out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="#ffffff"/>')
                out.append(f'<text x="{x + cell / 2:g}" y="{y + cell / 2 + 4:g}" text-anchor="middle" fill="{ink}">{c.r:.2f}</text>')
    out.append(f'<text x="{left}" y="{height - 16}">Pearson r, diverging scale -1 (blue) to +1 (red)</text>')
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode("utf-8")


def emit_report(table: CorrelationTable, out_dir: Path, threshold: float = 0.8) -> dict[str, Path]:
    out_dir = Path(out_dir)
    files = {
        "correlations": out_dir / "correlations.csv",
        "heatmap": out_dir / "heatmap.svg",
        "findings": out_dir / "findings.md",
    }
    files["correlations"].write_bytes(table_to_csv(table))
    files["heatmap"].write_bytes(heatmap_svg(table))
    files["findings"].write_text(findings_markdown(trend_report(table, threshold)), encoding="utf-8")
    return files
