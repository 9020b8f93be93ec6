"""Strong-scaling metrics from multi-run timing tables.

Input is a CSV with one row per core count and a wall-clock time per phase;
times may be plain seconds or `HHhMMminSSs` durations (spaces allowed), so
published tables can be used verbatim as fixtures.  Speedup and efficiency
follow

    sp(N) = t_b / t_N        eff(N) = 100 * t_b * N_b / (t_N * N)

with sp_ideal(N) = N; the base row has sp = 1 and eff = 100 exactly.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass

from .errors import MissingBase, ParseError

PHASES = ("convection", "diffusion", "linear_solver", "total")

_DURATION = re.compile(
    r"^\s*(?:(\d+)\s*h)?\s*(?:(\d+)\s*min)?\s*(?:(\d+(?:\.\d*)?)\s*s)?\s*$")


def parse_duration(text: str) -> float:
    """Seconds from '49 h 54 min 48 s', '5min14s', '314', or '314.5'."""
    try:
        return float(text)
    except ValueError:
        pass
    m = _DURATION.match(text)
    if not m or not any(m.groups()):
        raise ParseError(f"cannot parse duration '{text}'")
    h, mn, s = m.groups()
    return 3600.0 * int(h or 0) + 60.0 * int(mn or 0) + float(s or 0)


@dataclass
class ScalingRecord:
    cores: int
    times: dict  # phase -> seconds


@dataclass
class ScalingRow:
    cores: int
    sp_ideal: float
    speedup: dict      # phase -> t_b / t_N
    efficiency: dict   # phase -> percent


@dataclass
class ScalingReport:
    base_cores: int
    rows: list


def read_timings_csv(path) -> list:
    """Rows of cores plus per-phase times; header names the phases."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "cores" not in reader.fieldnames:
            raise ParseError("timings CSV needs a 'cores' column", path=path)
        phases = [c for c in reader.fieldnames if c != "cores"]
        unknown = set(phases) - set(PHASES)
        if unknown:
            raise ParseError(f"unknown phase column(s) {sorted(unknown)}",
                             path=path)
        for i, row in enumerate(reader, start=2):
            try:
                cores = int(row["cores"])
            except (TypeError, ValueError):
                raise ParseError(f"bad cores value '{row['cores']}'",
                                 path=path, line=i) from None
            times = {}
            for ph in phases:
                t = parse_duration(row[ph])
                if t <= 0:
                    raise ParseError(f"{ph} time must be > 0, got {t}",
                                     path=path, line=i)
                times[ph] = t
            records.append(ScalingRecord(cores=cores, times=times))
    seen = [r.cores for r in records]
    if len(set(seen)) != len(seen):
        raise ParseError("duplicate core counts in table", path=path)
    return records


def compute_scaling(records: list, base_cores: int = 1) -> ScalingReport:
    base = next((r for r in records if r.cores == base_cores), None)
    if base is None:
        raise MissingBase(f"no row with cores = {base_cores}")
    rows = []
    for rec in sorted(records, key=lambda r: r.cores):
        sp = {ph: base.times[ph] / rec.times[ph] for ph in rec.times}
        eff = {ph: 100.0 * base.times[ph] * base_cores
               / (rec.times[ph] * rec.cores) for ph in rec.times}
        rows.append(ScalingRow(cores=rec.cores,
                               sp_ideal=rec.cores / base_cores,
                               speedup=sp, efficiency=eff))
    return ScalingReport(base_cores=base_cores, rows=rows)


def write_scaling_csv(report: ScalingReport, path) -> None:
    phases = [ph for ph in PHASES if ph in report.rows[0].speedup] \
        if report.rows else list(PHASES)
    header = ["cores", "sp_ideal"]
    for ph in phases:
        header += [f"{ph}_speedup", f"{ph}_efficiency"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in report.rows:
            out = [row.cores, "%.17g" % row.sp_ideal]
            for ph in phases:
                out += ["%.17g" % row.speedup[ph],
                        "%.17g" % row.efficiency[ph]]
            w.writerow(out)
