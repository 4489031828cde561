"""CSV and manifest I/O.

All data interchange is plain UTF-8 CSV with a leading ``#`` comment line
carrying tool version, command and seed. Floats are written with their
shortest round-trip representation and ``NA`` marks missing values, so a
rerun with identical inputs and seed produces byte-identical files. Readers
report malformed rows with their line numbers.
"""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from .charnorm import RawPanel
from .errors import InputFormatError

_DATE_RE = re.compile(r"^\d{4}-(0[1-9]|1[0-2])$")


def header_comment(command: str, seed: int) -> str:
    return f"# demandeq {__version__} command={command} seed={seed}"


def format_value(x) -> str:
    """Shortest round-trip float representation; NA for missing."""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not np.isfinite(x):
        return "NA"
    return repr(x)


def write_csv(path: Path, columns: list[str], rows, comment: str | None = None) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if comment:
            fh.write(comment + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def _parse_float(text: str, line_num: int, column: str) -> float:
    text = text.strip()
    if text in ("NA", ""):
        return float("nan")
    try:
        return float(text)
    except ValueError:
        raise InputFormatError(
            f"line {line_num}: column {column!r} has non-numeric value {text!r}"
        ) from None


def load_panel_csv(path: str | Path, char_names: list[str]) -> RawPanel:
    """Read a (date, firm_id, ret, characteristics...) CSV into a raw panel.

    Lines starting with ``#`` are comments. Dates must be YYYY-MM, ``NA``
    or an empty field marks a missing value, and a duplicated (date, firm)
    pair is an error. Diagnostics name the offending line.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    records: dict[tuple[str, str], tuple[float, list[float]]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        # one physical line per record (the schema has no embedded newlines),
        # so diagnostics can carry true file line numbers past comment lines
        numbered = [
            (i, line)
            for i, line in enumerate(fh, start=1)
            if line.strip() and not line.startswith("#")
        ]
    if not numbered:
        raise InputFormatError(f"{path}: empty file, header row required")
    header = next(csv.reader([numbered[0][1]]))
    required = ["date", "firm_id", "ret", *char_names]
    missing = [c for c in required if c not in header]
    if missing:
        raise InputFormatError(
            f"{path}: header is missing column(s) {missing}; found {header}"
        )
    pos = {c: header.index(c) for c in required}
    for line_num, line in numbered[1:]:
        row = next(csv.reader([line]))
        if len(row) != len(header):
            raise InputFormatError(
                f"line {line_num}: expected {len(header)} fields, got {len(row)}"
            )
        date = row[pos["date"]].strip()
        if not _DATE_RE.match(date):
            raise InputFormatError(
                f"line {line_num}: date {date!r} is not of the form YYYY-MM"
            )
        firm = row[pos["firm_id"]].strip()
        if not firm:
            raise InputFormatError(f"line {line_num}: empty firm_id")
        key = (date, firm)
        if key in records:
            raise InputFormatError(
                f"line {line_num}: duplicate (date, firm) pair {key}"
            )
        ret = _parse_float(row[pos["ret"]], line_num, "ret")
        chars = [_parse_float(row[pos[c]], line_num, c) for c in char_names]
        records[key] = (ret, chars)

    if not records:
        raise InputFormatError(f"{path}: no data rows")
    dates = sorted({d for d, _ in records})
    firms = sorted({f for _, f in records})
    d_idx = {d: i for i, d in enumerate(dates)}
    f_idx = {f: i for i, f in enumerate(firms)}
    raw = np.full((len(dates), len(firms), len(char_names)), np.nan)
    returns = np.full((len(dates), len(firms)), np.nan)
    for (date, firm), (ret, chars) in records.items():
        t, n = d_idx[date], f_idx[firm]
        returns[t, n] = ret
        raw[t, n, :] = chars
    return RawPanel(
        dates=dates, firms=firms, k_names=list(char_names), raw=raw, returns=returns
    )


def panel_rows(dates, firms, returns, values, extra=None):
    """Yield (date, firm, ret, values...) rows, skipping fully-missing pairs."""
    for t, date in enumerate(dates):
        for n, firm in enumerate(firms):
            cells = list(values[t, n])
            if extra is not None:
                cells += list(extra[t, n])
            if not (np.isfinite(returns[t, n]) or any(np.isfinite(c) for c in cells)):
                continue
            yield [date, firm, returns[t, n], *cells]


def load_manifest(path: str | Path) -> dict:
    """Parse a JSON or TOML manifest by file extension."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    try:
        if path.suffix.lower() == ".toml":
            with open(path, "rb") as fh:
                return tomli.load(fh)
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (tomli.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise InputFormatError(f"{path}: cannot parse manifest: {exc}") from None


def write_run_manifest(out_dir: Path, payload: dict) -> Path:
    """Echo the fully resolved run configuration next to the outputs."""
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "manifest.json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
