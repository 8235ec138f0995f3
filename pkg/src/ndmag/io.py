"""Text file formats: spectra, dataset manifests, key-value records, grids.

All floats are written with ``repr`` so files round-trip exactly and repeated
runs produce byte-identical output.  See FORMATS.md for the full layout.
"""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetFormatError, InvalidParameterError
from .physics import OdmrSpectrum

MANIFEST_NAME = "manifest.csv"
SPECTRUM_COLUMNS = ("frequency_MHz", "contrast")
_META_KEYS = ("integration_time_s", "photons_per_point", "true_field_uT")


def fmt(value) -> str:
    """Canonical text form of a number (``repr`` for floats, ``inf``/``nan`` spelled out)."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def atomic_write_text(path, text: str):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_float(text, path, line, what):
    try:
        return float(text)
    except ValueError:
        raise DatasetFormatError(f"cannot parse {what} {text!r} as a number", path, line) from None


# spectra


def format_spectrum(spectrum: OdmrSpectrum) -> str:
    meta = {"integration_time_s": spectrum.integration_time}
    if spectrum.photons_per_point is not None:
        meta["photons_per_point"] = spectrum.photons_per_point
    if spectrum.true_field_uT is not None:
        meta["true_field_uT"] = spectrum.true_field_uT
    out = io.StringIO()
    out.write("# " + ";".join(f"{k}={fmt(v)}" for k, v in meta.items()) + "\n")
    out.write(",".join(SPECTRUM_COLUMNS) + "\n")
    for f, c in zip(spectrum.frequencies, spectrum.contrast):
        out.write(f"{fmt(f)},{fmt(c)}\n")
    return out.getvalue()


def write_spectrum(path, spectrum: OdmrSpectrum):
    atomic_write_text(path, format_spectrum(spectrum))


def parse_spectrum(text: str, path=None) -> OdmrSpectrum:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise DatasetFormatError("missing '# key=value;...' metadata header", path, 1)
    meta = {}
    body = lines[0][1:].strip()
    for item in filter(None, (s.strip() for s in body.split(";"))):
        key, sep, value = item.partition("=")
        if not sep:
            raise DatasetFormatError(f"metadata item {item!r} is not key=value", path, 1)
        key = key.strip()
        if key not in _META_KEYS:
            raise DatasetFormatError(f"unknown metadata key {key!r}", path, 1)
        meta[key] = _parse_float(value.strip(), path, 1, key)
    if len(lines) < 2 or lines[1].strip() != ",".join(SPECTRUM_COLUMNS):
        raise DatasetFormatError(f"expected column header {','.join(SPECTRUM_COLUMNS)!r}", path, 2)
    freqs, contrast = [], []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise DatasetFormatError(f"expected 2 columns, found {len(parts)}", path, lineno)
        freqs.append(_parse_float(parts[0], path, lineno, "frequency"))
        contrast.append(_parse_float(parts[1], path, lineno, "contrast"))
    try:
        return OdmrSpectrum(
            np.array(freqs),
            np.array(contrast),
            integration_time=meta.get("integration_time_s", 1.0),
            photons_per_point=meta.get("photons_per_point"),
            true_field_uT=meta.get("true_field_uT"),
        )
    except InvalidParameterError as exc:
        raise DatasetFormatError(str(exc), path) from exc


def read_spectrum(path) -> OdmrSpectrum:
    return parse_spectrum(Path(path).read_text(), path)


# datasets


@dataclass
class Dataset:
    """Spectra plus their manifest entries.

    ``positions`` holds ``(x_um, y_um)`` pairs for imaging datasets, else ``None``.
    Fields may be ``nan`` where the truth is unknown.
    """

    files: list
    spectra: list
    fields: np.ndarray
    positions: np.ndarray | None = None

    def __len__(self):
        return len(self.spectra)


def write_dataset(directory, spectra, fields=None, positions=None, prefix="spectrum") -> list:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n = len(spectra)
    if fields is None:
        fields = [s.true_field_uT if s.true_field_uT is not None else math.nan for s in spectra]
    if len(fields) != n:
        raise InvalidParameterError("one field value per spectrum is required")
    width = max(4, len(str(max(n - 1, 0))))
    files = [f"{prefix}_{i:0{width}d}.csv" for i in range(n)]
    for name, spectrum in zip(files, spectra):
        write_spectrum(directory / name, spectrum)
    header = ["file", "true_field_uT"]
    if positions is not None:
        header += ["x_um", "y_um"]
    rows = [",".join(header)]
    for i, name in enumerate(files):
        row = [name, fmt(float(fields[i]))]
        if positions is not None:
            row += [fmt(float(positions[i][0])), fmt(float(positions[i][1]))]
        rows.append(",".join(row))
    atomic_write_text(directory / MANIFEST_NAME, "\n".join(rows) + "\n")
    return files


def read_dataset(directory) -> Dataset:
    directory = Path(directory)
    manifest = directory / MANIFEST_NAME
    if not manifest.is_file():
        raise DatasetFormatError("dataset manifest not found", manifest)
    with manifest.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError("empty manifest", manifest, 1) from None
        header = [h.strip() for h in header]
        if header[:2] != ["file", "true_field_uT"]:
            raise DatasetFormatError("manifest header must start with file,true_field_uT", manifest, 1)
        has_pos = header[2:] == ["x_um", "y_um"]
        if len(header) > 2 and not has_pos:
            raise DatasetFormatError(f"unexpected manifest columns {header[2:]}", manifest, 1)
        files, spectra, fields, positions = [], [], [], []
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetFormatError(
                    f"expected {len(header)} columns, found {len(row)}", manifest, lineno
                )
            name = row[0].strip()
            if not name or "/" in name or "\\" in name or name.startswith("."):
                raise DatasetFormatError(f"bad spectrum file name {name!r}", manifest, lineno)
            path = directory / name
            if not path.is_file():
                raise DatasetFormatError(f"spectrum file {name!r} not found", manifest, lineno)
            files.append(name)
            fields.append(_parse_float(row[1], manifest, lineno, "true_field_uT"))
            if has_pos:
                positions.append(
                    (
                        _parse_float(row[2], manifest, lineno, "x_um"),
                        _parse_float(row[3], manifest, lineno, "y_um"),
                    )
                )
            spectra.append(read_spectrum(path))
    if not files:
        raise DatasetFormatError("manifest lists no spectra", manifest)
    return Dataset(files, spectra, np.array(fields), np.array(positions) if has_pos else None)


# flat records and tables


def format_record(values: dict) -> str:
    return "".join(f"{k}={fmt(v)}\n" for k, v in values.items())


def write_record(path, values: dict):
    atomic_write_text(path, format_record(values))


def read_record(path) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DatasetFormatError(f"line is not key=value: {line!r}", path, lineno)
        out[key.strip()] = value.strip()
    return out


def format_table(header, rows) -> str:
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(fmt(v) for v in row))
    return "\n".join(out) + "\n"


def write_table(path, header, rows):
    atomic_write_text(path, format_table(header, rows))


_BOOLS = {"true": 1.0, "false": 0.0}


def read_table(path, required=(), text=("file", "estimator")):
    """Read a CSV with a header row into a dict of float columns.

    ``true``/``false`` cells read as 1.0/0.0; columns named in ``text`` stay
    as lists of strings.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetFormatError("empty table", path, 1) from None
        missing = [c for c in required if c not in header]
        if missing:
            raise DatasetFormatError(f"missing columns {missing}", path, 1)
        cols = {h: [] for h in header}
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetFormatError(
                    f"expected {len(header)} columns, found {len(row)}", path, lineno
                )
            for h, v in zip(header, row):
                v = v.strip()
                if h in text:
                    cols[h].append(v)
                elif v in _BOOLS:
                    cols[h].append(_BOOLS[v])
                else:
                    cols[h].append(_parse_float(v, path, lineno, h))
    return {h: (v if h in text else np.array(v, dtype=float)) for h, v in cols.items()}


def format_grid(values: np.ndarray) -> str:
    """One text row per grid row (y index), comma-separated columns (x index)."""
    return "".join(",".join(fmt(v) for v in row) + "\n" for row in np.atleast_2d(values))


def read_grid(path) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        rows.append([_parse_float(v, path, lineno, "grid value") for v in line.split(",")])
    if len({len(r) for r in rows}) > 1:
        raise DatasetFormatError("grid rows have different lengths", path)
    return np.array(rows, dtype=float)
