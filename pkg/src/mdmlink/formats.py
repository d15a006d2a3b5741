"""On-disk formats: transfer-matrix CSV and the binary waveform container.

Matrix CSV
----------
::

    # wavelength_nm = 1550
    mode,TE0,TE1,...
    TE0,-0.1,-32.5,...
    TE1,-28.0,-0.4,...

Optional leading ``#`` lines hold ``key = value`` metadata; ``wavelength_nm``
is required.  The first row and column carry mode labels; the entries are
intensity in dB (``units = dB``, the default) or linear power
(``units = linear``).  Row ``i`` is output mode ``i``.

Waveform binary (little endian)
-------------------------------
=======  ======  ===============================================
offset   type    content
=======  ======  ===============================================
0        8 B     magic ``b"MDMWAVE1"``
8        u32     format version (1)
12       f64     sample rate [Hz]
20       u32     channel count C
24       u64     sample count N
32       f64[]   N*C*2 values: for each sample, for each channel,
                 real then imaginary part
=======  ======  ===============================================
"""

import csv
import io
import struct
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, MatrixParseError
from .sigproc import Waveform

WAVE_MAGIC = b"MDMWAVE1"
WAVE_VERSION = 1
_WAVE_HEADER = struct.Struct("<8sIdIQ")


def _read_text(source):
    if isinstance(source, (str, Path)) and "\n" not in str(source):
        path = Path(source)
        try:
            return path.read_text(), path
        except OSError as exc:
            raise MatrixParseError(f"cannot read file: {exc}", path=path) from None
    return str(source), None


def read_matrix_csv(source):
    """Parse a matrix file (path or text) -> (labels, power_db, meta)."""
    text, path = _read_text(source)
    meta = {}
    rows = []
    line_no = []
    for n, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped.lstrip("#").strip()
            if "=" in body:
                k, v = body.split("=", 1)
                meta[k.strip()] = v.strip()
            continue
        rows.append(next(csv.reader([line])))
        line_no.append(n)
    if not rows:
        raise MatrixParseError("no matrix rows", path=path)
    if "wavelength_nm" not in meta:
        raise MatrixParseError("missing '# wavelength_nm = ...' header", row=1, path=path)
    try:
        meta["wavelength_nm"] = float(meta["wavelength_nm"])
    except ValueError:
        raise MatrixParseError("wavelength_nm is not a number", row=1, path=path) from None
    units = meta.get("units", "dB")
    if units not in ("dB", "linear"):
        raise MatrixParseError(f"unknown units {units!r}", path=path)
    header = [c.strip() for c in rows[0]]
    labels = header[1:]
    n = len(labels)
    if n == 0:
        raise MatrixParseError("header has no mode labels", row=line_no[0], path=path)
    if len(rows) - 1 != n:
        raise MatrixParseError(
            f"matrix is not square: {len(rows) - 1} rows for {n} columns",
            row=line_no[-1], path=path,
        )
    power = np.empty((n, n))
    for i, (row, ln) in enumerate(zip(rows[1:], line_no[1:])):
        if len(row) != n + 1:
            raise MatrixParseError(f"expected {n + 1} fields, got {len(row)}", row=ln, path=path)
        if row[0].strip() != labels[i]:
            raise MatrixParseError(
                f"row label {row[0].strip()!r} does not match column {labels[i]!r}",
                row=ln, column=1, path=path,
            )
        for j, cell in enumerate(row[1:]):
            try:
                v = float(cell)
            except ValueError:
                raise MatrixParseError(f"not a number: {cell!r}", row=ln, column=j + 2, path=path) from None
            if units == "linear":
                if v < 0:
                    raise MatrixParseError(f"negative power {v}", row=ln, column=j + 2, path=path)
                with np.errstate(divide="ignore"):
                    v = 10 * np.log10(v)
            elif np.isnan(v) or v == np.inf:
                raise MatrixParseError(f"invalid dB value {cell!r}", row=ln, column=j + 2, path=path)
            power[i, j] = v
    return labels, power, meta


def format_matrix_csv(labels, power_db, wavelength_nm):
    buf = io.StringIO()
    buf.write(f"# wavelength_nm = {wavelength_nm!r}\n")
    buf.write("# units = dB\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mode", *labels])
    for lab, row in zip(labels, np.asarray(power_db)):
        w.writerow([lab, *(repr(float(v)) for v in row)])
    return buf.getvalue()


def write_matrix_csv(path, labels, power_db, wavelength_nm):
    Path(path).write_text(format_matrix_csv(labels, power_db, wavelength_nm))


def write_waveforms(path, waveforms):
    """Store equal-length waveforms sharing one sample rate."""
    if not waveforms:
        raise InvalidArgumentError("nothing to write")
    rate, n = waveforms[0].sample_rate, len(waveforms[0])
    if any(w.sample_rate != rate or len(w) != n for w in waveforms):
        raise InvalidArgumentError("waveforms must share rate and length")
    data = np.stack([w.samples for w in waveforms], axis=1)  # (N, C)
    inter = np.empty((n, len(waveforms), 2), dtype="<f8")
    inter[..., 0] = data.real
    inter[..., 1] = data.imag
    with open(path, "wb") as fh:
        fh.write(_WAVE_HEADER.pack(WAVE_MAGIC, WAVE_VERSION, float(rate), len(waveforms), n))
        fh.write(inter.tobytes())


def read_waveforms(path):
    raw = Path(path).read_bytes()
    if len(raw) < _WAVE_HEADER.size:
        raise InvalidArgumentError("file too short for a waveform header")
    magic, version, rate, c, n = _WAVE_HEADER.unpack_from(raw)
    if magic != WAVE_MAGIC:
        raise InvalidArgumentError(f"bad magic {magic!r}")
    if version != WAVE_VERSION:
        raise InvalidArgumentError(f"unsupported waveform version {version}")
    body = np.frombuffer(raw, dtype="<f8", offset=_WAVE_HEADER.size)
    if body.size != n * c * 2:
        raise InvalidArgumentError(f"expected {n * c * 2} values, found {body.size}")
    body = body.reshape(n, c, 2)
    return [Waveform(body[:, k, 0] + 1j * body[:, k, 1], rate, f"ch{k}") for k in range(c)]
