"""File adapter: curve CSV, JSON arrays, OBJ polylines and run manifests.

Curve CSV layout::

    # domain=circle,0.0,6.283185307179586     (optional; interval otherwise)
    t,x1,x2,x3
    0.0,1.0,0.0,0.0
    ...

Floats are written with repr so a read/write cycle is lossless.
"""

import csv
import json
import logging
from pathlib import Path

import numpy as np

from prescurv.core.curves import Domain, ParamCurve
from prescurv.core.errors import CurveParseError, DegenerateCurve, UnsupportedFormat

logger = logging.getLogger(__name__)

DOMAIN_PREFIX = "# domain="

EXPORT_FORMATS = ("obj", "json", "csv")


def _fmt(value) -> str:
    return repr(float(value))


def write_curve_csv(path, curve: ParamCurve) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        if curve.domain.periodic:
            d = curve.domain
            handle.write(f"{DOMAIN_PREFIX}circle,{_fmt(d.a)},{_fmt(d.b)}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["t"] + [f"x{i + 1}" for i in range(curve.ambient_dim)])
        for t, point in zip(curve.params, curve.samples):
            writer.writerow([_fmt(t)] + [_fmt(v) for v in point])
    logger.debug("[export] wrote %d samples to %s", curve.count, path)
    return path


def _check_uniform(t: np.ndarray, first_line: int) -> None:
    steps = np.diff(t)
    if np.any(steps <= 0):
        bad = int(np.argmax(steps <= 0)) + 1
        raise CurveParseError("parameters must increase", first_line + bad)
    spread = np.max(np.abs(steps - steps.mean()))
    if spread > 1e-9 * max(abs(t[-1] - t[0]), 1.0):
        bad = int(np.argmax(np.abs(steps - steps.mean()))) + 1
        raise CurveParseError("parameters are not uniformly spaced", first_line + bad)


def read_curve_csv(path) -> ParamCurve:
    """Curve from a `t,x1,...,xn` CSV; errors carry the offending line number."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise CurveParseError(f"cannot read {path}: {exc}") from exc

    kind, bounds = "interval", None
    start = 0
    if lines and lines[0].startswith(DOMAIN_PREFIX):
        parts = lines[0][len(DOMAIN_PREFIX):].split(",")
        try:
            kind, bounds = parts[0].strip(), (float(parts[1]), float(parts[2]))
        except (IndexError, ValueError):
            raise CurveParseError("malformed domain line", 1) from None
        start = 1
    if len(lines) <= start:
        raise CurveParseError("missing header", start + 1)
    header = next(csv.reader([lines[start]]))
    if not header or header[0].strip() != "t" or len(header) < 4:
        raise CurveParseError("header must be t,x1,...,xn with n >= 3", start + 1)
    width = len(header)

    rows = []
    for number, row in enumerate(csv.reader(lines[start + 1:]), start=start + 2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != width:
            raise CurveParseError(f"expected {width} fields, got {len(row)}", number)
        try:
            rows.append([float(cell) for cell in row])
        except ValueError:
            raise CurveParseError(f"non-numeric field in {row}", number) from None
    if len(rows) < 4:
        raise CurveParseError(f"need at least 4 samples, got {len(rows)}", len(lines))

    data = np.array(rows)
    t = data[:, 0]
    _check_uniform(t, start + 2)
    if kind == "circle":
        a, b = bounds
        domain = Domain("circle", a, b)
        if not np.allclose(t, domain.grid(len(t)), rtol=0, atol=1e-9 * domain.length):
            raise CurveParseError("parameters do not match the circle grid", start + 2)
    else:
        domain = Domain("interval", float(t[0]), float(t[-1]))
    try:
        return ParamCurve(domain, data[:, 1:])
    except DegenerateCurve as exc:
        raise CurveParseError(str(exc)) from exc


def curve_to_json(curve: ParamCurve) -> dict:
    return {
        "domain": curve.domain.to_dict(),
        "t": [float(v) for v in curve.params],
        "points": [[float(v) for v in row] for row in curve.samples],
    }


def curve_from_json(data: dict) -> ParamCurve:
    try:
        return ParamCurve(Domain.from_dict(data["domain"]), np.array(data["points"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise CurveParseError(f"malformed curve JSON: {exc}") from exc


def write_curve_json(path, curve: ParamCurve) -> Path:
    path = Path(path)
    path.write_text(json.dumps(curve_to_json(curve)))
    return path


def read_curve_json(path) -> ParamCurve:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CurveParseError(f"cannot read {path}: {exc}") from exc
    return curve_from_json(data)


def write_obj(path, curve: ParamCurve) -> Path:
    """Polyline OBJ: one `v` per sample and one `l` element; closed curves repeat index 1."""
    if curve.ambient_dim != 3:
        raise UnsupportedFormat(f"OBJ needs 3-D points, curve is in R^{curve.ambient_dim}")
    path = Path(path)
    indices = list(range(1, curve.count + 1))
    if curve.domain.periodic:
        indices.append(1)
    with path.open("w") as handle:
        handle.write(f"# prescurv polyline, {curve.count} vertices\n")
        for point in curve.samples:
            handle.write("v " + " ".join(_fmt(v) for v in point) + "\n")
        handle.write("l " + " ".join(str(i) for i in indices) + "\n")
    return path


def export_curve(curve: ParamCurve, path, fmt: str) -> Path:
    if fmt == "obj":
        return write_obj(path, curve)
    if fmt == "json":
        return write_curve_json(path, curve)
    if fmt == "csv":
        return write_curve_csv(path, curve)
    raise UnsupportedFormat(f"Unknown export format {fmt!r}; choose from {', '.join(EXPORT_FORMATS)}")


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (set, tuple)):
        return list(value)
    return repr(value)


def write_manifest(path, manifest: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default))
    return path
