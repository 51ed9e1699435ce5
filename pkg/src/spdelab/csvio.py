"""CSV and manifest output with a byte-reproducible body.

Dialect: comma separated, '.' decimal point, scientific notation with 17
significant digits, LF line endings, first row after the header comment is
the column names.  The single leading '# ...' comment line carries the tool
version and timestamp and is excluded from byte-identity comparisons; every
line after it is a pure function of the data.
"""

from __future__ import annotations

import datetime as _dt
import json
import numbers
from pathlib import Path

from . import __version__


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, numbers.Integral):
        return str(int(v))
    if isinstance(v, numbers.Real):
        return f"{float(v):.16e}"
    if v is None:
        return ""
    return str(v)


def write_csv(path, columns, rows) -> Path:
    """rows: iterable of dicts or sequences; missing dict keys become blank."""
    path = Path(path)
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    with open(path, "w", newline="\n") as f:
        f.write(f"# spdelab {__version__} generated={stamp}\n")
        f.write(",".join(columns) + "\n")
        for row in rows:
            if isinstance(row, dict):
                vals = [format_value(row.get(c)) for c in columns]
            else:
                vals = [format_value(v) for v in row]
            f.write(",".join(vals) + "\n")
    return path


def csv_body(path) -> bytes:
    """File content minus the version/timestamp comment line."""
    data = Path(path).read_bytes()
    first_nl = data.index(b"\n")
    return data[first_nl + 1:]


def write_manifest(path, command, config_echo, seed_info, outputs, checks) -> Path:
    import numpy
    import scipy
    path = Path(path)
    doc = {
        "command": command,
        "config": config_echo,
        "versions": {"spdelab": __version__, "numpy": numpy.__version__,
                     "scipy": scipy.__version__},
        "seed": seed_info,
        "outputs": [str(Path(p).name) for p in outputs],
        "checks": checks,
        "generated": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    with open(path, "w", newline="\n") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    return path
