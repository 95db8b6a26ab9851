"""Artifact files: CSV with a provenance comment header, resolved-config snapshots."""

import csv
from pathlib import Path

import numpy as np

from . import __version__


def header_lines(subcommand, config, extra=None):
    lines = [f"# cddclock {__version__}", f"# subcommand={subcommand}",
             f"# config={config.digest()}", f"# seed={config.seed}"]
    for k, v in (extra or {}).items():
        lines.append(f"# {k}={v}")
    return lines


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows, subcommand, config, extra=None):
    """Write rows under a header; floats use repr so reruns are byte-identical."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            for line in header_lines(subcommand, config, extra):
                fh.write(line + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path):
    """Return (meta dict, column names, float array) of a file written by :func:`write_csv`."""
    meta = {}
    with Path(path).open() as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            if "=" in line:
                k, v = line[1:].split("=", 1)
                meta[k.strip()] = v.strip()
        else:
            body.append(line)
    if not body:
        raise ValueError(f"{path}: no column header")
    reader = csv.reader(body)
    cols = next(reader)
    data = np.array([[float(x) for x in r] for r in reader], dtype=float)
    return meta, cols, data.reshape(-1, len(cols))


def write_snapshot(outdir, subcommand, config):
    path = Path(outdir) / f"{subcommand}.config.json"
    path.write_text(config.to_json())
    return path
