"""Deterministic file emission: atomic writes, CSV/JSON tables and run manifests."""

from __future__ import annotations

import hashlib
import json
import math
import os
import platform
import tempfile
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

FLOAT_FMT = ".17g"


def fmt_float(x: float) -> str:
    """17 significant digits, enough for an exact float64 round trip."""
    return format(float(x), FLOAT_FMT)


def _cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    if v is None:
        return ""
    return str(v)


def jsonable(obj: Any) -> Any:
    """Plain JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if hasattr(obj, "value") and isinstance(obj.value, str):
        return obj.value
    return obj


def json_text(obj: Any) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    lines = [",".join(header)]
    lines += [",".join(_cell(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def table_text(header: Sequence[str], rows: Iterable[Sequence[Any]], fmt: str) -> str:
    rows = list(rows)
    if fmt == "csv":
        return csv_text(header, rows)
    return json_text([dict(zip(header, row)) for row in rows])


def atomic_write(path: Path, text: str) -> str:
    """Write through a temp file in the same directory and rename; returns the sha256."""
    data = text.encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return hashlib.sha256(data).hexdigest()


def config_hash(config: dict) -> str:
    canonical = json.dumps(jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def versions() -> dict[str, str]:
    import mpmath
    import numba
    import scipy

    from . import __version__

    return {"autores": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "mpmath": mpmath.__version__}


class RunWriter:
    """Collects the files of one run and finishes with manifest.json."""

    def __init__(self, out_dir: Path, fmt: str, log=None):
        self.out_dir = Path(out_dir)
        self.fmt = fmt
        self.checksums: dict[str, str] = {}
        self._log = log

    def write(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        self.checksums[name] = atomic_write(path, text)
        if self._log:
            self._log(f"wrote {path}")
        return path

    def table(self, stem: str, header: Sequence[str], rows) -> Path:
        return self.write(f"{stem}.{self.fmt}", table_text(header, rows, self.fmt))

    def report(self, stem: str, payload: Any) -> Path:
        return self.write(f"{stem}.json", json_text(payload))

    def manifest(self, subcommand: str, config: dict, seed: int) -> Path:
        payload = {
            "subcommand": subcommand,
            "config": config,
            "config_hash": config_hash(config),
            "seed": seed,
            "versions": versions(),
            "outputs": dict(sorted(self.checksums.items())),
        }
        return self.write("manifest.json", json_text(payload))
