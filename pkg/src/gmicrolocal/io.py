"""File formats: net CSV, JSON reports, symbol catalogs and the MLGF binary."""
from __future__ import annotations

import csv
import io as _io
import json
import math
import struct
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

MLGF_MAGIC = b"MLGF"
MLGF_VERSION = 1


def _num(v):
    """JSON-safe number: non-finite floats become strings."""
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    return _num(obj)


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj))


def fmt_float(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in r])
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# nets ------------------------------------------------------------------------

def net_to_csv(sample, path):
    write_csv(path, ["j", "value"], zip(sample.grid.js.tolist(), sample.values.tolist()))


def net_from_csv(path):
    from .nets import EpsilonGrid, NetSample
    rows = read_csv(path)
    js = [int(r["j"]) for r in rows]
    if js != list(range(js[0], js[-1] + 1)):
        raise ValueError("j column must be consecutive")
    return NetSample(EpsilonGrid(js[0], js[-1]), np.array([float(r["value"]) for r in rows]))


# symbols -----------------------------------------------------------------------

def write_symbol_catalog(path, symbols):
    write_json(path, [s.to_dict() for s in symbols])


def read_symbol_catalog(path):
    from .symbols import SymbolFamily
    return [SymbolFamily.from_dict(d) for d in json.loads(Path(path).read_text())]


def expansion_to_json(expansion) -> dict:
    return {"refined": expansion.refined,
            "terms": [dict(t.to_dict(), order=m) for m, t in expansion.terms]}


# grid functions ----------------------------------------------------------------

def mlgf_bytes(u) -> bytes:
    """MLGF: magic, u32 version, n, G, eps_count, then per eps G^n (re, im) f64 pairs."""
    data = np.asarray(u.data, dtype=np.complex128)
    J = data.shape[0]
    head = MLGF_MAGIC + struct.pack("<4I", MLGF_VERSION, u.spec.n, u.spec.G, J)
    body = np.ascontiguousarray(data).astype("<c16").tobytes()
    return head + body


def write_mlgf(path, u):
    Path(path).write_bytes(mlgf_bytes(u))


def read_mlgf(path, j_min: int = 1, label: str = ""):
    from .quantize import GridFunctionFamily, GridSpec
    from .nets import EpsilonGrid
    raw = Path(path).read_bytes()
    if raw[:4] != MLGF_MAGIC:
        raise ValueError("not an MLGF file")
    version, n, G, J = struct.unpack("<4I", raw[4:20])
    if version != MLGF_VERSION:
        raise ValueError(f"unsupported MLGF version {version}")
    arr = np.frombuffer(raw[20:], dtype="<c16")
    if arr.size != J * G ** n:
        raise ValueError("MLGF payload size mismatch")
    arr = arr.reshape((J,) + (G,) * n).astype(np.complex128)
    return GridFunctionFamily(GridSpec(n, G), EpsilonGrid(j_min, j_min + J - 1), arr, label)
