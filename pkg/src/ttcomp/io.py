"""File formats.

All binary formats are little-endian and store arrays first-index-fastest
(column-major).

Dense tensor (``.tdn``)::

    b"TTCD"  uint32 version=1  uint32 d  uint64 n_1 ... n_d
    float64 data[n_1 * ... * n_d]

Tensor train (``.ttt``)::

    b"TTCT"  uint32 version=1  uint32 d  uint64 n_1 ... n_d
    uint64 r_0 ... r_d              (r_0 = r_d = 1)
    float64 core_k[r_{k-1} * n_k * r_k] for k = 1..d

Side information (``.tsi``)::

    b"TTCQ"  uint32 version=1  uint32 d  (uint64 n_k, uint64 m_k) for k = 1..d
    float64 Q_k[n_k * m_k] for k = 1..d

Observations as CSV have a header ``i1,...,id,value`` and 1-based indices,
one row per sample (repetitions are separate rows). The JSON variant is
``{"shape": [...], "indices": [[...], ...], "values": [...]}`` with 1-based
indices.
"""

from __future__ import annotations

import csv
import json
import struct
from math import prod
from pathlib import Path

import numpy as np

from .sampling import Observations, SampleSet
from .tt import TensorTrain

__all__ = [
    "FormatError",
    "save_dense",
    "load_dense",
    "save_tt",
    "load_tt",
    "save_side_info",
    "load_side_info",
    "save_observations",
    "load_observations",
    "write_json",
    "read_json",
]

VERSION = 1
_F8 = np.dtype("<f8")


class FormatError(ValueError):
    """Malformed or truncated input file."""


def _header(magic: bytes, d: int) -> bytes:
    return magic + struct.pack("<II", VERSION, d)


def _read_header(buf: memoryview, magic: bytes):
    if len(buf) < 12 or bytes(buf[:4]) != magic:
        raise FormatError(f"bad magic; expected {magic!r}")
    version, d = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if d < 1:
        raise FormatError("order must be positive")
    return d, 12


def _read_u64(buf, pos, count):
    end = pos + 8 * count
    if len(buf) < end:
        raise FormatError("truncated header")
    return list(struct.unpack_from(f"<{count}Q", buf, pos)), end


def _read_f8(buf, pos, count):
    end = pos + 8 * count
    if len(buf) < end:
        raise FormatError("truncated data")
    return np.frombuffer(buf, dtype=_F8, count=count, offset=pos).astype(float), end


def _tobytes(a) -> bytes:
    return np.asarray(a, dtype=_F8).tobytes(order="F")


def save_dense(path, X) -> None:
    X = np.asarray(X, dtype=float)
    with open(path, "wb") as fh:
        fh.write(_header(b"TTCD", X.ndim))
        fh.write(struct.pack(f"<{X.ndim}Q", *X.shape))
        fh.write(_tobytes(X))


def load_dense(path) -> np.ndarray:
    buf = memoryview(Path(path).read_bytes())
    d, pos = _read_header(buf, b"TTCD")
    dims, pos = _read_u64(buf, pos, d)
    data, pos = _read_f8(buf, pos, prod(dims))
    if pos != len(buf):
        raise FormatError("trailing bytes")
    return data.reshape(dims, order="F")


def save_tt(path, X: TensorTrain) -> None:
    with open(path, "wb") as fh:
        fh.write(_header(b"TTCT", X.d))
        fh.write(struct.pack(f"<{X.d}Q", *X.shape))
        fh.write(struct.pack(f"<{X.d + 1}Q", *X.full_ranks))
        for G in X.cores:
            fh.write(_tobytes(G))


def load_tt(path) -> TensorTrain:
    buf = memoryview(Path(path).read_bytes())
    d, pos = _read_header(buf, b"TTCT")
    dims, pos = _read_u64(buf, pos, d)
    ranks, pos = _read_u64(buf, pos, d + 1)
    cores = []
    for k in range(d):
        shape = (ranks[k], dims[k], ranks[k + 1])
        data, pos = _read_f8(buf, pos, prod(shape))
        cores.append(data.reshape(shape, order="F"))
    if pos != len(buf):
        raise FormatError("trailing bytes")
    return TensorTrain(cores)


def save_side_info(path, factors) -> None:
    mats = [np.asarray(Q, dtype=float) for Q in getattr(factors, "factors", factors)]
    with open(path, "wb") as fh:
        fh.write(_header(b"TTCQ", len(mats)))
        for Q in mats:
            fh.write(struct.pack("<2Q", *Q.shape))
        for Q in mats:
            fh.write(_tobytes(Q))


def load_side_info(path):
    """Return the list of matrices; wrap in :class:`ttcomp.sideinfo.SideInfo` to validate."""
    buf = memoryview(Path(path).read_bytes())
    d, pos = _read_header(buf, b"TTCQ")
    dims, pos = _read_u64(buf, pos, 2 * d)
    mats = []
    for k in range(d):
        n, m = dims[2 * k], dims[2 * k + 1]
        data, pos = _read_f8(buf, pos, n * m)
        mats.append(data.reshape((n, m), order="F"))
    if pos != len(buf):
        raise FormatError("trailing bytes")
    return mats


def save_observations(path, obs: Observations) -> None:
    path = Path(path)
    idx1 = obs.sample.indices + 1
    if path.suffix == ".json":
        payload = {
            "shape": list(obs.sample.shape),
            "indices": idx1.tolist(),
            "values": [float(v) for v in obs.values],
        }
        write_json(path, payload)
        return
    d = len(obs.sample.shape)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"i{k}" for k in range(1, d + 1)] + ["value"])
        for row, v in zip(idx1.tolist(), obs.values):
            w.writerow(row + [repr(float(v))])


def load_observations(path, shape=None) -> Observations:
    """Read observations; CSV input needs ``shape`` unless it can be inferred.

    Without ``shape`` the CSV shape is taken as the componentwise maximum
    index, which is only correct if every mode attains its last index.
    """
    path = Path(path)
    if path.suffix == ".json":
        payload = read_json(path)
        try:
            shape = tuple(payload["shape"]) if shape is None else tuple(shape)
            idx = np.asarray(payload["indices"], dtype=np.intp).reshape(-1, len(shape))
            values = np.asarray(payload["values"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed observation JSON: {exc}") from exc
    else:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise FormatError("empty observation file")
        head = rows[0]
        d = len(head) - 1
        if d < 1 or head[-1] != "value" or head[:-1] != [f"i{k}" for k in range(1, d + 1)]:
            raise FormatError("header must be i1,...,id,value")
        try:
            data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
        except ValueError as exc:
            raise FormatError(f"non-numeric field: {exc}") from exc
        if data.size == 0:
            raise FormatError("no samples")
        idx_f = data[:, :d]
        if np.any(idx_f != np.round(idx_f)):
            raise FormatError("indices must be integers")
        idx = idx_f.astype(np.intp)
        values = data[:, d]
        shape = tuple(int(x) for x in idx.max(axis=0)) if shape is None else tuple(shape)
    return Observations(SampleSet(shape, idx - 1), values)


def write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
