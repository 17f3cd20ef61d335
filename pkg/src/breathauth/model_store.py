"""Binary model files (float32 and 8-bit flavors), their zip wrapper, and
the SVM file.

ModelFile layout, little-endian throughout::

    header   "BRNN" | u16 version | u8 flavor | u16 num_users | u16 input_dim
             | u16 hidden | u16 window_len                          (15 bytes)
    table    u8 count, then per tensor:
             u8 id | u8 rank | u32 dims[rank] | payload
             payload: flavor 0 -> f32 values row-major
                      flavor 1 -> f32 min | f32 max | u8 codes row-major
    trailer  u32 CRC32 of the table bytes

so a file is ``15 + 1 + sum(2 + 4*rank + payload) + 4`` bytes.
"""

from __future__ import annotations

import io
import json
import struct
import zipfile
import zlib
from pathlib import Path

import numpy as np

from .errors import ChecksumMismatch, IoFailure, MalformedHeader, ShapeMismatch, TruncatedData, VersionUnsupported
from .lstm import LstmModel
from .quantize import QuantizedModel, QuantizedTensor

MAGIC = b"BRNN"
VERSION = 1
FLAVOR_FLOAT = 0
FLAVOR_QUANT = 1

_HEADER = struct.Struct("<4sHBHHHH")
_ZIP_MEMBER = "model.brnn"
_ZIP_TIME = (1980, 1, 1, 0, 0, 0)


def _shapes(num_users, input_dim, hidden):
    return [(4 * hidden, input_dim + hidden), (4 * hidden,), (4 * hidden, 2 * hidden), (4 * hidden,),
            (num_users, hidden), (num_users,)]


def file_size(flavor: int, num_users: int, input_dim: int = 96, hidden: int = 128) -> int:
    """Exact byte size of a ModelFile for the given architecture."""
    total = _HEADER.size + 1 + 4
    for shape in _shapes(num_users, input_dim, hidden):
        n = int(np.prod(shape))
        payload = 4 * n if flavor == FLAVOR_FLOAT else 8 + n
        total += 2 + 4 * len(shape) + payload
    return total


def payload_bytes(flavor: int, num_users: int, input_dim: int = 96, hidden: int = 128) -> int:
    """Bytes spent on parameter values alone (codes/floats, plus min/max pairs)."""
    n_tensors = len(_shapes(num_users, input_dim, hidden))
    count = sum(int(np.prod(s)) for s in _shapes(num_users, input_dim, hidden))
    return 4 * count if flavor == FLAVOR_FLOAT else count + 8 * n_tensors


def dumps_model(model) -> bytes:
    """Serialize an :class:`LstmModel` (float32) or :class:`QuantizedModel`."""
    if isinstance(model, QuantizedModel):
        flavor = FLAVOR_QUANT
        arrays = [q.codes for q in model.tensors]
    elif isinstance(model, LstmModel):
        flavor = FLAVOR_FLOAT
        arrays = model.tensors()
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    header = _HEADER.pack(MAGIC, VERSION, flavor, model.num_users, model.input_dim, model.hidden, model.window_len)
    table = bytearray([len(arrays)])
    for tid, arr in enumerate(arrays):
        table += struct.pack(f"<BB{arr.ndim}I", tid, arr.ndim, *arr.shape)
        if flavor == FLAVOR_FLOAT:
            table += np.ascontiguousarray(arr, dtype="<f4").tobytes()
        else:
            q = model.tensors[tid]
            table += struct.pack("<ff", q.min, q.max)
            table += np.ascontiguousarray(q.codes, dtype=np.uint8).tobytes()
    return header + bytes(table) + struct.pack("<I", zlib.crc32(table))


def loads_model(blob: bytes):
    if blob[:2] == b"PK":
        return loads_model(_unzip(blob))
    if len(blob) < _HEADER.size:
        raise TruncatedData("model file shorter than its header")
    magic, version, flavor, num_users, input_dim, hidden, window_len = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise MalformedHeader(f"bad model magic {magic!r}")
    if version != VERSION:
        raise VersionUnsupported(f"model file version {version}, reader supports {VERSION}")
    if flavor not in (FLAVOR_FLOAT, FLAVOR_QUANT):
        raise MalformedHeader(f"unknown flavor {flavor}")

    view = memoryview(blob)
    pos = _HEADER.size

    def take(n):
        nonlocal pos
        if pos + n > len(blob):
            raise TruncatedData(f"model file ends at byte {len(blob)}, needed {pos + n}")
        out = view[pos : pos + n]
        pos += n
        return out

    table_start = pos
    count = take(1)[0]
    expected = _shapes(num_users, input_dim, hidden)
    if count != len(expected):
        raise MalformedHeader(f"expected {len(expected)} tensors, table lists {count}")
    parsed = [None] * count
    for _ in range(count):
        tid, rank = struct.unpack("<BB", take(2))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        if tid >= count or parsed[tid] is not None:
            raise MalformedHeader(f"bad or repeated tensor id {tid}")
        if tuple(dims) != expected[tid]:
            raise ShapeMismatch(f"tensor {tid} has shape {dims}, header implies {expected[tid]}")
        n = int(np.prod(dims))
        if flavor == FLAVOR_FLOAT:
            parsed[tid] = np.frombuffer(take(4 * n), dtype="<f4").reshape(dims)
        else:
            lo, hi = struct.unpack("<ff", take(8))
            codes = np.frombuffer(take(n), dtype=np.uint8).reshape(dims)
            parsed[tid] = QuantizedTensor(np.float32(lo), np.float32(hi), codes)
    table_end = pos
    (crc,) = struct.unpack("<I", take(4))
    if pos != len(blob):
        raise MalformedHeader(f"{len(blob) - pos} trailing bytes after checksum")
    if zlib.crc32(view[table_start:table_end]) != crc:
        raise ChecksumMismatch("payload CRC32 does not match")

    if flavor == FLAVOR_FLOAT:
        return LstmModel.from_tensors(parsed, window_len)
    return QuantizedModel(parsed, window_len)


def save_model(model, path) -> int:
    """Write ``model`` to ``path`` and return the byte count.

    A path ending in ``.zip`` gets a deflated zip holding one ModelFile.
    """
    blob = dumps_model(model)
    if str(path).endswith(".zip"):
        blob = _zip(blob)
    try:
        Path(path).write_bytes(blob)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return len(blob)


def load_model(path):
    """Read a float or quantized model (plain or zipped)."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return loads_model(blob)


def _zip(blob: bytes) -> bytes:
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        info = zipfile.ZipInfo(_ZIP_MEMBER, date_time=_ZIP_TIME)
        info.compress_type = zipfile.ZIP_DEFLATED
        info.external_attr = 0o644 << 16
        zf.writestr(info, blob, compresslevel=9)
    return buf.getvalue()


def _unzip(blob: bytes) -> bytes:
    try:
        with zipfile.ZipFile(io.BytesIO(blob)) as zf:
            names = zf.namelist()
            if len(names) != 1:
                raise MalformedHeader(f"model zip must hold exactly one file, found {len(names)}")
            return zf.read(names[0])
    except zipfile.BadZipFile as exc:
        raise MalformedHeader(f"bad zip container: {exc}") from exc


def zipped_size(model) -> int:
    return len(_zip(dumps_model(model)))


# --------------------------------------------------------------------------
# SVM file: "BSVM" | u16 version | u16 N | u16 W | u16 D | u16 pairs,
# then per pair (a<b, lexicographic): f32 w[W*D] | f32 b; trailing CRC32 of
# everything after the header.

SVM_MAGIC = b"BSVM"
_SVM_HEADER = struct.Struct("<4sHHHHH")


def dumps_svm(model) -> bytes:
    P = len(model.pairs)
    header = _SVM_HEADER.pack(SVM_MAGIC, VERSION, model.num_users, model.window_len, model.input_dim, P)
    body = bytearray()
    for k in range(P):
        body += np.ascontiguousarray(model.weights[k], dtype="<f4").tobytes()
        body += struct.pack("<f", model.bias[k])
    return header + bytes(body) + struct.pack("<I", zlib.crc32(body))


def loads_svm(blob: bytes):
    from .svm import LinearSvmModel, all_pairs

    if len(blob) < _SVM_HEADER.size:
        raise TruncatedData("SVM file shorter than its header")
    magic, version, N, W, D, P = _SVM_HEADER.unpack_from(blob)
    if magic != SVM_MAGIC:
        raise MalformedHeader(f"bad SVM magic {magic!r}")
    if version != VERSION:
        raise VersionUnsupported(f"SVM file version {version}")
    if P != N * (N - 1) // 2:
        raise MalformedHeader(f"{P} classifiers listed for {N} users")
    rec = 4 * (W * D + 1)
    need = _SVM_HEADER.size + P * rec + 4
    if len(blob) < need:
        raise TruncatedData(f"SVM file has {len(blob)} bytes, needs {need}")
    if len(blob) > need:
        raise MalformedHeader("trailing bytes after SVM checksum")
    body = blob[_SVM_HEADER.size : need - 4]
    (crc,) = struct.unpack_from("<I", blob, need - 4)
    if zlib.crc32(body) != crc:
        raise ChecksumMismatch("SVM payload CRC32 does not match")
    recs = np.frombuffer(body, dtype="<f4").reshape(P, W * D + 1).astype(np.float64)
    return LinearSvmModel(all_pairs(N), recs[:, :-1], recs[:, -1], N, W, D)


def save_svm(model, path) -> int:
    blob = dumps_svm(model)
    try:
        Path(path).write_bytes(blob)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return len(blob)


def load_svm(path):
    try:
        return loads_svm(Path(path).read_bytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def write_json(obj, path) -> None:
    """Canonical JSON (sorted keys, fixed indent) so reruns are byte-identical."""
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
