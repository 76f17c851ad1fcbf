"""STNS tensors: magic, version, dtype code, rank, u64 dims, row-major f32 LE payload."""

import struct
from array import array
from pathlib import Path

MAGIC = b"STNS"
VERSION = 1
DTYPE_F32 = 1


class StnsError(ValueError):
    pass


def encode(shape, values):
    """Bytes for an f32 tensor. `values` is a flat row-major sequence."""
    shape = tuple(int(d) for d in shape)
    n = 1
    for d in shape:
        n *= d
    data = array("f", values)
    if len(data) != n:
        raise StnsError(f"{len(data)} values for shape {shape}")
    if struct.pack("<f", 1.0) != array("f", [1.0]).tobytes():
        data.byteswap()
    head = MAGIC + struct.pack("<III", VERSION, DTYPE_F32, len(shape))
    head += b"".join(struct.pack("<Q", d) for d in shape)
    return head + data.tobytes()


def decode(buf):
    if len(buf) < 16 or buf[:4] != MAGIC:
        raise StnsError("not an STNS tensor")
    version, dtype, ndim = struct.unpack_from("<III", buf, 4)
    if version != VERSION or dtype != DTYPE_F32:
        raise StnsError(f"unsupported version {version} / dtype {dtype}")
    off = 16 + 8 * ndim
    if len(buf) < off:
        raise StnsError("truncated header")
    shape = struct.unpack_from(f"<{ndim}Q", buf, 16)
    n = 1
    for d in shape:
        n *= d
    if len(buf) != off + 4 * n:
        raise StnsError(f"payload is {len(buf) - off} bytes, expected {4 * n}")
    return tuple(shape), list(struct.unpack_from(f"<{n}f", buf, off))


def write_stns(path, shape, values):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(shape, values))


def read_stns(path):
    return decode(Path(path).read_bytes())
