"""Binary array file format and the named-array container built on it.

Array files ("MTARR"): 8-byte magic ``MTARR\\x00\\x01\\x00``, three
little-endian uint32 dims (H, W, C), row-major little-endian float32
payload, then a 4-byte CRC32 of the payload bytes.

Containers (used for checkpoints) are a UTF-8 JSON header line holding
metadata plus an ordered entry list (name, true shape), followed by one
MTARR block per entry with the array flattened to (1, 1, N).
"""

import json
import zlib

import numpy as np

MAGIC = b"MTARR\x00\x01\x00"
_HEADER_MAGIC = "MTCKPT1"


class ArrayIOError(IOError):
    """Base class for array-file load failures."""


class FormatVersionError(ArrayIOError):
    """Magic/version bytes do not match this writer."""


class TruncatedFileError(ArrayIOError):
    """File ended before the declared payload was read."""


class ChecksumError(ArrayIOError):
    """Stored CRC32 does not match the payload."""


def write_array(fp, arr: np.ndarray) -> None:
    """Write one (H,W,C) float32 block to an open binary file."""
    arr = np.ascontiguousarray(arr, dtype="<f4")
    if arr.ndim != 3:
        raise ValueError(f"MTARR blocks are 3-d (H,W,C); got ndim {arr.ndim}")
    fp.write(MAGIC)
    fp.write(np.array(arr.shape, dtype="<u4").tobytes())
    payload = arr.tobytes()
    fp.write(payload)
    fp.write(np.array([zlib.crc32(payload)], dtype="<u4").tobytes())


def read_array(fp) -> np.ndarray:
    """Read one MTARR block from an open binary file."""
    head = fp.read(8)
    if len(head) < 8:
        raise TruncatedFileError("file too short for magic")
    if head != MAGIC:
        raise FormatVersionError(f"bad magic/version bytes {head!r}")
    dims_raw = fp.read(12)
    if len(dims_raw) < 12:
        raise TruncatedFileError("file ended inside dims")
    h, w, c = np.frombuffer(dims_raw, dtype="<u4")
    nbytes = int(h) * int(w) * int(c) * 4
    payload = fp.read(nbytes)
    if len(payload) < nbytes:
        raise TruncatedFileError(
            f"payload truncated: expected {nbytes} bytes, got {len(payload)}")
    crc_raw = fp.read(4)
    if len(crc_raw) < 4:
        raise TruncatedFileError("file ended before checksum")
    stored = int(np.frombuffer(crc_raw, dtype="<u4")[0])
    if zlib.crc32(payload) != stored:
        raise ChecksumError("payload CRC32 mismatch")
    return np.frombuffer(payload, dtype="<f4").reshape(int(h), int(w), int(c)).copy()


def save_array_file(path, arr: np.ndarray) -> None:
    with open(path, "wb") as fp:
        write_array(fp, arr)


def load_array_file(path) -> np.ndarray:
    with open(path, "rb") as fp:
        return read_array(fp)


def save_container(path, arrays: dict, meta: dict) -> None:
    """Save named float32 arrays plus JSON-serializable metadata."""
    entries = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        entries.append({"name": name, "shape": list(arr.shape)})
    header = {"format": _HEADER_MAGIC, "meta": meta, "entries": entries}
    with open(path, "wb") as fp:
        fp.write(json.dumps(header).encode("utf-8") + b"\n")
        for name, arr in arrays.items():
            flat = np.ascontiguousarray(arr, dtype="<f4").reshape(1, 1, -1)
            write_array(fp, flat)


def load_container(path):
    """Load a container; returns (arrays dict, meta dict)."""
    with open(path, "rb") as fp:
        line = fp.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatVersionError(f"unreadable container header: {exc}")
        if header.get("format") != _HEADER_MAGIC:
            raise FormatVersionError(
                f"container format {header.get('format')!r} not supported")
        arrays = {}
        for entry in header["entries"]:
            block = read_array(fp)
            arrays[entry["name"]] = block.reshape(entry["shape"])
        return arrays, header["meta"]
