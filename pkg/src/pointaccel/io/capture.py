"""Packet captures

A ``.vlpcap`` file records the datagrams of a sensor as they were received::

    header   "VLPC"  version (u8)
    record   timestamp (u64, microseconds)  length (u16)  payload

All integers are little-endian. The records are read back bit-exact, and can
be replayed to a UDP port with :py:func:`pointaccel.velodyne.net.replay`.
"""

import logging
import struct

from ..errors import CaptureError

__all__ = ["read_capture", "iter_capture", "write_capture"]

log = logging.getLogger(__name__)

MAGIC = b"VLPC"
VERSION = 1

_HEADER = struct.Struct("<4sB")
_RECORD = struct.Struct("<QH")


def _check_header(fp):
    raw = fp.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise CaptureError("Truncated capture header")

    magic, version = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise CaptureError(f"Not a capture file (magic {magic!r})")
    if version != VERSION:
        raise CaptureError(f"Unsupported capture version {version}")


def iter_capture(fp):
    """Records of a capture opened in binary mode

    Args:
        fp: binary file descriptor
    Yield:
        tuple: (timestamp, payload)
    Raise:
        CaptureError: on a bad header or a truncated record
    """

    _check_header(fp)

    count = 0
    while True:
        raw = fp.read(_RECORD.size)
        if not raw:
            break
        if len(raw) != _RECORD.size:
            raise CaptureError(f"Truncated record #{count}")

        timestamp, length = _RECORD.unpack(raw)
        payload = fp.read(length)
        if len(payload) != length:
            raise CaptureError(f"Truncated payload of record #{count}")

        count += 1
        yield timestamp, payload

    log.debug(f"{count} records read")


def read_capture(path):
    """Read all the records of a capture file

    Args:
        path (str or Path):
    Return:
        list: (timestamp, payload) pairs
    """
    with open(path, "rb") as fp:
        return list(iter_capture(fp))


def write_capture(records, path):
    """Write records into a capture file

    Args:
        records (iterable): (timestamp, payload) pairs, timestamps in
            microseconds
        path (str or Path):
    Return:
        int: number of records written
    """

    count = 0
    with open(path, "wb") as fp:
        fp.write(_HEADER.pack(MAGIC, VERSION))
        for timestamp, payload in records:
            if len(payload) > 0xFFFF:
                raise CaptureError(f"Payload of {len(payload)} bytes is too long")
            fp.write(_RECORD.pack(timestamp, len(payload)))
            fp.write(payload)
            count += 1

    log.debug(f"{count} records written to {path}")
    return count
