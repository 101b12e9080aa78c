"""Point clouds and labels as CSV files

A point file has a ``x,y,z`` or ``x,y,z,reflectivity`` header, followed by
one point per line, coordinates in meters in decimal notation.
"""

import logging

import numpy as np

from ..errors import FormatError, ParseError
from ..velodyne.frames import PointCloudFrame

__all__ = ["read_points", "write_points", "write_labels", "format_points"]

log = logging.getLogger(__name__)

HEADER = "x,y,z"
HEADER_REFL = "x,y,z,reflectivity"


def format_points(frame):
    """CSV text of a point cloud

    >>> print(format_points(PointCloudFrame([[1, 2.5, -0.25]], [12])), end="")
    x,y,z,reflectivity
    1.000000,2.500000,-0.250000,12
    """

    lines = [HEADER if frame.reflectivity is None else HEADER_REFL]
    for i, (x, y, z) in enumerate(frame.points):
        line = f"{x:.6f},{y:.6f},{z:.6f}"
        if frame.reflectivity is not None:
            line += f",{frame.reflectivity[i]:d}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def write_points(frame, path):
    """Write a point cloud to a CSV file

    Args:
        frame (PointCloudFrame):
        path (str or Path):
    """
    with open(path, "w", encoding="ascii", newline="\n") as fp:
        fp.write(format_points(frame))
    log.debug(f"{len(frame)} points written to {path}")


def read_points(path):
    """Read a point cloud from a CSV file

    Args:
        path (str or Path):
    Return:
        PointCloudFrame
    Raise:
        ParseError: on a missing header or a malformed line
        OSError: if the file cannot be read
    """

    with open(path, encoding="ascii") as fp:
        header = fp.readline().strip()
        if header not in (HEADER, HEADER_REFL):
            raise ParseError(f"{path}: unexpected header '{header}'")
        cols = header.count(",") + 1
        lines = [line for line in fp if line.strip()]

    if not lines:
        data = np.zeros((0, cols))
    else:
        try:
            data = np.loadtxt(lines, delimiter=",", dtype=float, ndmin=2)
        except ValueError as e:
            raise ParseError(f"{path}: {e}") from e

    if data.shape[1] != cols:
        raise ParseError(f"{path}: {data.shape[1]} columns, expected {cols}")

    refl = None
    if cols == 4:
        values = data[:, 3]
        if np.any((values < 0) | (values > 255) | (values != np.round(values))):
            raise ParseError(f"{path}: reflectivity out of [0, 255]")
        refl = values.astype(np.uint8)

    try:
        return PointCloudFrame(data[:, :3], refl)
    except FormatError as e:
        raise ParseError(f"{path}: {e}") from e


def write_labels(labels, path):
    """Write per-point labels, one per line under a ``label`` header"""
    labels = np.asarray(labels, dtype=int)
    with open(path, "w", encoding="ascii", newline="\n") as fp:
        fp.write("label\n")
        fp.writelines(f"{label:d}\n" for label in labels)
