"""Assembly of sensor revolutions into point cloud frames

The sensor is y-forward, x-right and z-up. A frame is a full revolution,
the boundary being the block where the azimuth wraps around 360°. Frames
are then converted to Cartesian coordinates, restricted to a region of
interest and fitted to the capacity of the accelerator.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ..constants import MAX_POINTS, VLP16
from ..errors import FormatError, PacketError
from .packet import POLAR_DTYPE, decode_packet, encode_packet, parse_packet

__all__ = [
    "PolarFrame",
    "PointCloudFrame",
    "FrameAssembler",
    "assemble_frame",
    "to_cartesian",
    "RoiBox",
    "roi_filter",
    "Subsample",
    "Partition",
    "fit_to_capacity",
    "synthetic_revolution",
]

log = logging.getLogger(__name__)

HOUR = 3600 * 10**6
"""Rollover period of the packet timestamps, in microseconds"""


def to_cartesian(points):
    """Convert returns from spherical to Cartesian coordinates

    Args:
        points (numpy.ndarray): structured array of POLAR_DTYPE, or a single
            record of it
    Return:
        numpy.ndarray: (..., 3) x, y, z in meters

    >>> p = np.zeros((), dtype=POLAR_DTYPE)
    >>> p["r"] = 5
    >>> to_cartesian(p).tolist()
    [0.0, 5.0, 0.0]
    """
    r = np.asarray(points["r"], dtype=float)
    alpha = np.radians(points["azimuth"])
    omega = np.radians(points["elevation"])

    horizontal = r * np.cos(omega)
    return np.stack(
        [horizontal * np.sin(alpha), horizontal * np.cos(alpha), r * np.sin(omega)],
        axis=-1,
    )


class PointCloudFrame:
    """Cartesian point cloud

    Args:
        points (numpy.ndarray): n×3 coordinates in meters
        reflectivity (numpy.ndarray): n values, optional
        index (int): frame number
        timestamp (int): microseconds of the first firing
    """

    def __init__(self, points, reflectivity=None, index=0, timestamp=0):
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(points)):
            raise FormatError("Non finite coordinates")

        if reflectivity is not None:
            reflectivity = np.asarray(reflectivity, dtype=np.uint8)
            if len(reflectivity) != len(points):
                raise FormatError(
                    f"{len(reflectivity)} reflectivities for {len(points)} points"
                )

        self.points = points
        self.reflectivity = reflectivity
        self.index = index
        self.timestamp = timestamp

    def __len__(self):
        return len(self.points)

    def __repr__(self):  # pragma: no cover
        return f"<PointCloudFrame #{self.index} of {len(self)} points>"

    def select(self, idx):
        """Frame restricted to some points, in the given order"""
        refl = None if self.reflectivity is None else self.reflectivity[idx]
        return self.__class__(self.points[idx], refl, self.index, self.timestamp)


class PolarFrame:
    """Returns of a full revolution, in firing order

    Args:
        points (numpy.ndarray): structured array of POLAR_DTYPE, ``t_offset``
            counted from ``timestamp``
        index (int): frame number
        timestamp (int): microseconds of the first firing
    """

    def __init__(self, points, index=0, timestamp=0):
        self.points = points
        self.index = index
        self.timestamp = timestamp

    def __len__(self):
        return len(self.points)

    def __repr__(self):  # pragma: no cover
        return f"<PolarFrame #{self.index} of {len(self)} points>"

    def to_cartesian(self):
        """
        Return:
            PointCloudFrame
        """
        return PointCloudFrame(
            to_cartesian(self.points),
            self.points["reflectivity"],
            self.index,
            self.timestamp,
        )


class FrameAssembler:
    """Incremental assembly of packets into revolutions

    Packets older than the previous one are dropped, as well as packets
    failing to parse. A frame is emitted each time the azimuth of a block
    wraps around.

    Args:
        model (SensorModel):
    """

    def __init__(self, model=VLP16):
        self.model = model
        self.dropped_out_of_order = 0
        self.rejected = 0
        self._index = 0
        self._chunks = []
        self._start = None
        self._last_time = None
        self._last_azimuth = None
        self._hours = 0

    def _time(self, timestamp):
        """Unwrap the hourly rollover of the packet timestamps"""
        t = timestamp + self._hours * HOUR
        if self._last_time is not None and t < self._last_time - HOUR // 2:
            self._hours += 1
            t += HOUR
        return t

    def feed(self, payload):
        """Add a packet

        Args:
            payload (bytes):
        Return:
            list of PolarFrame: frames completed by this packet
        """

        try:
            packet = parse_packet(payload, self.model)
        except PacketError as e:
            self.rejected += 1
            log.warning(f"Packet rejected: {e}")
            return []

        t = self._time(packet.timestamp)
        if self._last_time is not None and t < self._last_time:
            self.dropped_out_of_order += 1
            log.warning(f"Out of order packet dropped (t={packet.timestamp})")
            return []
        self._last_time = t

        points = decode_packet(packet)
        # Firings never start in the last half firing of a block
        half = self.model.firing_duration / 2
        offset = points["t_offset"] + half
        block_of = (offset // self.model.block_duration).astype(int)
        points["t_offset"] += t

        azimuths = packet.block_azimuths
        frames = []
        first = 0
        for b, az in enumerate(azimuths):
            if self._last_azimuth is not None and az < self._last_azimuth:
                self._add(points[(block_of >= first) & (block_of < b)], t, first)
                frame = self.flush()
                if frame is not None:
                    frames.append(frame)
                first = b
            self._last_azimuth = az

        self._add(points[block_of >= first], t, first)
        return frames

    def _add(self, points, t, block):
        if self._start is None:
            self._start = t + block * self.model.block_duration
        if len(points):
            self._chunks.append(points)

    def flush(self):
        """Close the frame being assembled

        Return:
            PolarFrame: or None if no packet was received since the last frame
        """
        if self._start is None:
            return None

        if self._chunks:
            points = np.concatenate(self._chunks)
        else:
            points = np.zeros(0, dtype=POLAR_DTYPE)

        start = self._start
        points["t_offset"] -= start

        frame = PolarFrame(points, self._index, int(round(start)) % HOUR)
        log.debug(f"Frame #{frame.index}: {len(frame)} points")

        self._index += 1
        self._chunks = []
        self._start = None
        return frame


def assemble_frame(records, model=VLP16):
    """Frames of a stream of packets

    The frame in progress is emitted at the end of the stream.

    Args:
        records (iterable): (timestamp, payload) pairs
        model (SensorModel):
    Yield:
        PolarFrame
    """
    assembler = FrameAssembler(model)
    for _, payload in records:
        yield from assembler.feed(payload)

    last = assembler.flush()
    if last is not None:
        yield last


@dataclass(frozen=True)
class RoiBox:
    """Region of interest, bounds included

    The default is a 20 m × 60 m area in front of the vehicle.
    """

    x_min: float = -10.0
    x_max: float = 10.0
    y_min: float = 0.0
    y_max: float = 60.0

    def __post_init__(self):
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise FormatError(f"Empty region of interest {self}")

    @classmethod
    def parse(cls, text):
        """
        >>> RoiBox.parse("-5,5,0,30")
        RoiBox(x_min=-5.0, x_max=5.0, y_min=0.0, y_max=30.0)
        """
        try:
            values = [float(v) for v in text.split(",")]
        except ValueError as e:
            raise FormatError(f"Invalid region '{text}'") from e
        if len(values) != 4:
            raise FormatError(f"Invalid region '{text}', expected x0,x1,y0,y1")
        return cls(*values)

    def contains(self, points):
        """Boolean mask of the points inside the region, z being unbounded"""
        x, y = points[:, 0], points[:, 1]
        inside_x = (x >= self.x_min) & (x <= self.x_max)
        return inside_x & (y >= self.y_min) & (y <= self.y_max)


def roi_filter(frame, roi=None):
    """Keep the points of a frame lying in a region of interest

    Args:
        frame (PointCloudFrame):
        roi (RoiBox):
    Return:
        PointCloudFrame
    """
    if roi is None:
        roi = RoiBox()
    return frame.select(np.flatnonzero(roi.contains(frame.points)))


@dataclass(frozen=True)
class Subsample:
    """Uniform random selection without replacement"""

    seed: int = 0


@dataclass(frozen=True)
class Partition:
    """Consecutive chunks of the frame"""


def fit_to_capacity(frame, cap=MAX_POINTS, mode=None):
    """Split or reduce a frame to the capacity of the accelerator

    Args:
        frame (PointCloudFrame):
        cap (int): maximum number of points per frame
        mode (Subsample or Partition): subsampling with seed 0 by default
    Return:
        list of PointCloudFrame

    >>> frame = PointCloudFrame(np.zeros((10000, 3)))
    >>> [len(f) for f in fit_to_capacity(frame, mode=Partition())]
    [4096, 4096, 1808]
    """

    if cap < 1:
        raise FormatError(f"Capacity should be positive, got {cap}")

    if mode is None:
        mode = Subsample()

    n = len(frame)
    if n <= cap:
        return [frame]

    if isinstance(mode, Partition):
        return [frame.select(slice(i, i + cap)) for i in range(0, n, cap)]

    rng = np.random.default_rng(mode.seed)
    idx = np.sort(rng.choice(n, size=cap, replace=False))
    return [frame.select(idx)]


def synthetic_revolution(
    revolutions=1,
    start_timestamp=0,
    distances=None,
    rng=None,
    model=VLP16,
):
    """Packets of a sensor spinning at 10 Hz with a 0.2° resolution

    Each block covers two firing sequences, so the blocks are 0.4° apart.

    Args:
        revolutions (int):
        start_timestamp (int): microseconds
        distances (callable): ``distances(azimuths)`` giving blocks × channels
            ranges in meters, random between 1 and 100 m if omitted
        rng (numpy.random.Generator):
        model (SensorModel):
    Return:
        list: (timestamp, payload) records
    """

    if rng is None:
        rng = np.random.default_rng(0)

    blocks = int(round(360 / (2 * 0.2)))
    packets = blocks // model.blocks
    packet_duration = model.blocks * model.block_duration
    shape = (model.blocks, model.channels_per_block)

    records = []
    for p in range(revolutions * packets):
        block = (p % packets) * model.blocks + np.arange(model.blocks)
        azimuths = block * 0.4
        if distances is None:
            r = rng.uniform(1, 100, shape)
        else:
            r = distances(azimuths)
        t = int(round(start_timestamp + p * packet_duration))
        reflectivity = rng.integers(0, 256, shape, dtype=np.uint8)
        payload = encode_packet(r, azimuths, t % HOUR, reflectivity, model=model)
        records.append((t, payload))

    return records
