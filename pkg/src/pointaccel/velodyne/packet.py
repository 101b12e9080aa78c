"""Velodyne data packets

A data packet carries 12 blocks of 32 returns (two firing sequences of the
16 lasers), a microsecond timestamp and two factory bytes::

    block     flag (2)  azimuth (2)  32 × [distance (2)  reflectivity (1)]
    trailer   timestamp (4)  return mode (1)  product id (1)

All fields are little-endian. Azimuths are in hundredths of degree, and
distances in 2 mm units. A null distance is a firing without return.

>>> import numpy as np
>>> distances = np.zeros((12, 32))
>>> distances[0, 0] = 5.0
>>> payload = encode_packet(distances, np.arange(12) * 0.4, timestamp=1000)
>>> len(payload)
1206
>>> points = decode_packet(payload)
>>> len(points), float(points[0]["r"]), float(points[0]["elevation"])
(1, 5.0, -15.0)
"""

import logging

import numpy as np

from ..constants import VLP16
from ..errors import PacketError
from ..fixq import round_half_away

__all__ = [
    "POLAR_DTYPE",
    "VelodynePacket",
    "parse_packet",
    "encode_packet",
    "decode_packet",
    "interpolate_azimuth",
]

log = logging.getLogger(__name__)


def packet_dtype(model=VLP16):
    """Wire layout of a data packet, as a numpy structured type"""
    channel = np.dtype([("distance", "<u2"), ("reflectivity", "u1")])
    block = np.dtype(
        [
            ("flag", "<u2"),
            ("azimuth", "<u2"),
            ("channels", channel, (model.channels_per_block,)),
        ]
    )
    dtype = np.dtype(
        [
            ("blocks", block, (model.blocks,)),
            ("timestamp", "<u4"),
            ("return_mode", "u1"),
            ("product_id", "u1"),
        ]
    )
    if dtype.itemsize != model.payload_size:
        raise PacketError(
            f"{model!r} describes {dtype.itemsize} bytes packets, "
            f"not {model.payload_size}"
        )
    return dtype


POLAR_DTYPE = np.dtype(
    [
        ("r", "f8"),
        ("azimuth", "f8"),
        ("elevation", "f8"),
        ("reflectivity", "u1"),
        ("t_offset", "f8"),
    ]
)
"""Return in spherical coordinates

``r`` in meters, ``azimuth`` and ``elevation`` in degrees, ``t_offset`` in
microseconds from the start of the packet (or of the frame once assembled).
"""


class VelodynePacket:
    """Decoded fields of a data packet

    Attributes:
        azimuths (numpy.ndarray): raw block azimuths, in hundredths of degree
        distances (numpy.ndarray): blocks × channels raw distances
        reflectivity (numpy.ndarray): blocks × channels
        timestamp (int): microseconds past the hour
        return_mode (int):
        product_id (int):
    """

    def __init__(
        self,
        azimuths,
        distances,
        reflectivity,
        timestamp,
        return_mode=VLP16.return_strongest,
        product_id=VLP16.product_id,
        model=VLP16,
    ):
        self.azimuths = np.asarray(azimuths, dtype=np.uint16)
        self.distances = np.asarray(distances, dtype=np.uint16)
        self.reflectivity = np.asarray(reflectivity, dtype=np.uint8)
        self.timestamp = int(timestamp)
        self.return_mode = return_mode
        self.product_id = product_id
        self.model = model

    def __repr__(self):  # pragma: no cover
        return f"<VelodynePacket t={self.timestamp} az={self.azimuths[0] / 100:.2f}>"

    @property
    def block_azimuths(self):
        """Block azimuths in degrees"""
        return self.azimuths * self.model.azimuth_scale

    def encode(self):
        """Wire representation of the packet

        Return:
            bytes
        """
        model = self.model
        rec = np.zeros((), dtype=packet_dtype(model))
        blocks = rec["blocks"]
        blocks["flag"] = int.from_bytes(model.block_flag, "little")
        blocks["azimuth"] = self.azimuths
        blocks["channels"]["distance"] = self.distances
        blocks["channels"]["reflectivity"] = self.reflectivity
        rec["timestamp"] = self.timestamp
        rec["return_mode"] = self.return_mode
        rec["product_id"] = self.product_id
        return rec.tobytes()


def parse_packet(payload, model=VLP16):
    """Parse the fields of a data packet

    Args:
        payload (bytes): UDP payload
        model (SensorModel):
    Return:
        VelodynePacket
    Raise:
        PacketError: on a wrong length, a corrupted block or an unsupported
            return mode
    """

    if len(payload) != model.payload_size:
        raise PacketError(
            f"Payload of {len(payload)} bytes, expected {model.payload_size}"
        )

    rec = np.frombuffer(payload, dtype=packet_dtype(model))[0]
    blocks = rec["blocks"]

    flag = int.from_bytes(model.block_flag, "little")
    bad = np.flatnonzero(blocks["flag"] != flag)
    if bad.size:
        raise PacketError(f"Invalid flag in block {bad[0]}")

    if np.any(blocks["azimuth"] >= 36000):
        raise PacketError(f"Azimuth out of range {blocks['azimuth'].max()}")

    mode = int(rec["return_mode"])
    if mode == model.return_dual:
        raise PacketError("Dual return mode is not supported")
    if mode not in (model.return_strongest, model.return_last):
        raise PacketError(f"Unknown return mode 0x{mode:02x}")

    product = int(rec["product_id"])
    if product != model.product_id:
        raise PacketError(f"Unexpected product id 0x{product:02x} for {model.name}")

    return VelodynePacket(
        blocks["azimuth"].copy(),
        blocks["channels"]["distance"].copy(),
        blocks["channels"]["reflectivity"].copy(),
        int(rec["timestamp"]),
        mode,
        product,
        model,
    )


def encode_packet(
    distances,
    azimuths,
    timestamp,
    reflectivity=None,
    return_mode=VLP16.return_strongest,
    model=VLP16,
):
    """Build a data packet

    Args:
        distances (numpy.ndarray): blocks × channels ranges in meters, 0 for
            no return
        azimuths (numpy.ndarray): block azimuths in degrees
        timestamp (int): microseconds past the hour
        reflectivity (numpy.ndarray): blocks × channels, zeros if omitted
        return_mode (int):
        model (SensorModel):
    Return:
        bytes

    >>> encode_packet(np.zeros((12, 32)), [359.99] * 12, 0)[2:4].hex()
    '9f8c'
    """

    distances = np.asarray(distances, dtype=float)
    shape = (model.blocks, model.channels_per_block)
    if distances.shape != shape:
        raise PacketError(f"Distances of shape {distances.shape}, expected {shape}")

    if reflectivity is None:
        reflectivity = np.zeros(shape, dtype=np.uint8)

    raw_az = round_half_away(np.asarray(azimuths, dtype=float) / model.azimuth_scale)
    raw_dist = round_half_away(distances / model.distance_scale)

    if np.any(raw_az < 0) or np.any(raw_az >= 36000):
        raise PacketError("Azimuth out of range")
    if np.any(raw_dist < 0) or np.any(raw_dist > 0xFFFF):
        raise PacketError("Distance out of range")

    return VelodynePacket(
        raw_az.astype(np.uint16),
        raw_dist.astype(np.uint16),
        reflectivity,
        timestamp,
        return_mode,
        model.product_id,
        model,
    ).encode()


def interpolate_azimuth(
    block_azimuth, next_block_azimuth, sequence, channel, model=VLP16
):
    """Azimuth at the firing time of a laser

    The sensor keeps rotating while a block is fired, the azimuth of a
    return is therefore interpolated between the azimuth of its block and
    the one of the next block, taking the rotation past 360° into account.

    Args:
        block_azimuth (float): degrees
        next_block_azimuth (float): degrees
        sequence (int): firing sequence in the block (0 or 1)
        channel (int): laser in the sequence
        model (SensorModel):
    Return:
        float: degrees in [0, 360)

    >>> round(float(interpolate_azimuth(10.0, 10.4, 1, 15)), 6)
    10.325
    """
    delta = np.mod(np.subtract(next_block_azimuth, block_azimuth), 360.0)
    offset = (
        np.multiply(sequence, model.sequence_duration)
        + np.multiply(channel, model.firing_duration)
    ) / model.block_duration
    return np.mod(np.add(block_azimuth, delta * offset), 360.0)


def decode_packet(payload, model=VLP16):
    """Returns of a data packet in spherical coordinates

    Args:
        payload (bytes or VelodynePacket):
        model (SensorModel):
    Return:
        numpy.ndarray: structured array of :py:data:`POLAR_DTYPE`, in
        firing order, without the null distances
    Raise:
        PacketError
    """

    if isinstance(payload, VelodynePacket):
        packet = payload
    else:
        packet = parse_packet(payload, model)
    model = packet.model

    az = packet.block_azimuths
    # The last block rotates as much as the previous one
    following = np.append(az[1:], az[-1] + np.mod(az[-1] - az[-2], 360.0))

    channels = np.arange(model.channels_per_block)
    sequence = channels // model.lasers
    laser = channels % model.lasers

    azimuth = interpolate_azimuth(
        az[:, None], following[:, None], sequence[None, :], laser[None, :], model
    )

    t_offset = (
        np.arange(model.blocks)[:, None] * model.block_duration
        + sequence[None, :] * model.sequence_duration
        + laser[None, :] * model.firing_duration
    )

    points = np.zeros(packet.distances.shape, dtype=POLAR_DTYPE)
    points["r"] = packet.distances * model.distance_scale
    points["azimuth"] = azimuth
    points["elevation"] = np.asarray(model.elevations, dtype=float)[laser][None, :]
    points["reflectivity"] = packet.reflectivity
    points["t_offset"] = t_offset

    points = points.ravel()
    return points[points["r"] > 0]
