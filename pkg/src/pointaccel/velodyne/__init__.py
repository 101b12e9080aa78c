"""Velodyne VLP-16 front-end: packet decoding, frame assembly, ROI and capacity"""

from .frames import (
    FrameAssembler,
    Partition,
    PointCloudFrame,
    PolarFrame,
    RoiBox,
    Subsample,
    assemble_frame,
    fit_to_capacity,
    roi_filter,
    synthetic_revolution,
    to_cartesian,
)
from .net import PacketStream, listen, replay
from .packet import (
    POLAR_DTYPE,
    VelodynePacket,
    decode_packet,
    encode_packet,
    interpolate_azimuth,
    parse_packet,
)

__all__ = [
    "FrameAssembler",
    "POLAR_DTYPE",
    "PacketStream",
    "Partition",
    "PointCloudFrame",
    "PolarFrame",
    "RoiBox",
    "Subsample",
    "VelodynePacket",
    "assemble_frame",
    "decode_packet",
    "encode_packet",
    "fit_to_capacity",
    "interpolate_azimuth",
    "listen",
    "parse_packet",
    "replay",
    "roi_filter",
    "synthetic_revolution",
    "to_cartesian",
]
