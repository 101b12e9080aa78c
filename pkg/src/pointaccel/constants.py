"""Constants of the accelerator, the sensor and the reference measurements

Lengths are in meters, angles in degrees, durations in microseconds unless
stated otherwise.
"""

from collections import namedtuple

MAX_POINTS = 4096
"""Maximum number of points per frame accepted by the accelerator"""

DEFAULT_TILE = (32, 32)
"""Default unroll factors (dot-product direction, output channels)"""

OUTPUT_BLOCK_ROWS = 64
"""Points held per output block by the second stage of the output buffer"""

HP_PEAK_BITS_PER_S = 102.4e9
"""Peak DDR bandwidth seen through the HP port, in bit/s"""

DEFAULT_CLOCK_HZ = 150e6
"""Default accelerator clock, in Hz"""


class SensorModel:
    """Wire-level description of a Velodyne sensor data packet"""

    def __init__(self, name, elevations, **kwargs):
        self.name = name
        """Name of the sensor"""
        self.elevations = tuple(elevations)
        """Vertical angle of each laser, in firing order"""

        for k, v in kwargs.items():
            setattr(self, k, v)

    def __repr__(self):
        return f"<SensorModel '{self.name}'>"

    @property
    def lasers(self):
        """Number of lasers"""
        return len(self.elevations)

    @property
    def block_duration(self):
        """Duration of a data block (two firing sequences)"""
        return self.sequences_per_block * self.sequence_duration

    @property
    def channels_per_block(self):
        return self.sequences_per_block * self.lasers


VLP16 = SensorModel(
    "VLP-16",
    # Interleaved factory order of the 16 lasers
    (-15, 1, -13, 3, -11, 5, -9, 7, -7, 9, -5, 11, -3, 13, -1, 15),
    payload_size=1206,
    blocks=12,
    block_flag=b"\xff\xee",
    sequences_per_block=2,
    azimuth_scale=0.01,
    distance_scale=0.002,
    sequence_duration=55.296,
    firing_duration=2.304,
    return_strongest=0x37,
    return_last=0x38,
    return_dual=0x39,
    product_id=0x22,
    port=2368,
    packets_per_revolution=75,
)
"""Velodyne VLP-16 in single-return mode"""


class Measurement(namedtuple("Measurement", "gops latency_s")):
    """Throughput (GOPS) and processing time (s) of a reference measurement"""

    @property
    def ops(self):
        """Operations per frame implied by the measurement"""
        return self.gops * 1e9 * self.latency_s

    @property
    def fps(self):
        return 1 / self.latency_s


MEASUREMENTS = {
    ("vanilla-cls", 8): Measurement(112.5, 10.9e-3),
    ("vanilla-cls", 16): Measurement(64.9, 18.9e-3),
    ("cls", 8): Measurement(182.1, 19.8e-3),
    ("cls", 16): Measurement(130.0, 27.8e-3),
    ("seg", 8): Measurement(280.0, 34.6e-3),
    ("seg", 16): Measurement(227.4, 42.6e-3),
}
"""Measured accelerator performance for 4096-point frames, by network and width"""
