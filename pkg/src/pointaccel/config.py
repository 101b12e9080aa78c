"""Run-time parameters of the library

Values are grouped in sections named after the subpackage reading them. See
:ref:`configuration` for the list of keys.
"""

import logging

from .errors import ConfigError

log = logging.getLogger(__name__)

SECTIONS = ("accel", "fixq", "pointnet", "velodyne", "io")

_MISSING = object()


class Config(dict):
    """Nested dictionary of parameters, one level per section

    Missing keys give the fallback value, unknown sections are errors.

    >>> cfg = Config()
    >>> cfg.set("fixq", "frac_bits", 8, 5)
    >>> cfg.get("fixq", "frac_bits", 8)
    5
    >>> cfg.get("fixq", "frac_bits", 16, fallback=8)
    8
    """

    @staticmethod
    def _check(section):
        if section not in SECTIONS:
            raise ConfigError(
                f"Unknown section '{section}', expected one of {', '.join(SECTIONS)}"
            )

    def get(self, section, *keys, fallback=None):
        self._check(section)

        out = super().get(section, _MISSING)
        for depth, key in enumerate(keys):
            if out is _MISSING:
                break
            if not isinstance(out, dict):
                path = ".".join(str(k) for k in (section, *keys[:depth]))
                raise ConfigError(f"'{path}' is a value, no '{key}' key in it")
            out = out.get(key, _MISSING)

        return fallback if out is _MISSING else out

    def set(self, section, *args):
        """Set a value, given as the last argument

        >>> cfg = Config()
        >>> cfg.set("accel", "clock_hz", 200e6)
        >>> cfg
        {'accel': {'clock_hz': 200000000.0}}
        """
        self._check(section)
        if len(args) < 2:
            raise ConfigError(f"Key and value expected in section '{section}'")

        *keys, last, value = args
        subdict = self.setdefault(section, {})
        for key in keys:
            subdict = subdict.setdefault(key, {})
            if not isinstance(subdict, dict):
                raise ConfigError(f"'{key}' is a value in section '{section}'")

        subdict[last] = value
        log.debug(f"{'.'.join(str(k) for k in (section, *keys, last))} = {value!r}")


config = Config()
