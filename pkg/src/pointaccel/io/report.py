"""Text renditions of the performance reports

Two formats are available, a Key-Value Notation

.. code-block:: text

    PERF_REPORT_VERS = 1.0
    ORIGINATOR = pointaccel
    MACS = 1802633728
    ...
    LATENCY = 0.0117 [s]

and an XML document carrying the same fields. The default format is read
from the ``io.report_format`` configuration key.

.. code-block:: python

    from pointaccel.config import config
    config.set("io", "report_format", "xml")
"""

import logging

import lxml.etree as ET

from ..accel.perf import PerfReport
from ..config import config
from ..errors import ReportError

__all__ = ["load", "loads", "dump", "dumps"]

log = logging.getLogger(__name__)

DEFAULT_FMT = "kvn"
VERSION = "1.0"
HEADER = "PERF_REPORT_VERS"

# Key, attribute, type, unit
FIELDS = [
    ("MACS", "macs", int, None),
    ("OPS", "ops", int, None),
    ("COMPUTE_CYCLES", "compute_cycles", int, None),
    ("DMA_CYCLES", "dma_cycles", int, None),
    ("TOTAL_CYCLES", "total_cycles", int, None),
    ("LATENCY", "latency_s", float, "s"),
    ("EFFECTIVE_GOPS", "effective_gops", float, None),
    ("BYTES_MOVED", "bytes_moved", int, None),
    ("SATURATION_EVENTS", "saturation_events", int, None),
]


def get_format(fmt=None):
    """Format to dump the report into"""
    if fmt is None:
        fmt = config.get("io", "report_format", fallback=DEFAULT_FMT)
    if fmt not in ("kvn", "xml"):
        raise ReportError(f"Unknown report format '{fmt}'")
    return fmt


def _text(value):
    # repr gives the shortest string reading back to the same float
    return repr(float(value)) if isinstance(value, float) else str(int(value))


def _dump_kvn(report, originator):
    lines = [f"{HEADER} = {VERSION}", f"ORIGINATOR = {originator}"]
    for key, attr, _, unit in FIELDS:
        line = f"{key} = {_text(getattr(report, attr))}"
        if unit:
            line += f" [{unit}]"
        lines.append(line)
    return "\n".join(lines) + "\n"


def _dump_xml(report, originator):
    top = ET.Element("perf", {"id": HEADER, "version": VERSION})
    header = ET.SubElement(top, "header")
    ET.SubElement(header, "ORIGINATOR").text = originator
    body = ET.SubElement(top, "body")
    for key, attr, _, unit in FIELDS:
        elem = ET.SubElement(body, key, {"units": unit} if unit else {})
        elem.text = _text(getattr(report, attr))

    return ET.tostring(
        top, pretty_print=True, xml_declaration=True, encoding="UTF-8"
    ).decode()


def dumps(report, fmt=None, originator="pointaccel"):
    """Text representation of a performance report

    Args:
        report (PerfReport):
        fmt (str): 'kvn' or 'xml', from the configuration if omitted
        originator (str):
    Return:
        str
    """
    if get_format(fmt) == "xml":
        return _dump_xml(report, originator)
    return _dump_kvn(report, originator)


def dump(report, fp, **kwargs):
    """Write a performance report in a file descriptor

    Same arguments as :py:func:`dumps`
    """
    fp.write(dumps(report, **kwargs))


def _kvn2dict(text):
    data = {}
    for line in text.splitlines():
        if not line.strip() or line.startswith("COMMENT"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ReportError(f"Invalid line '{line}'")
        value = value.strip()
        if "[" in value:
            value = value.partition("[")[0].strip()
        data[key.strip()] = value
    return data


def _xml2dict(text):
    try:
        root = ET.fromstring(text.encode())
    except ET.XMLSyntaxError as e:
        raise ReportError(f"Invalid XML report: {e}") from e

    if root.tag != "perf" or root.get("id") != HEADER:
        raise ReportError(f"Not a performance report: <{root.tag}>")

    data = {HEADER: root.get("version")}
    body = root.find("body")
    if body is None:
        raise ReportError("Missing report body")
    for elem in body:
        data[elem.tag] = (elem.text or "").strip()
    return data


def loads(text):
    """Read a performance report, in either format

    Args:
        text (str):
    Return:
        PerfReport
    Raise:
        ReportError
    """

    if text.lstrip().startswith("<"):
        data = _xml2dict(text)
    else:
        data = _kvn2dict(text)

    if data.get(HEADER) != VERSION:
        raise ReportError(f"Unsupported report version {data.get(HEADER)!r}")

    kwargs = {}
    for key, attr, cast, _ in FIELDS:
        try:
            kwargs[attr] = cast(data[key])
        except KeyError:
            raise ReportError(f"Missing field {key}") from None
        except ValueError as e:
            raise ReportError(f"Invalid value for {key}: {data[key]!r}") from e

    return PerfReport(**kwargs)


def load(fp):
    """Read a performance report from a file descriptor"""
    return loads(fp.read())
