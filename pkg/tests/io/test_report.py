import io

from pytest import fixture, mark, raises

from pointaccel.accel import PerfReport
from pointaccel.config import config
from pointaccel.errors import ReportError
from pointaccel.io.report import dump, dumps, load, loads


@fixture
def report():
    return PerfReport(
        macs=1_783_021_824,
        ops=3_566_043_648,
        compute_cycles=2_100_000,
        dma_cycles=450_123,
        total_cycles=2_400_017,
        latency_s=2_400_017 / 150e6,
        effective_gops=222.87,
        bytes_moved=3_874_816,
        saturation_events=12,
    )


def test_dump_kvn(report):

    text = dumps(report, "kvn")
    lines = text.splitlines()

    assert lines[0] == "PERF_REPORT_VERS = 1.0"
    assert lines[1] == "ORIGINATOR = pointaccel"
    assert lines[2] == "MACS = 1783021824"
    assert lines[7] == f"LATENCY = {2_400_017 / 150e6!r} [s]"
    assert lines[-1] == "SATURATION_EVENTS = 12"
    assert text.endswith("\n")


def test_dump_xml(report):

    text = dumps(report, "xml", originator="bench")

    assert text.startswith("<?xml version='1.0' encoding='UTF-8'?>")
    assert '<perf id="PERF_REPORT_VERS" version="1.0">' in text
    assert "<ORIGINATOR>bench</ORIGINATOR>" in text
    assert "<MACS>1783021824</MACS>" in text
    assert '<LATENCY units="s">' in text


@mark.parametrize("fmt", ["kvn", "xml"])
def test_round_trip(report, fmt):

    assert loads(dumps(report, fmt)) == report

    fp = io.StringIO()
    dump(report, fp, fmt=fmt)
    fp.seek(0)
    assert load(fp) == report


def test_config_format(report):

    config.set("io", "report_format", "xml")
    try:
        assert dumps(report).startswith("<?xml")
    finally:
        del config["io"]["report_format"]

    assert dumps(report).startswith("PERF_REPORT_VERS")

    with raises(ReportError):
        dumps(report, "json")


def test_errors(report):

    text = dumps(report, "kvn")

    with raises(ReportError, match="version"):
        loads(text.replace("1.0", "2.0", 1))
    with raises(ReportError, match="OPS"):
        loads("\n".join(line for line in text.splitlines() if "OPS" not in line))
    with raises(ReportError, match="MACS"):
        loads(text.replace("1783021824", "many"))
    with raises(ReportError, match="Invalid line"):
        loads(text + "garbage\n")

    xml = dumps(report, "xml")
    with raises(ReportError):
        loads(xml[:-20])
    with raises(ReportError, match="Not a performance report"):
        loads("<report/>")
    with raises(ReportError, match="body"):
        loads('<perf id="PERF_REPORT_VERS" version="1.0"/>')
