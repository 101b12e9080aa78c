import numpy as np
from pytest import mark, raises

from pointaccel.errors import ParseError
from pointaccel.io.points import format_points, read_points, write_labels, write_points
from pointaccel.velodyne import PointCloudFrame


def test_round_trip(rng, tmp_path):

    points = np.round(rng.uniform(-50, 50, (100, 3)), 6)
    refl = rng.integers(0, 256, 100)
    path = tmp_path / "frame.csv"

    write_points(PointCloudFrame(points, refl), path)
    frame = read_points(path)

    assert np.allclose(frame.points, points, rtol=0, atol=1e-9)
    assert frame.reflectivity.tolist() == refl.tolist()

    write_points(PointCloudFrame(points), path)
    frame = read_points(path)
    assert frame.reflectivity is None
    assert frame.points.shape == (100, 3)


def test_format():

    frame = PointCloudFrame([[1, 2, 3], [-0.0000004, 1e-7, 12.3456789]])
    assert format_points(frame) == (
        "x,y,z\n1.000000,2.000000,3.000000\n-0.000000,0.000000,12.345679\n"
    )


def test_header_only(tmp_path):

    path = tmp_path / "empty.csv"
    write_points(PointCloudFrame(np.zeros((0, 3)), np.zeros(0)), path)

    assert path.read_text() == "x,y,z,reflectivity\n"
    frame = read_points(path)
    assert len(frame) == 0
    assert frame.reflectivity.shape == (0,)


def test_single_point(tmp_path):

    path = tmp_path / "one.csv"
    path.write_text("x,y,z\n1,2,3\n\n")
    assert read_points(path).points.tolist() == [[1.0, 2.0, 3.0]]


@mark.parametrize(
    "text",
    [
        "",
        "a,b,c\n1,2,3\n",
        "x,y,z\n1,2\n",
        "x,y,z\n1,2,3,4\n",
        "x,y,z\n1,foo,3\n",
        "x,y,z\n1,nan,3\n",
        "x,y,z,reflectivity\n1,2,3,256\n",
        "x,y,z,reflectivity\n1,2,3,-1\n",
        "x,y,z,reflectivity\n1,2,3,1.5\n",
    ],
)
def test_errors(tmp_path, text):

    path = tmp_path / "bad.csv"
    path.write_text(text)

    with raises(ParseError):
        read_points(path)


def test_missing(tmp_path):

    with raises(OSError):
        read_points(tmp_path / "nowhere.csv")


def test_labels(tmp_path):

    path = tmp_path / "labels.csv"
    write_labels(np.array([3, 0, 49]), path)
    assert path.read_text() == "label\n3\n0\n49\n"
