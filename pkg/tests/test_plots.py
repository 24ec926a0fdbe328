import re

import numpy as np
import pytest

from icd.plots import KINDS, PlotInputError, PlotSpec, emit_plot, read_csv
from icd.rng import stream


def _write(path, text):
    path.write_text(text)
    return str(path)


def test_scatter_of_dataset(tmp_path, mix):
    x, c = mix.sample(400, stream(0, "plot"))
    rows = "".join(f"{float(p[0])!r},{float(p[1])!r},{k}\n" for p, k in zip(x, c))
    src = _write(tmp_path / "pts.csv", "x,y,label\n" + rows)
    svg = emit_plot(PlotSpec("scatter", [src], "mixture"), str(tmp_path / "pts.svg"))
    assert svg.count("<circle") == 400
    assert len(set(re.findall(r'fill="(#[0-9a-f]{6})"', svg))) >= 8
    assert "http" not in svg.replace("http://www.w3.org/2000/svg", "")


def test_loss_and_frontier(tmp_path):
    loss = _write(tmp_path / "l.csv", "step,a,b\n0,1.0,0.5\n1,0.5,0.25\n2,0.25,0.1\n")
    svg = emit_plot(PlotSpec("loss-curve", [loss]), str(tmp_path / "l.svg"))
    assert svg.count("<polyline") == 2
    fr = _write(tmp_path / "f.csv", "tau,w_max,edit_success,preservation,baseline,n\n"
                "0.5,8.0,0.9,1.0,2.0,10\n0.7,8.0,0.95,1.2,2.0,10\n")
    svg = emit_plot(PlotSpec("frontier", [fr]), str(tmp_path / "f.svg"))
    assert "tau=0.5" in svg and "tau=0.7" in svg


def test_output_is_stable(tmp_path):
    src = _write(tmp_path / "p.csv", "sample,stage,t,x,y\n0,0,19,0.0,0.0\n0,1,999,1.0,1.0\n")
    a = emit_plot(PlotSpec("trajectory", [src]), str(tmp_path / "a.svg"))
    b = emit_plot(PlotSpec("trajectory", [src]), str(tmp_path / "b.svg"))
    assert a == b and (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


@pytest.mark.parametrize("text,line", [
    ("x,y\n1,2\n3\n", 3),
    ("x,y\n1,2\n3,abc\n", 3),
    ("a,b\n1,2\n", 1),
    ("", 1),
])
def test_malformed_csv_reports_line(tmp_path, text, line):
    src = _write(tmp_path / "bad.csv", text)
    with pytest.raises(PlotInputError) as info:
        read_csv(src, ("x", "y"))
    assert f"bad.csv:{line}:" in str(info.value)


def test_spec_validation():
    assert "scatter" in KINDS
    with pytest.raises(ValueError):
        PlotSpec("pie", ["a.csv"])
    with pytest.raises(ValueError):
        PlotSpec("scatter", [])


def test_non_required_columns_may_be_text(tmp_path):
    src = _write(tmp_path / "t.csv", "x,y,name\n1,2,foo\n")
    cols = read_csv(src, ("x", "y"))
    assert np.isnan(cols["name"][0])
