import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from etadecomp import (
    DimensionError,
    DuplicateKeyError,
    InsufficientPeriodsError,
    PanelDataset,
    PanelRecord,
    ParseError,
    SchemaError,
    center_panel,
    export_panel,
    load_model_panels,
    load_panel,
    make_deltas,
)
from etadecomp.panel import export_panel_string

HEADER = "unit_id,period,treated,actual_outcome,predicted_outcome\n"


def load_text(text, schema=None):
    return load_panel(io.StringIO(text), schema)


def test_minimal_file():
    ds = load_text(HEADER + "a,1,0,100,90\na,2,0,130,90\nb,1,0,50,55\nb,2,0,60,58\n")
    assert ds.n_periods == 2
    assert ds.n_complete == 2
    assert list(ds.complete_unit_ids) == ["a", "b"]


def test_duplicate_key_names_unit():
    with pytest.raises(DuplicateKeyError, match="7") as info:
        load_text(HEADER + "7,1,0,1,1\n7,2,0,1,1\n7,1,0,2,2\n")
    assert info.value.unit_id == "7"


def test_missing_period_excludes_unit():
    text = HEADER + "1,1,0,1,1\n1,2,0,2,2\n2,1,0,3,3\n2,2,0,4,4\n3,1,0,5,5\n"
    ds = load_text(text)
    assert ds.n_units == 3
    assert ds.n_complete == 2
    assert "3" not in set(ds.complete_unit_ids)
    assert ds.quality()["n_incomplete_units"] == 1
    assert len(make_deltas(ds)) == 2


def test_missing_outcome_cell_is_incomplete():
    ds = load_text(HEADER + "1,1,0,1,1\n1,2,0,,2\n2,1,0,3,3\n2,2,0,4,4\n")
    assert ds.n_complete == 1
    assert ds.records[1].actual_outcome is None


def test_periods_remapped_from_sorted_labels():
    ds = load_text(HEADER + "u,2019,0,1,1\nu,2021,0,3,3\nv,2021,0,4,4\nv,2019,0,2,2\n")
    assert ds.n_periods == 2
    assert ds.period_labels == (2019, 2021)
    d = make_deltas(ds)
    assert list(d.delta_actual) == [2.0, 2.0]
    assert "2021" in export_panel_string(ds)


def test_zero_based_periods_remapped():
    ds = load_text(HEADER + "u,0,0,1,1\nu,1,0,2,2\n")
    assert ds.n_periods == 2 and ds.period_labels == (0, 1)


def test_schema_override():
    text = "id,t,D,y,yhat\n1,1,0,1,1\n1,2,0,2,2\n"
    ds = load_text(text, {"unit_id": "id", "period": "t", "treated": "D",
                          "actual_outcome": "y", "predicted_outcome": "yhat"})
    assert ds.n_complete == 1


@pytest.mark.parametrize("text, exc", [
    ("unit_id,period,actual_outcome\n1,1,2\n", SchemaError),
    (HEADER + "1,x,0,1,1\n", ParseError),
    (HEADER + "1,1,maybe,1,1\n", ParseError),
    (HEADER + "1,1,0,abc,1\n", ParseError),
    (HEADER + "1,1,0,nan,1\n", ParseError),
    (HEADER + "1,1,0,1\n", ParseError),
    ("", SchemaError),
])
def test_malformed_input(text, exc):
    with pytest.raises(exc):
        load_text(text)


def test_parse_error_reports_line():
    with pytest.raises(ParseError, match="line 3"):
        load_text(HEADER + "1,1,0,1,1\n1,2,0,oops,1\n")


def test_record_invariant():
    with pytest.raises(ParseError):
        PanelRecord("u", 0, False)


def test_dataset_is_immutable():
    a = np.ones((3, 2))
    ds = PanelDataset.from_wide(a, a)
    assert a.flags.writeable
    with pytest.raises(ValueError):
        ds.columns["actual_outcome"][0] = 5.0


def test_from_records_roundtrip():
    recs = [PanelRecord("x", 1, False, 1.0, 2.0), PanelRecord("x", 2, True, 3.0, None)]
    ds = PanelDataset.from_records(recs)
    assert ds.records == tuple(recs)


def test_untreated_subsample():
    treated = np.array([[0, 0], [1, 1], [0, 1]], dtype=bool)
    ds = PanelDataset.from_wide(np.ones((3, 2)), np.ones((3, 2)), treated)
    assert ds.has_treated and not ds.treatment_fixed_within_unit
    u = ds.untreated()
    assert list(u.unit_ids) == [0]
    assert not u.has_treated


def test_take_units_relabels_repeats():
    a = np.arange(6.0).reshape(3, 2)
    ds = PanelDataset.from_wide(a, a)
    b = ds.take_units(np.array([2, 2, 0]))
    assert b.n_units == 3
    np.testing.assert_array_equal(b.wide().actual, a[[2, 2, 0]])


def test_deltas_example():
    ds = PanelDataset.from_wide([[100.0, 130.0], [5.0, 5.0]], [[90.0, 90.0], [7.0, 7.0]])
    d = make_deltas(ds)
    assert (d[0].delta_actual, d[0].delta_predicted) == (30.0, 0.0)
    assert (d[1].delta_actual, d[1].delta_predicted) == (0.0, 0.0)


def test_deltas_five_units_by_hand():
    actual = [[1, 4], [2, 2], [10, 7], [0, 0.5], [-3, 3]]
    pred = [[0, 1], [1, 3], [5, 5], [2, 0], [1, 1]]
    d = make_deltas(PanelDataset.from_wide(actual, pred))
    assert list(d.delta_actual) == [3, 0, -3, 0.5, 6]
    assert list(d.delta_predicted) == [1, 2, 0, -2, 0]


def test_deltas_need_two_periods():
    with pytest.raises(DimensionError, match="center_panel"):
        make_deltas(PanelDataset.from_wide(np.ones((2, 3)), np.ones((2, 3))))


def test_center_examples():
    c = center_panel(PanelDataset.from_wide([[10.0, 20.0, 30.0], [5.0, 5.0, 5.0]],
                                            np.zeros((2, 3))))
    assert list(c.centered_actual[:3]) == [-10.0, 0.0, 10.0]
    assert list(c.centered_actual[3:]) == [0.0, 0.0, 0.0]
    assert c[0].period == 1 and c[5].unit_id == 1


def test_center_needs_two_periods():
    with pytest.raises(InsufficientPeriodsError):
        center_panel(PanelDataset.from_wide(np.ones((2, 1)), np.ones((2, 1))))


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@st.composite
def wide_panels(draw, min_t=2, max_t=5):
    n = draw(st.integers(1, 8))
    T = draw(st.integers(min_t, max_t))
    a = draw(st.lists(finite, min_size=n * T, max_size=n * T))
    p = draw(st.lists(finite, min_size=n * T, max_size=n * T))
    return np.array(a).reshape(n, T), np.array(p).reshape(n, T)


@settings(max_examples=50, deadline=None)
@given(wide_panels(2, 2))
def test_t2_centered_are_half_deltas(panel):
    a, p = panel
    ds = PanelDataset.from_wide(a, p)
    d = make_deltas(ds)
    c = center_panel(ds)
    ca = c.centered_actual.reshape(-1, 2)
    np.testing.assert_array_equal(ca[:, 1] - ca[:, 0], d.delta_actual)
    np.testing.assert_allclose(ca[:, 1], d.delta_actual / 2, rtol=1e-12, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(wide_panels())
def test_centered_sum_to_zero(panel):
    a, p = panel
    c = center_panel(PanelDataset.from_wide(a, p))
    sums = c.centered_actual.reshape(a.shape).sum(axis=1)
    assert np.all(np.abs(sums) <= 1e-9 * max(1.0, np.abs(a).max()))


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_export_roundtrip(data):
    n = data.draw(st.integers(1, 6))
    T = data.draw(st.integers(1, 4))
    opt = st.one_of(st.none(), finite)
    rows = []
    for i in range(n):
        for t in range(1, T + 1):
            rows.append(PanelRecord(f"u{i}", t, data.draw(st.booleans()),
                                    data.draw(opt), data.draw(opt)))
    ds = PanelDataset.from_records(rows)
    text = export_panel_string(ds)
    back = load_text(text)
    assert back.records == ds.records
    assert export_panel_string(back) == text


def test_export_to_path(tmp_path):
    ds = PanelDataset.from_wide([[1.5, 2.25]], [[0.1, 1 / 3]])
    path = tmp_path / "p.csv"
    export_panel(ds, path)
    back = load_panel(path)
    np.testing.assert_array_equal(back.wide().predicted, [[0.1, 1 / 3]])


def test_model_columns():
    text = ("unit_id,period,treated,actual_outcome,predicted_outcome_a,predicted_outcome_b\n"
            "1,1,0,1,2,3\n1,2,0,2,3,4\n")
    models = load_model_panels(io.StringIO(text))
    assert sorted(models) == ["a", "b"]
    assert models["b"].wide().predicted[0, 0] == 3.0
    with pytest.raises(SchemaError):
        load_model_panels(io.StringIO("unit_id,period,treated,actual_outcome\n1,1,0,1\n"))
