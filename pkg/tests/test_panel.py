import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from proxydfm.errors import BalancedPanelError, DomainError, ParseError, StateError
from proxydfm.panel import (TimeSeriesPanel, TransformSpec, apply_transforms, invert_transforms,
                            load_csv, save_csv, transform_panel)


def write(tmp_path, text, name="p.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def panel_of(x, names=None):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return TimeSeriesPanel(x, names or tuple(f"v{i}" for i in range(x.shape[1])))


class TestPanelInvariants:
    def test_duplicate_names(self):
        with pytest.raises(DomainError):
            TimeSeriesPanel(np.zeros((3, 2)), ("a", "a"))

    def test_too_short(self):
        with pytest.raises(DomainError):
            TimeSeriesPanel(np.zeros((1, 2)), ("a", "b"))

    def test_nan_rejected(self):
        x = np.ones((4, 2))
        x[2, 1] = np.nan
        with pytest.raises(BalancedPanelError, match="b"):
            TimeSeriesPanel(x, ("a", "b"))

    def test_dates_must_increase(self):
        dates = np.array(["2000-01-01", "2000-03-01", "2000-02-01"], dtype="datetime64[D]")
        with pytest.raises(DomainError):
            TimeSeriesPanel(np.zeros((3, 1)), ("a",), dates)

    def test_values_read_only(self):
        p = panel_of(np.arange(6.0).reshape(3, 2))
        with pytest.raises(ValueError):
            p.values[0, 0] = 1.0


class TestLoadCsv:
    def test_simple(self, tmp_path):
        p = load_csv(write(tmp_path, "date,a,b\n2000-01,1,2\n2000-02,3,4\n2000-03,5,6\n"))
        assert (p.T, p.N) == (3, 2)
        assert p.names == ("a", "b")
        assert p.freq == "monthly"
        np.testing.assert_array_equal(p.values[:, 1], [2, 4, 6])

    def test_leading_gap_trimmed(self, tmp_path):
        rows = ["date,a,b"]
        for t in range(10):
            b = "" if t < 4 else str(t)
            rows.append(f"2001-{t + 1:02d}-01,{t},{b}")
        p = load_csv(write(tmp_path, "\n".join(rows) + "\n"))
        assert p.T == 6
        assert str(p.dates[0]) == "2001-05-01"

    def test_interior_gap(self, tmp_path):
        text = "date,a,b\n2000-01,1,2\n2000-02,,4\n2000-03,5,6\n"
        with pytest.raises(BalancedPanelError, match="'a'.*2000-02-01"):
            load_csv(write(tmp_path, text))

    def test_parse_error_has_location(self, tmp_path):
        text = "date,a\n2000-01,1\n2000-02,oops\n"
        with pytest.raises(ParseError, match=r"p\.csv:3"):
            load_csv(write(tmp_path, text))

    def test_bad_date(self, tmp_path):
        with pytest.raises(ParseError, match=r":3: unparseable date"):
            load_csv(write(tmp_path, "date,a\n2000-01,1.5\nyesterday,1\n"))

    def test_fred_code_row(self, tmp_path):
        # hand-built five-row file in the FRED-MD layout
        text = ("sasdate,RPI,INDPRO,CPI\n"
                "Transform:,5,5,6\n"
                "1/1/1960,2437.3,21.9,29.3\n"
                "2/1/1960,2446.6,22.1,29.4\n"
                "3/1/1960,2449.9,21.9,29.4\n")
        p = load_csv(write(tmp_path, text))
        assert p.tcodes == (5, 5, 6)
        assert p.T == 3
        spec = TransformSpec.from_fred_codes(p.names, p.tcodes, strict=False)
        assert spec.code("RPI") == "log-diff"
        assert spec.code("CPI") == "level"   # code 6 has no equivalent
        with pytest.raises(DomainError):
            TransformSpec.from_fred_codes(p.names, p.tcodes)

    def test_empty_column_dropped(self, tmp_path):
        p = load_csv(write(tmp_path, "date,a,b\n2000-01,1,\n2000-02,2,\n"))
        assert p.names == ("a",)

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((12, 3)) * 10 ** rng.uniform(-8, 8, size=3)
        dates = np.datetime64("1999-12", "M") + np.arange(12)
        p = TimeSeriesPanel(x, ("a", "b", "c"), dates.astype("datetime64[D]"), "monthly", (1, 2, 5))
        save_csv(p, tmp_path / "out.csv")
        q = load_csv(tmp_path / "out.csv")
        np.testing.assert_array_equal(q.values, p.values)
        assert q.names == p.names and q.tcodes == p.tcodes
        np.testing.assert_array_equal(q.dates, p.dates)


class TestTransforms:
    def test_constant_diff(self):
        p = panel_of(np.full(6, 3.0))
        out = apply_transforms(p, TransformSpec.uniform(p.names, "diff"))
        assert out.T == 5
        np.testing.assert_array_equal(out.values, 0.0)

    def test_standardize_hand_value(self):
        p = panel_of([1.0, 2.0, 3.0])
        out = apply_transforms(p, TransformSpec.uniform(p.names, "standardize"))
        np.testing.assert_allclose(out.values[:, 0], [-1.0, 0.0, 1.0], atol=1e-15)

    def test_detrend_exact_line(self):
        t = np.arange(20.0)
        p = panel_of(4.0 - 0.3 * t)
        out = apply_transforms(p, TransformSpec.uniform(p.names, "detrend-linear"))
        np.testing.assert_allclose(out.values, 0.0, atol=1e-12)

    def test_log_nonpositive(self):
        p = panel_of([1.0, 0.0, 2.0])
        with pytest.raises(DomainError):
            apply_transforms(p, TransformSpec.uniform(p.names, "log"))

    def test_mixed_diff_drops_first_row_everywhere(self):
        p = panel_of(np.arange(10.0).reshape(5, 2) + 1)
        out = apply_transforms(p, TransformSpec({"v0": "diff", "v1": "log"}))
        assert out.T == 4
        np.testing.assert_allclose(out.values[:, 1], np.log(p.values[1:, 1]))

    def test_missing_initial_condition(self):
        p = panel_of([1.0, 2.0, 4.0])
        out, fitted = transform_panel(p, TransformSpec.uniform(p.names, "diff"))
        with pytest.raises(StateError):
            invert_transforms(out, TransformSpec(fitted.codes))

    def test_missing_parameters(self):
        p = panel_of([1.0, 2.0, 4.0])
        out = apply_transforms(p, TransformSpec.uniform(p.names, "standardize"))
        with pytest.raises(StateError):
            invert_transforms(out, TransformSpec.uniform(p.names, "standardize"))

    def test_second_standardization_changes_nothing(self):
        rng = np.random.default_rng(0)
        p = panel_of(rng.standard_normal((50, 4)) * 3 + 7)
        spec = TransformSpec.uniform(p.names, "standardize")
        once = apply_transforms(p, spec)
        twice = apply_transforms(once, spec)
        np.testing.assert_allclose(twice.values, once.values, atol=1e-12)


positive = arrays(np.float64, st.tuples(st.integers(3, 30), st.integers(1, 4)),
                  elements=st.floats(0.01, 1e4))
real = arrays(np.float64, st.tuples(st.integers(3, 30), st.integers(1, 4)),
              elements=st.floats(-1e4, 1e4))


@settings(max_examples=60, deadline=None)
@given(x=positive, code=st.sampled_from(["level", "log", "diff", "log-diff", "standardize", "detrend-linear"]))
def test_invert_round_trip(x, code):
    p = panel_of(x)
    if code == "standardize" and np.any(x.std(axis=0, ddof=1) <= 1e-9 * np.abs(x).max()):
        return
    out, fitted = transform_panel(p, TransformSpec.uniform(p.names, code))
    back = invert_transforms(out, fitted)
    np.testing.assert_allclose(back.values, p.values, rtol=1e-10, atol=1e-10 * np.abs(x).max())


@settings(max_examples=40, deadline=None)
@given(x=real)
def test_csv_round_trip(tmp_path_factory, x):
    p = panel_of(x)
    path = tmp_path_factory.mktemp("rt") / "p.csv"
    save_csv(p, path)
    q = load_csv(path)
    np.testing.assert_array_equal(q.values, p.values)
    assert q.names == p.names
