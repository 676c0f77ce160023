import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plsim.exceptions import (
    ChartOutOfBall,
    ConstraintViolated,
    MissingColumn,
    NonFiniteValue,
    TooFewRows,
)
from plsim.model import (
    Dataset,
    alpha_to_chart,
    chart_to_alpha,
    validate_dataset,
)


def _table(n=100, nan_at=None):
    rng = np.random.default_rng(0)
    df = pd.DataFrame({
        "y": rng.normal(size=n),
        "z1": rng.uniform(size=n),
        "z2": rng.uniform(size=n),
        "x1": rng.normal(size=n),
    })
    if nan_at is not None:
        df.loc[nan_at[0], nan_at[1]] = np.nan
    return df


class TestValidateDataset:
    def test_well_formed(self):
        data = validate_dataset(_table(), ["z1", "z2"], ["x1"], "y")
        assert (data.n, data.p, data.q) == (100, 2, 1)
        assert data.z_names == ("z1", "z2")

    def test_nan_rejected_with_location(self):
        with pytest.raises(NonFiniteValue) as exc:
            validate_dataset(_table(nan_at=(7, "z1")), ["z1", "z2"], ["x1"], "y")
        assert exc.value.row == 7
        assert exc.value.col == "z1"
        assert exc.value.count == 1

    def test_nan_count_reported(self):
        df = _table()
        df.loc[3, "y"] = np.nan
        df.loc[9, "x1"] = np.inf
        with pytest.raises(NonFiniteValue) as exc:
            validate_dataset(df, ["z1", "z2"], ["x1"], "y")
        assert exc.value.count == 2

    def test_too_few_rows(self):
        with pytest.raises(TooFewRows) as exc:
            validate_dataset(_table(n=4), ["z1", "z2"], ["x1"], "y")
        assert (exc.value.n, exc.value.needed) == (4, 6)

    def test_missing_column(self):
        with pytest.raises(MissingColumn):
            validate_dataset(_table(), ["z1", "z9"], ["x1"], "y")

    def test_q_zero_allowed(self):
        data = validate_dataset(_table(), ["z1", "z2"], [], "y")
        assert data.q == 0
        assert data.x.shape == (100, 0)


class TestChart:
    def test_origin(self):
        ip = chart_to_alpha(np.zeros(1))
        assert np.allclose(ip.alpha, [1.0, 0.0])

    def test_table1_direction(self):
        ip = chart_to_alpha(np.array([0.7071]))
        assert np.allclose(ip.alpha, [0.70711276, 0.7071], atol=5e-5)
        assert abs(np.linalg.norm(ip.alpha) - 1) < 1e-12

    def test_table2_direction(self):
        ip = chart_to_alpha(np.array([0.5774, 0.5774]))
        assert np.allclose(ip.alpha, [0.5774, 0.5774, 0.5774], atol=2e-4)

    def test_out_of_ball(self):
        with pytest.raises(ChartOutOfBall):
            chart_to_alpha(np.array([0.8, 0.7]))

    def test_inverse_slice(self):
        assert np.allclose(alpha_to_chart(np.array([1.0, 0.0])), [0.0])
        assert np.allclose(alpha_to_chart(np.array([0.6, 0.8])), [0.8])

    def test_sign_rule(self):
        with pytest.raises(ConstraintViolated):
            alpha_to_chart(np.array([-0.6, 0.8]))

    def test_norm_rule(self):
        with pytest.raises(ConstraintViolated):
            alpha_to_chart(np.array([0.7, 0.8]))

    @given(st.integers(2, 6), st.integers(0, 10_000))
    @settings(max_examples=80, deadline=None)
    def test_round_trip_property(self, p, key):
        rng = np.random.default_rng(key)
        chart = rng.uniform(-1, 1, p - 1)
        nrm = np.linalg.norm(chart)
        if nrm > 0:
            chart *= rng.uniform(0.0, 0.999) / nrm
        ip = chart_to_alpha(chart)
        assert abs(np.linalg.norm(ip.alpha) - 1.0) <= 1e-12
        assert ip.alpha[0] > 0
        back = alpha_to_chart(ip.alpha)
        assert np.max(np.abs(back - chart)) <= 1e-12


class TestDataset:
    def test_immutable(self):
        data = Dataset(np.ones(10), np.ones((10, 2)), np.empty((10, 0)))
        with pytest.raises(ValueError):
            data.y[0] = 2.0

    def test_nonfinite_rejected(self):
        y = np.ones(10)
        y[3] = np.nan
        with pytest.raises(NonFiniteValue):
            Dataset(y, np.ones((10, 2)), np.empty((10, 0)))
