import warnings

import numpy as np
import pytest

from infa.classify import NnModel, nn_classify
from infa.dataset import Dataset, make_synthetic_figure1
from infa.errors import DimensionError, RepresentationInfeasibleError
from infa.representation import (
    invariant_representation,
    read_features,
    round_half_up,
    scale_plan,
    transform_foldin,
    write_features,
)

FIG1 = dict(base_L=20, K=2, scales=1, delta=20, all_windows=True)
TARGET = np.array([[1.9, 1.1], [1.7, 1.3], [1.3, 1.7], [1.1, 1.9]])


def random_dataset(seed=0, N=5, Q=48):
    rng = np.random.default_rng(seed)
    return Dataset(rng.normal(size=(N, Q)).cumsum(axis=1), np.arange(N) % 2, 2)


def test_round_half_up():
    assert [round_half_up(x) for x in (0.5, 1.5, 2.5, 2.4999, 7.5)] == [1, 2, 3, 2, 8]


def test_mass_conservation_and_layout(backend):
    d = random_dataset()
    F, models = invariant_representation(d, 6, 4, iterations=3, scales=3, backend=backend)
    assert F.values.shape == (5, 12) and F.n_scales == 3
    assert F.mass_deviation() <= 1e-9
    assert np.all(F.values >= 0)
    assert [r.window_length for r in F.layout] == [6, 12, 18]
    assert [r.offset for r in F.layout] == [1, 1, 1]  # round(0.05 L') clamped to 1
    assert F.column_names()[:2] == ["s1_p1", "s1_p2"] and F.column_names()[-1] == "s3_p4"
    for r, m in zip(F.layout, models):
        assert m.hyper.seed == r.scale
        np.testing.assert_array_equal(F.values[:, r.columns[0]:r.columns[1]],
                                      m.memberships.sum(axis=1))


def test_single_series():
    d = Dataset(np.sin(np.linspace(0, 7, 40))[None], np.array([0]), 1)
    F, _ = invariant_representation(d, 8, 3, scales=1, iterations=3)
    M = F.layout[0].segments
    assert F.values.shape == (1, 3)
    assert np.all(F.values >= 0) and F.values.sum() == pytest.approx(M, abs=1e-9)


def test_infeasible_scales_warn_and_skip():
    d = random_dataset(Q=30)
    with pytest.warns(RuntimeWarning, match="scale 3 skipped"):
        F, _ = invariant_representation(d, 12, 3, scales=4, iterations=2)
    assert [r.scale for r in F.layout] == [1, 2]
    assert F.values.shape == (5, 6)
    assert len(F.warnings) == 2
    with pytest.raises(RepresentationInfeasibleError):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            invariant_representation(d, 40, 3, scales=2)


def test_scale_plan_delta_per_scale():
    plan, notes = scale_plan(150, 30, 4)
    assert [(s, L, dl) for s, L, dl, _ in plan] == [(1, 30, 2), (2, 60, 3), (3, 90, 5), (4, 120, 6)]
    assert not notes
    plan, _ = scale_plan(150, 30, 2, delta=13)
    assert [dl for _, _, dl, _ in plan] == [13, 13]


def test_threads_match_serial():
    d = random_dataset(3)
    a, _ = invariant_representation(d, 6, 3, iterations=3, scales=3, threads=1)
    b, _ = invariant_representation(d, 6, 3, iterations=3, scales=3, threads=3)
    assert a.values.tobytes() == b.values.tobytes()


def match_columns(F, target):
    return min(np.max(np.abs(F - target)), np.max(np.abs(F[:, ::-1] - target)))


def test_synthetic_features_close_to_targets():
    d = make_synthetic_figure1(0)
    F, _ = invariant_representation(d, seed=0, **FIG1)
    assert F.layout[0].segments == 3
    assert match_columns(F.values, TARGET) <= 0.15
    y = d.labels
    nn = NnModel(F.values, y)
    assert all(nn_classify(nn, F.values[i], exclude=i) == y[i] for i in range(4))


def test_foldin_of_training_series_close_to_joint(backend):
    d = make_synthetic_figure1(0)
    F, models = invariant_representation(d, seed=0, backend=backend, **FIG1)
    G = transform_foldin(d, models, backend=backend)
    assert np.max(np.abs(G.values - F.values)) <= 0.05
    assert G.mass_deviation() <= 1e-9


def test_foldin_row_independent():
    d = random_dataset(5, N=4)
    _, models = invariant_representation(d, 6, 3, iterations=4, scales=2)
    alone = transform_foldin(d.series[2:3], models)
    batch = transform_foldin(d, models)
    np.testing.assert_allclose(batch.values[2], alone.values[0], atol=1e-9)
    again = transform_foldin(d.series[2:3], models)
    assert again.values.tobytes() == alone.values.tobytes()


def test_foldin_constant_series_keeps_init():
    d = random_dataset(6)
    _, models = invariant_representation(d, 6, 3, iterations=3, scales=1)
    G = transform_foldin(np.full((1, 48), 2.0), models)
    m = models[0]
    nearest = int(np.argmin((m.patterns ** 2).sum(axis=1)))
    expected = np.zeros(3)
    expected[nearest] = G.layout[0].segments
    np.testing.assert_array_equal(G.values[0], expected)


def test_foldin_length_mismatch():
    d = random_dataset()
    _, models = invariant_representation(d, 6, 3, iterations=2, scales=1)
    with pytest.raises(DimensionError):
        transform_foldin(np.zeros((1, 47)), models)


@pytest.mark.parametrize("shift", [1, 2, 3, 4, 5])
def test_shift_tolerance_single_series(shift):
    """A shifted series folded into unshifted training features keeps its class."""
    d = make_synthetic_figure1(0)
    F, models = invariant_representation(d, seed=0, **FIG1)
    nn = NnModel(F.values, d.labels)
    for i in range(4):
        G = transform_foldin(np.roll(d.series[i], shift)[None], models)
        assert nn_classify(nn, G.values[0], exclude=i) == d.labels[i]


def test_feature_csv_round_trip(tmp_path):
    d = random_dataset()
    F, _ = invariant_representation(d, 6, 3, iterations=2, scales=2)
    path = tmp_path / "f.csv"
    write_features(path, F, [str(c) for c in d.labels], {"seed": 0})
    header = path.read_text().splitlines()[0]
    assert header == "label,s1_p1,s1_p2,s1_p3,s2_p1,s2_p2,s2_p3"
    values, labels, side = read_features(path)
    assert values.tobytes() == F.values.tobytes()
    assert labels == [str(c) for c in d.labels]
    assert side["hyper"] == {"seed": 0} and len(side["scale_layout"]) == 2


@pytest.mark.parametrize("shift", [1, 2, 3, 4, 5])
def test_shift_tolerance_whole_dataset(shift):
    d = make_synthetic_figure1(0)
    X = np.roll(d.series, shift, axis=1)
    F, _ = invariant_representation(Dataset(X, d.labels, 2), seed=0, **FIG1)
    nn = NnModel(F.values, d.labels)
    assert all(nn_classify(nn, F.values[i], exclude=i) == d.labels[i] for i in range(4))
