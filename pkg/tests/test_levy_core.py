import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levyregen.levy_core import (CEMETERY, UNOBSERVED, AtomicJumpMeasure, GridError, LevyModel,
                                 PathValue, State, add_increment, apply_killing, grid_ceil,
                                 grid_index, load_model, make_path, marginal_at, restrict,
                                 save_model, simulate, splice)

STEP = 2.0**-8

lattice = st.integers(-8, 8).filter(bool).map(lambda k: k / 4.0)
masses = st.integers(1, 40).map(lambda k: k / 8.0)
measures = st.lists(st.tuples(lattice, masses), max_size=5).map(
    lambda pairs: AtomicJumpMeasure.from_pairs(pairs, dim=1))


class TestGrid:
    def test_index_exact(self):
        assert grid_index(1.0, STEP) == 256
        assert grid_index(0.0, STEP) == 0

    def test_off_grid_rejected(self):
        with pytest.raises(GridError):
            grid_index(0.001, STEP)
        with pytest.raises(GridError):
            grid_index(math.inf, STEP)

    def test_ceil(self):
        assert grid_ceil(0.30, STEP) == 77
        assert grid_ceil(0.5, STEP) == 128
        assert grid_ceil(math.inf, STEP) is None


class TestPathValue:
    def test_cemetery_absorbs(self):
        assert add_increment(CEMETERY, 3.0) is CEMETERY
        assert UNOBSERVED + 1.0 is UNOBSERVED
        assert PathValue.at(1.0) + CEMETERY is CEMETERY

    def test_point_addition(self):
        assert (PathValue.at([1.0, 2.0]) + [0.5, -1.0]).point == (1.5, 1.0)

    def test_variant_payload(self):
        with pytest.raises(ValueError):
            PathValue(State.CEMETERY, (1.0,))
        with pytest.raises(ValueError):
            PathValue(State.POINT)


class TestJumpMeasure:
    def test_merges_and_sorts(self):
        nu = AtomicJumpMeasure.from_pairs([(1.0, 0.5), (-1.0, 1), (1.0, 0.25)])
        assert nu.atoms == (((-1.0,), Fraction(1)), ((1.0,), Fraction(3, 4)))
        assert nu.total_mass == 1.75

    def test_rejects_origin_and_bad_mass(self):
        with pytest.raises(ValueError):
            AtomicJumpMeasure.from_pairs([(0.0, 1.0)])
        with pytest.raises(ValueError):
            AtomicJumpMeasure.from_pairs([(1.0, -1.0)])
        with pytest.raises(ValueError):
            AtomicJumpMeasure.from_pairs([(math.nan, 1.0)])

    def test_negative_zero_is_canonical(self):
        nu = AtomicJumpMeasure.from_pairs([([1.0, -0.0], 1.0), ([1.0, 0.0], 1.0)])
        assert len(nu) == 1

    def test_closed_ball_moment(self):
        # atoms on the unit sphere count, atoms outside do not
        nu = AtomicJumpMeasure.from_pairs([([1.0, 0.0], 2.0), ([0.0, -0.5], 1.0), ([2.0, 0.0], 5.0)])
        assert nu.ball_moment().tolist() == [2.0, -0.5]

    def test_subtract_requires_domination(self):
        a = AtomicJumpMeasure.from_pairs([(1.0, 1.0)])
        b = AtomicJumpMeasure.from_pairs([(1.0, 2.0)])
        with pytest.raises(ValueError):
            a.subtract(b)
        assert not b.subtract(b)

    @given(measures, measures)
    def test_min_split_reassembles_exactly(self, a, b):
        m = a.minimum(b)
        assert m.dominated_by(a) and m.dominated_by(b)
        assert (m + a.subtract(m)).atoms == a.atoms
        assert (m + b.subtract(m)).atoms == b.atoms

    @given(measures)
    def test_json_roundtrip(self, nu):
        assert AtomicJumpMeasure.from_json(nu.to_json(), 1).atoms == nu.atoms

    def test_json_keeps_inexact_masses(self):
        nu = AtomicJumpMeasure(1, (((1.0,), Fraction(1, 3)),))
        assert AtomicJumpMeasure.from_json(nu.to_json(), 1).atoms == nu.atoms


class TestLevyModel:
    def test_poisson_gamma_is_compensated(self):
        m = LevyModel.poisson(1.0)
        assert m.gamma == (1.0,)
        assert m.continuous_drift.tolist() == [0.0]

    def test_from_parts(self):
        m = LevyModel.from_parts(0.3, 1.0, [(1.0, 1.0), (-1.0, 1.0), (2.0, 0.5)])
        assert m.gamma == (0.3,)
        assert m.mean_rate().tolist() == pytest.approx([1.3])

    def test_validation(self):
        with pytest.raises(ValueError):
            LevyModel([0.0, 0.0], [[1.0, 2.0], [0.0, 1.0]])
        with pytest.raises(ValueError):
            LevyModel([0.0], [[-1.0]])
        with pytest.raises(ValueError):
            LevyModel.zero(kill_rate=-1.0)
        with pytest.raises(ValueError):
            LevyModel([0.0], [[1.0]], AtomicJumpMeasure.from_pairs([([1.0, 1.0], 1.0)]))

    def test_char_exponent_brownian(self):
        m = LevyModel.brownian(0.5, 2.0)
        assert m.char_exponent(1.5) == pytest.approx(1j * 0.75 - 0.5 * 2.0 * 2.25)

    def test_char_exponent_poisson(self):
        psi = LevyModel.poisson(2.0).char_exponent(0.7)
        assert psi == pytest.approx(2.0 * (np.exp(0.7j) - 1.0))

    def test_file_roundtrip(self, tmp_path, bm_cp_killed):
        save_model(bm_cp_killed, tmp_path / "m.json")
        assert load_model(tmp_path / "m.json") == bm_cp_killed


class TestSimulate:
    def test_same_seed_identical(self, bm_cp_killed):
        a = simulate(bm_cp_killed, 4.0, STEP, 7)
        b = simulate(bm_cp_killed, 4.0, STEP, 7)
        assert a.identical_to(b)
        assert not a.identical_to(simulate(bm_cp_killed, 4.0, STEP, 8))

    def test_structure(self, bm_cp_killed):
        for seed in range(50):
            p = simulate(bm_cp_killed, 4.0, STEP, seed)
            p.validate()
            assert p.n_steps == 1024

    def test_jumps_land_on_next_node(self):
        p = simulate(LevyModel.poisson(3.0), 4.0, STEP, 1)
        nodes = np.ceil(p.jump_times / STEP).astype(int)
        values = p.points[:, 0]
        assert np.all(values[nodes] - values[nodes - 1] >= 1.0)
        assert values[-1] == p.jump_times.size

    def test_zero_model(self):
        p = simulate(LevyModel.zero(), 1.0, STEP, 3)
        assert not np.any(p.points)

    def test_off_grid_horizon(self):
        with pytest.raises(GridError):
            simulate(LevyModel.zero(), 1.001, STEP, 0)
        with pytest.raises(ValueError):
            simulate(LevyModel.zero(), 1.0, -STEP, 0)

    def test_brownian_moments(self):
        m = LevyModel.brownian(0.3, 2.0)
        x = np.array([simulate(m, 1.0, 2.0**-4, s).points[-1, 0] for s in range(4000)])
        assert abs(x.mean() - 0.3) < 4 * math.sqrt(2.0 / 4000)
        assert abs(x.var() - 2.0) < 0.2


class TestPathOperations:
    def test_make_path_kills(self):
        p = make_path(0.5, [0.0, 1.0, 2.0, 3.0], death_index=2)
        assert p.value(1) == PathValue.at(1.0)
        assert p.value(2) is not None and p.value(2) == CEMETERY
        assert not p.alive(2) and p.alive(1)

    def test_marginal_at(self):
        p = make_path(0.5, [0.0, 1.0, 2.0])
        assert marginal_at(p, 1.0) == PathValue.at(2.0)
        with pytest.raises(GridError):
            marginal_at(p, 1.5)

    def test_apply_killing(self):
        p = make_path(0.5, [0.0, 1.0, 2.0, 3.0], jump_times=[0.4, 1.2], jump_sizes=[1.0, 1.0])
        k = apply_killing(p, 1.0)
        assert k.death_index == 2 and k.jump_times.tolist() == [0.4]
        assert apply_killing(p, math.inf) is p

    def test_splice_follows_increments(self):
        a = make_path(1.0, [0.0, 1.0, 2.0, 3.0])
        b = make_path(1.0, [0.0, -1.0, -5.0, -6.0], jump_times=[1.5], jump_sizes=[-4.0])
        y = splice(a, 1, b)
        assert y.points[:, 0].tolist() == [0.0, 1.0, 0.0, -4.0]
        assert y.jump_times.tolist() == [2.5]

    def test_splice_dead_prefix_unchanged(self):
        a = make_path(1.0, [0.0, 1.0, 2.0, 3.0], death_index=1)
        b = make_path(1.0, [0.0, 1.0, 2.0, 3.0])
        assert splice(a, 2, b) is a

    def test_splice_inherits_death(self):
        a = make_path(1.0, [0.0, 1.0, 2.0, 3.0])
        b = make_path(1.0, [0.0, 1.0, 2.0, 3.0], death_index=1)
        y = splice(a, 1, b)
        assert y.death_index == 2
        y.validate()

    def test_restrict(self):
        p = make_path(0.5, [0.0, 1.0, 2.0], jump_times=[0.5], jump_sizes=[1.0])
        closed = restrict(p, 0.5, closed=True)
        opened = restrict(p, 0.5, closed=False)
        assert closed.values == [PathValue.at(0.0), PathValue.at(1.0), UNOBSERVED]
        assert opened.values == [PathValue.at(0.0), UNOBSERVED, UNOBSERVED]
        assert closed.jump_events == [(0.5, (1.0,))] and opened.jump_events == []

    def test_csv(self):
        p = make_path(0.5, [0.0, 1.0], death_index=1)
        lines = p.to_csv().splitlines()
        assert lines[0].startswith("time")
        assert lines[-1].endswith("CEMETERY")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 256))
def test_splice_prefix_is_kept(seed, at):
    m = LevyModel.from_parts(0.1, 1.0, [(1.0, 1.0)], kill_rate=0.5)
    a, b = simulate(m, 1.0, STEP, seed), simulate(m, 1.0, STEP, seed + 1)
    y = splice(a, at, b)
    y.validate()
    assert y.states[: at + 1].tobytes() == a.states[: at + 1].tobytes()
    if a.alive(at):
        inc = y.points[at:] - y.points[at]
        expect = b.points[: 257 - at] - b.points[0]
        np.testing.assert_array_equal(np.isnan(inc), np.isnan(expect))
