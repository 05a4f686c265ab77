import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levyregen.decompose import (add_killing, cf_consistency, common_component, compensation_shift,
                                 convolve_laws, jump_count_statistics, models_match, reconcile)
from levyregen.levy_core import AtomicJumpMeasure, LevyModel, make_path, simulate
from levyregen.scenarios import random_common, random_cp


def cp(pairs, d=1):
    return AtomicJumpMeasure.from_pairs(pairs, dim=d)


class TestAlgebra:
    def test_common_component(self):
        nu, r1, r2 = common_component(cp([(1.0, 2.0), (2.0, 1.0)]), cp([(1.0, 0.5), (-1.0, 1.0)]))
        assert nu.atoms == cp([(1.0, 0.5)]).atoms
        assert r1.atoms == cp([(1.0, 1.5), (2.0, 1.0)]).atoms
        assert r2.atoms == cp([(-1.0, 1.0)]).atoms

    def test_compensation_shift_closed_ball(self):
        shift = compensation_shift(cp([(1.0, 2.0), (0.5, 1.0), (3.0, 4.0)]), cp([(-0.25, 4.0)]))
        assert shift.tolist() == [2.0 + 0.5 + 1.0]

    def test_convolution_adds_triplets(self):
        a = LevyModel.from_parts(0.1, 1.0, [(1.0, 1.0)])
        b = LevyModel.from_parts(0.2, 0.5, [(1.0, 2.0), (2.0, 1.0)])
        c = convolve_laws(a, b)
        assert c.sigma == ((1.5,),)
        assert c.jumps.atoms == cp([(1.0, 3.0), (2.0, 1.0)]).atoms
        np.testing.assert_allclose(c.continuous_drift, [0.3])

    def test_killed_inputs_refused(self):
        with pytest.raises(ValueError):
            convolve_laws(LevyModel.zero(kill_rate=1.0), LevyModel.zero())
        with pytest.raises(ValueError):
            add_killing(LevyModel.zero(kill_rate=1.0), 0.5)


class TestReconcile:
    def test_poisson_versus_killed_zero(self):
        r = reconcile(LevyModel.poisson(1.0), LevyModel.zero(kill_rate=1.0))
        assert r.equivalent_mod_cp_kill
        assert r.residual_a.atoms == cp([(1.0, 1.0)]).atoms and not r.residual_b
        assert (r.kill_a, r.kill_b) == (0.0, 1.0)
        assert models_match(r.common_law, LevyModel.zero())
        assert models_match(r.reassemble("a"), LevyModel.poisson(1.0))

    def test_gaussian_mismatch(self):
        r = reconcile(LevyModel.brownian(0.0, 1.0), LevyModel.brownian(0.0, 1.21))
        assert not r.equivalent_mod_cp_kill and r.common_law is None
        assert r.gaussian_mismatch == pytest.approx(0.21)
        with pytest.raises(ValueError):
            r.reassemble("a")

    def test_drift_between_jumps_decides(self):
        # same gamma but different small jumps: the drifts between jumps differ
        a = LevyModel([0.0], [[1.0]], cp([(0.5, 1.0)]))
        b = LevyModel([0.0], [[1.0]])
        assert not reconcile(a, b).equivalent_mod_cp_kill
        # large jumps are not compensated, so they never matter
        c = LevyModel([0.0], [[1.0]], cp([(2.0, 1.0)]))
        assert reconcile(c, b).equivalent_mod_cp_kill

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            reconcile(LevyModel.zero(1), LevyModel.zero(2))

    def test_json(self):
        out = reconcile(LevyModel.poisson(1.0), LevyModel.zero(kill_rate=1.0)).to_json()
        assert out["residual_a"] == [{"x": [1.0], "mass": 1.0}] and out["kill_b"] == 1.0


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**48), st.sampled_from([1, 2]))
def test_roundtrip_reassembles_exactly(seed, d):
    g = np.random.default_rng(seed)
    common = random_common(g, d)
    a = add_killing(convolve_laws(common, LevyModel.compound_poisson(random_cp(g, d))), 0.4)
    b = convolve_laws(common, LevyModel.compound_poisson(random_cp(g, d)))
    r = reconcile(a, b)
    assert r.equivalent_mod_cp_kill
    assert models_match(r.reassemble("a"), a) and models_match(r.reassemble("b"), b)
    assert r.reassemble("a").jumps.atoms == a.jumps.atoms
    bumped = LevyModel(b.gamma_array + 1e-3, b.sigma, b.jumps, b.kill_rate)
    assert not reconcile(a, bumped).equivalent_mod_cp_kill


class TestJumpCounts:
    def test_counts_by_atom(self):
        p = make_path(0.5, [0.0, 1.0, 0.0, 0.0], jump_times=[0.2, 0.9, 1.4], jump_sizes=[1.0, -1.0, 1.0])
        s = jump_count_statistics([p, p], [1.0], (0.0, 1.0))
        assert s.counts.tolist() == [1, 1]
        s = jump_count_statistics([p], [1.0, -1.0], (0.5, 1.5))
        assert s.counts.tolist() == [2]

    def test_interval_beyond_horizon(self):
        with pytest.raises(ValueError):
            jump_count_statistics([make_path(0.5, [0.0, 0.0])], [1.0], (0.0, 1.0))

    def test_poisson_counts(self):
        m = LevyModel.compound_poisson([(1.0, 1.0), (-1.0, 2.0)])
        paths = [simulate(m, 1.0, 2.0**-4, s) for s in range(4000)]
        s = jump_count_statistics(paths, [-1.0])
        assert abs(s.mean - 2.0) < 3 * s.sem
        assert 0.9 < s.dispersion < 1.1


def test_cf_consistency_holds():
    common = LevyModel.from_parts(0.2, 0.5, [(0.5, 1.0)])
    a = add_killing(convolve_laws(common, LevyModel.compound_poisson([(1.5, 1.0)])), 0.3)
    b = convolve_laws(common, LevyModel.compound_poisson([(-0.25, 2.0)]))
    checks = cf_consistency(reconcile(a, b), 1.0, [0.5, 1.0, 2.0], 6000, 3)
    assert all(c.ok for c in checks)
