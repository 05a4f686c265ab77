import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levyregen.levy_core import LevyModel, simulate
from levyregen.regen import (collect_marginals, concatenate, direct_marginals, iter_concatenated,
                             law_equality_tests, regen_marginals, renewal_count, stopped_after_death,
                             strong_markov_diagnostic)
from levyregen.rng import derive_seed
from levyregen.stats import SampleSizeError, TestReport
from levyregen.stopping import (Deterministic, FirstExit, FirstJump, HalfFirstJump, LastZero, MinOf,
                                PilotError)

STEP = 2.0**-8


class TestConcatenate:
    def test_deterministic_segments(self, bm):
        out = concatenate(bm, Deterministic(1.0), 4.0, seed=3, step=STEP)
        assert out.regeneration_times == (1.0, 2.0, 3.0, 4.0)
        assert out.segments_used == 4 and not out.stalled
        y = out.path.points[:, 0]
        for k in range(4):
            x = simulate(bm, 4.0, STEP, derive_seed(3, k)).points[:, 0]
            np.testing.assert_allclose(y[256 * k: 256 * (k + 1) + 1] - y[256 * k], x[:257], atol=1e-12)

    def test_reproducible(self, bm_cp_killed):
        rule = MinOf(FirstExit(1.0), Deterministic(1.0))
        a = concatenate(bm_cp_killed, rule, 4.0, seed=5, step=STEP)
        b = concatenate(bm_cp_killed, rule, 4.0, seed=5, step=STEP)
        assert a.path.identical_to(b.path)
        assert a.regeneration_indices == b.regeneration_indices

    def test_zero_model_stays_zero(self):
        out = concatenate(LevyModel.zero(), Deterministic(1.0), 4.0, seed=1, step=STEP)
        assert not np.any(out.path.points)

    def test_half_first_jump_freezes_poisson(self):
        # every segment is cut before its first jump, so the glued path never moves
        out = concatenate(LevyModel.poisson(1.0), HalfFirstJump(), 4.0, seed=2, step=STEP)
        assert not np.any(out.path.points)

    def test_death_absorbs(self, bm_cp_killed):
        for seed in range(30):
            out = concatenate(bm_cp_killed, FirstJump(), 4.0, seed=seed, step=STEP)
            out.path.validate()

    def test_stall_detected(self):
        out = concatenate(LevyModel.poisson(1.0), HalfFirstJump(), 4.0, seed=0, n_max=2, step=STEP)
        assert out.stalled and out.segments_used == 2

    def test_pilot_refuses_zero_rule(self, bm):
        with pytest.raises(PilotError):
            concatenate(bm, Deterministic(0.0), 1.0, seed=0, step=STEP)

    def test_killed_segment_may_stop_after_death(self, bm_cp_killed):
        assert stopped_after_death(bm_cp_killed, FirstExit(1.0), 2000, 4) > 0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**40))
def test_glued_path_is_valid(seed):
    m = LevyModel.from_parts(0.2, 1.0, [(1.0, 1.0), (-1.0, 1.0)], kill_rate=0.7)
    out = concatenate(m, MinOf(FirstExit(1.0), Deterministic(1.0)), 4.0, seed=seed, n_max=200, step=STEP)
    out.path.validate()
    idx = np.array(out.regeneration_indices)
    assert np.all(np.diff(idx) >= 0)


class TestLawEquality:
    def test_bm_first_exit(self, bm):
        times = [0.5, 1.0, 2.0, 4.0]
        y = regen_marginals(bm, FirstExit(1.0), times, 3000, 17)
        x = direct_marginals(bm, times, 3000, 18)
        report = TestReport.from_tests(law_equality_tests("bm", y.values, x.values, times))
        assert report.overall_verdict

    def test_killed_first_jump(self, bm_cp_killed):
        times = [0.5, 1.0, 2.0]
        y = regen_marginals(bm_cp_killed, FirstJump(), times, 3000, 21)
        x = direct_marginals(bm_cp_killed, times, 3000, 22)
        report = TestReport.from_tests(law_equality_tests("k", y.values, x.values, times))
        assert report.overall_verdict
        assert y.n_stalled == 0

    def test_half_jump_rejected(self):
        m = LevyModel.poisson(1.0)
        y = regen_marginals(m, HalfFirstJump(), [1.0], 2000, 1)
        x = direct_marginals(m, [1.0], 2000, 2)
        report = TestReport.from_tests(law_equality_tests("p", y.values, x.values, [1.0]))
        assert report.min_adjusted_p < 1e-6

    def test_collect_marginals_shape(self, bm):
        paths = [simulate(bm, 1.0, STEP, s) for s in range(5)]
        assert collect_marginals(paths, [0.5, 1.0], STEP).shape == (5, 2, 1)


class TestRenewal:
    def test_deterministic_count_exact(self, bm):
        s = renewal_count(bm, Deterministic(1.0), 4.0, 50, 3)
        assert np.all(s.counts == 4) and s.stable

    def test_first_jump_count_is_poisson_like(self):
        # gaps are grid-rounded Exp(2), so the count in [0, 2] has mean close to 4
        s = renewal_count(LevyModel.poisson(2.0), FirstJump(), 2.0, 1000, 5, horizon=4.0)
        assert abs(s.mean - 4.0) < 4 * s.sem + 0.05
        assert s.stable


class TestStrongMarkov:
    def test_first_exit_passes(self, bm):
        assert strong_markov_diagnostic(bm, FirstExit(1.0), 3000, 2024).overall_verdict

    def test_last_zero_rejects(self):
        r = strong_markov_diagnostic(LevyModel.brownian(-0.5, 1.0), LastZero(4.0), 3000, 9)
        assert r.min_adjusted_p < 1e-3

    def test_too_few_usable(self, bm):
        with pytest.raises(SampleSizeError):
            strong_markov_diagnostic(bm, FirstExit(1.0), 100, 1)

    def test_iter_seeds_distinct(self, bm):
        outs = list(iter_concatenated(bm, Deterministic(1.0), 3, 4, 2.0, STEP))
        assert not outs[0].path.identical_to(outs[1].path)
