import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levyregen.ctmc import (DEAD, AtTime, CTMCPath, Earliest, FirstEntry, FirstJumpTime, RateMatrix,
                            concatenate_ctmc, ctmc_rule_from_json, ctmc_rule_to_json, iter_ctmc_direct,
                            iter_ctmc_regen, simulate_ctmc, simulate_until, state_counts,
                            state_marginal, transition_matrix)
from levyregen.stats import chi_square_gof

Q3 = RateMatrix([[-2.0, 1.0, 1.0], [1.0, -1.5, 0.5], [0.3, 0.2, -0.5]])
FLIP = RateMatrix([[-1.0, 1.0], [1.0, -1.0]])


class TestRateMatrix:
    def test_validation(self):
        with pytest.raises(ValueError):
            RateMatrix([[-1.0, -1.0], [0.0, 0.0]])
        with pytest.raises(ValueError):
            RateMatrix([[-1.0, 2.0], [0.0, 0.0]])
        with pytest.raises(ValueError):
            RateMatrix([[0.0, 0.0]])

    def test_kill_rates(self):
        q = RateMatrix.from_off_diagonal([[0, 1], [2, 0]], kill=[0.5, 0.0])
        assert q.kill_rates.tolist() == [0.5, 0.0]
        assert q.exit_rates.tolist() == [1.5, 2.0]

    def test_json(self):
        assert RateMatrix.from_json(Q3.to_json()) == Q3


class TestSimulation:
    def test_reproducible(self):
        assert simulate_ctmc(Q3, 0, 5.0, 3) == simulate_ctmc(Q3, 0, 5.0, 3)

    def test_state_at_right_continuous(self):
        p = CTMCPath(0, (1.0, 2.0), (1, 0), 3.0)
        assert [p.state_at(t) for t in (0.0, 0.99, 1.0, 2.5)] == [0, 0, 1, 0]

    def test_flip_chain_matches_expm(self):
        paths = list(iter_ctmc_direct(FLIP, 0, 1.0, 4000, 1))
        counts = state_counts(paths, 1.0, 2)
        expected = transition_matrix(FLIP, 1.0)[0]
        assert expected[0] == pytest.approx(0.5 * (1 + math.exp(-2.0)))
        assert chi_square_gof(counts, expected)[1] > 0.001

    def test_killing_absorbs(self):
        q = RateMatrix.from_off_diagonal([[0, 1], [1, 0]], kill=1.0)
        for s in range(50):
            p = simulate_ctmc(q, 0, 10.0, s)
            p.validate()
            if DEAD in p.states:
                assert p.zeta == p.times[-1]

    def test_until_is_prefix(self):
        full = simulate_ctmc(Q3, 1, 5.0, 8)
        part, t = simulate_until(Q3, 1, 5.0, 8, FirstEntry({0}))
        assert part.times == full.times[: len(part.times)]
        assert t == FirstEntry({0}).time(full)


class TestRules:
    def test_values(self):
        p = CTMCPath(0, (0.5, 1.2, 2.0), (1, 2, 0), 3.0)
        assert AtTime(1.0).time(p) == 1.0
        assert FirstJumpTime().time(p) == 0.5
        assert FirstEntry({0}).time(p) == 2.0
        assert FirstEntry({2, 1}).time(p) == 0.5
        assert Earliest(FirstEntry({0}), AtTime(1.0)).time(p) == 1.0
        assert FirstEntry({0}).time(CTMCPath(0, (), (), 3.0)) == math.inf

    @pytest.mark.parametrize("data", [{"det": 1.0}, {"first_jump": True}, {"first_entry": [0, 2]},
                                      {"min": [{"first_jump": True}, {"det": 0.5}]}])
    def test_json(self, data):
        assert ctmc_rule_to_json(ctmc_rule_from_json(data)) == data


class TestRegeneration:
    @pytest.mark.parametrize("rule", [AtTime(1.0), FirstJumpTime(), FirstEntry({0}),
                                      Earliest(FirstJumpTime(), AtTime(0.5))], ids=str)
    def test_law_matches_expm(self, rule):
        outs = list(iter_ctmc_regen(Q3, rule, 2, 2.0, 3000, 11))
        assert not any(o.stalled for o in outs)
        counts = state_counts([o.path for o in outs], 2.0, 3)
        assert chi_square_gof(counts, transition_matrix(Q3, 2.0)[2])[1] > 0.001

    def test_stall_detector(self):
        fast = RateMatrix.from_off_diagonal([[0, 1e6], [1e6, 0]])
        out = concatenate_ctmc(fast, FirstJumpTime(), 0, 1.0, 0, n_max=500)
        assert out.stalled and out.segments_used == 500

    def test_regeneration_times_increase(self):
        out = concatenate_ctmc(Q3, FirstJumpTime(), 0, 5.0, 4)
        assert all(b > a for a, b in zip(out.regeneration_times, out.regeneration_times[1:]))
        out.path.validate()

    def test_bad_start(self):
        with pytest.raises(ValueError):
            concatenate_ctmc(Q3, FirstJumpTime(), 5, 1.0, 0)

    def test_state_marginal_sums_to_one(self):
        paths = list(iter_ctmc_direct(Q3, 0, 1.0, 100, 2))
        assert state_marginal(paths, 0.5, 3).sum() == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**40), st.integers(0, 2))
def test_regen_paths_valid(seed, x):
    q = RateMatrix.from_off_diagonal([[0, 1, 2], [1, 0, 1], [3, 1, 0]], kill=0.2)
    out = concatenate_ctmc(q, Earliest(FirstJumpTime(), AtTime(0.3)), x, 3.0, seed, n_max=200)
    out.path.validate()
    assert out.path.initial == x


def test_transition_matrix_rows_sum_to_one():
    q = RateMatrix.from_off_diagonal([[0, 1], [1, 0]], kill=0.5)
    p = transition_matrix(q, 2.0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0)
    assert p[-1, -1] == 1.0
