import json
import math

import numpy as np
import pytest

from threshold_lab.cover import cover_cost
from threshold_lab.fragmentation import (
    ConstantsProfile,
    ProfileError,
    Sampling,
    build_profile,
    constant_objective,
    dcl_verify,
    fragment_once,
    good_fraction,
    induction_step_check,
    m_level,
    minimal_l0,
    optimize_constants,
    recheck_trace,
    recombination_holds,
    run_induction,
    scan_W,
    sum2_chain,
    verify_covering_theorem,
)
from threshold_lab.generators import random_family
from threshold_lab.measures import mu_upset_exact
from threshold_lab.setfam import Family, mask_from_indices


def fam(n, *sets):
    return Family.from_sets(n, sets)


MAIN3 = build_profile("main3")
SMALL3 = build_profile("main3", L=10, strict=False)


class TestConstants:
    def test_objective_at_half(self):
        assert constant_objective(0.5) == 4.0

    def test_optimum(self):
        L, d = optimize_constants()
        assert 3.997 <= L <= 3.999 and L <= 3.9985
        assert 0.48 < d < 0.50

    def test_unimodal_on_dense_grid(self):
        _, d_star = optimize_constants()
        deltas = np.linspace(0.0, 1.0, 10**5 + 2)[1:-1]
        with np.errstate(over="ignore"):
            g = 2.0 ** (1.0 / deltas) / np.log2(1.0 / deltas)
        finite = np.isfinite(g)
        deltas, g = deltas[finite], g[finite]
        sign = np.sign(np.diff(g))
        i = int(np.argmin(g))
        assert (sign[: i - 1] < 0).all() and (sign[i + 1 :] > 0).all()
        assert abs(deltas[i] - d_star) < 1e-4

    def test_small_grid_rejected(self):
        with pytest.raises(ValueError):
            optimize_constants(grid=10)

    def test_main4_epsilon(self):
        P = build_profile("main4", 4.2, 0.5)
        assert P.epsilon == pytest.approx(math.sqrt(4.2) / 2 - 1, abs=1e-15)
        assert P.c == 1.0
        assert (1 + P.epsilon / 3) ** (P.l0 - P.l0 // 2) >= 2
        assert (1 + P.epsilon / 3) ** (P.l0 - 1 - (P.l0 - 1) // 2) < 2

    def test_minimal_l0_example(self):
        assert minimal_l0(1.0, 0.5) == 5

    def test_main3(self):
        assert MAIN3.c == 0.1 and MAIN3.delta == 0.9 and MAIN3.nominal
        assert MAIN3.good_threshold(3) == 2.0**-5

    @pytest.mark.parametrize("args", [
        ("main4", 4.0, 0.5),        # epsilon = 0 exactly
        ("main4", 3.0, 0.5),        # epsilon < 0
        ("main4", 1e6, 0.5),        # epsilon >= 3
        ("main4", 4.2, 1.2),
        ("cubic", 4.2, 0.5),
    ])
    def test_rejections(self, args):
        with pytest.raises(ProfileError):
            build_profile(*args)

    def test_main3_needs_large_L(self):
        with pytest.raises(ProfileError):
            build_profile("main3", L=10)
        assert not SMALL3.nominal

    def test_bell(self):
        B = build_profile("bell", 4.2, 0.5, epsilon1=0.1)
        assert B.base_level == 9
        assert B.target_fraction(3) == pytest.approx(0.9)
        with pytest.raises(ProfileError):
            build_profile("bell", 4.2, 0.5)

    def test_round_trip(self):
        P = build_profile("main4", 4.2, 0.5)
        assert ConstantsProfile.from_dict(json.loads(json.dumps(P.to_dict()))) == P


class TestArithmetic:
    def test_m_level_main3(self):
        assert m_level(MAIN3, 0.001, 100, 1) == 100

    def test_m_level_main4_adds_base_term(self):
        P = build_profile("main4", 4.2, 0.5)
        x = 4.2 * 0.01 * 50 * math.log2(3) + 1000 * 0.01 * 50 * math.log2(P.l0 + 1)
        assert m_level(P, 0.01, 50, 2) == math.floor(x)

    def test_m_level_bell(self):
        B = build_profile("bell", 4.2, 0.5, epsilon1=0.1)
        assert 96 * math.log2(10) == pytest.approx(318.905, abs=1e-3)
        assert m_level(B, 0.01, 100, 0) == math.floor(96 * math.log2(10))

    def test_recombination_main3_grid(self):
        for N in range(1, 31, 3):
            for l in range(1, 21):
                for p in (0.001, 0.01, 0.1, 0.5, 1.0):
                    assert recombination_holds(MAIN3, p, N, l)

    def test_sum2_tail_leg_at_l10(self):
        legs = dict((name, (a, b, ok)) for name, a, b, ok in sum2_chain(MAIN3, 10))
        tail, closed, ok = legs["tail <= closed"]
        assert tail == pytest.approx(100.0**-10, rel=1e-12)
        assert closed == pytest.approx(100.0**-9 * 2**11, rel=1e-12)
        assert ok

    def test_sum2_closed_leg_small_l(self):
        # at l=1 the tail alone is 10 * 1/1000 * ... = 0.01, already above 1/128
        legs = {name: ok for name, _, _, ok in sum2_chain(MAIN3, 1)}
        assert legs["closed <= target"] is False


class TestFragmentOnce:
    H = fam(4, [0, 1], [2, 3])

    def test_example(self):
        r = fragment_once(self.H, 1, 2, MAIN3, 0.4)
        assert r.H_prime.original_sets() == [[1], [2, 3]]
        assert r.G_W.original_sets() == [[2, 3]]
        assert r.sigma == pytest.approx(0.16, abs=1e-15)
        assert r.threshold == 0.0625 and not r.good

    def test_empty_W(self):
        r = fragment_once(self.H, 0, 2, MAIN3, 0.4)
        assert r.H_prime == self.H

    def test_small_members_always_good(self):
        r = fragment_once(fam(5, [0], [1, 2]), 0, 3, MAIN3, 0.9)
        assert len(r.G_W) == 0 and r.sigma == 0.0 and r.good

    def test_not_bounded(self):
        with pytest.raises(ValueError):
            fragment_once(self.H, 0, 1, MAIN3, 0.4)


class TestScan:
    def test_all_bad_small_instance(self):
        gf = good_fraction(fam(4, [0, 1], [2, 3]), 2, SMALL3, 0.4)
        assert gf.fraction_bad == 1.0 and not gf.within_budget and gf.n_drawn == 4

    def test_all_good(self):
        gf = good_fraction(fam(6, [0], [1]), 2, SMALL3, 0.2)
        assert gf.fraction_bad == 0.0 and gf.within_budget

    def test_w_exceeds_N(self):
        with pytest.raises(ValueError):
            scan_W(fam(4, [0, 1]), 2, MAIN3, 0.4)

    def test_dcl_example(self):
        H = fam(8, [0, 1], [2, 3], [4, 5], [1, 6])
        res = dcl_verify(H, 2, MAIN3, 0.0015)
        assert res.w == 1 and res.exhaustive and res.holds and res.sigma_dominates_mu
        assert res.rhs == pytest.approx(8 / (8 * 16**2))

    def test_dcl_trivial(self):
        res = dcl_verify(fam(8, [0], [3]), 2, MAIN3, 0.0015)
        assert res.lhs == 0.0 and res.holds

    def test_dcl_w_zero_flagged(self):
        assert dcl_verify(fam(8, [0, 1]), 2, MAIN3, 0.0001).degenerate

    @pytest.mark.parametrize("seed", range(10))
    def test_markov_and_sigma_dominance(self, seed):
        H = random_family(9, 3, 5, seed)
        w, recs, draws = scan_W(H, 3, SMALL3, 0.25)
        gf = good_fraction(H, 3, SMALL3, 0.25)
        assert gf.fraction_bad <= gf.markov_bound + 1e-12
        for r in recs:
            assert r.mu == pytest.approx(mu_upset_exact(r.G_W, 0.25), abs=1e-15)
            assert r.mu <= r.sigma + 1e-15
            assert r.good == (r.sigma <= r.threshold)

    def test_sampled_agrees_with_exhaustive(self):
        H = random_family(10, 3, 6, 2)
        ex = good_fraction(H, 3, SMALL3, 0.25)
        sm = good_fraction(H, 3, SMALL3, 0.25, Sampling(4000, 7))
        se = math.sqrt(max(ex.fraction_bad * (1 - ex.fraction_bad), 1e-12) / 4000)
        assert abs(sm.fraction_bad - ex.fraction_bad) <= 3 * se + 1e-12
        assert not sm.exhaustive


class TestInductionStep:
    def test_step_on_good_W(self):
        H = fam(8, [0, 1, 2, 3])
        p = 2 ** -0.25
        P = build_profile("main3", L=2, strict=False)
        w, recs, _ = scan_W(H, 4, P, p)
        good = [r for r in recs if r.good]
        assert good
        step = induction_step_check(H, good[0].W, 4, P, p, record=good[0])
        assert step.lift_ok and step.l1 == 3
        assert step.f_H == pytest.approx(0.5, abs=1e-12)

    def test_empty_G_degenerates(self):
        H = fam(6, [0], [1, 2])
        step = induction_step_check(H, 0, 3, MAIN3, 0.3)
        assert step.f_G == 0.0 and step.f_H_tilde == pytest.approx(step.f_H_prime)
        assert step.legs[1][3]

    def test_bad_W_rejected(self):
        with pytest.raises(ValueError):
            induction_step_check(fam(4, [0, 1], [2, 3]), 1, 2, MAIN3, 0.4)

    @pytest.mark.parametrize("seed", range(20))
    def test_subadditivity_leg(self, seed):
        rng = np.random.default_rng(seed)
        H = random_family(8, 3, 4, seed)
        W = int(rng.integers(0, 1 << 8))
        r = fragment_once(H, W, 3, MAIN3, 0.3)
        assert cover_cost(r.H_tilde, 0.3).cost >= cover_cost(r.H_prime, 0.3).cost - cover_cost(r.G_W, 0.3).cost - 1e-12


class TestVerdict:
    def test_degenerate_pass(self):
        v = verify_covering_theorem(fam(5, [0]), 0.4, MAIN3, 1)
        assert v.hypothesis_holds and v.degenerate and v.passed and v.m_l >= 5

    def test_empty_family(self):
        v = verify_covering_theorem(Family(5), 0.4, MAIN3, 1)
        assert not v.hypothesis_holds and not v.passed

    def test_base_case(self):
        v = verify_covering_theorem(Family(5, (0,)), 0.4, MAIN3, 0)
        assert v.hypothesis_holds and v.passed and v.achieved_fraction == 1.0

    def test_non_degenerate_level(self):
        P = build_profile("main3", L=0.5, strict=False)
        v = verify_covering_theorem(fam(8, [0, 1, 2, 3]), 2 ** -0.25, P, 4)
        assert not v.degenerate and v.m_l < 8
        assert v.passed == (v.hypothesis_holds and v.achieved_fraction >= v.target_fraction)

    def test_bell_base_labelled(self):
        B = build_profile("bell", 4.2, 0.5, epsilon1=0.1)
        v = verify_covering_theorem(fam(6, [0]), 0.6, B, B.base_level)
        assert "Bell" in v.note


class TestTrace:
    H = fam(8, [0, 1, 2, 3])
    p = 2 ** -0.25
    P = build_profile("main3", L=2, strict=False)

    def test_depth_and_round_trip(self):
        tr = run_induction(self.H, self.p, self.P, 4)
        assert tr.depth >= 2 and tr.certifying
        statuses = [n.status for n in tr.root.nodes()]
        assert statuses[0] == "recursed"
        res = recheck_trace(json.loads(tr.to_json()))
        assert res.ok

    def test_depth_cap_one(self):
        tr = run_induction(self.H, self.p, self.P, 4, depth_cap=1)
        assert tr.depth == 1 and tr.root.status in ("depth_cap", "stuck")
        assert len(tr.root.records) == math.comb(8, self.P.w_size(self.p, 8))

    def test_tampered_trace_detected(self):
        data = json.loads(run_induction(self.H, self.p, self.P, 4).to_json())
        data["root"]["records"][0]["sigma"] += 0.25
        res = recheck_trace(data)
        assert not res.identical and res.sigma_mismatches == 1

    def test_stuck(self):
        tr = run_induction(fam(4, [0, 1], [2, 3]), 0.4, SMALL3, 2)
        assert tr.root.status == "stuck" and tr.root.child is None

    def test_w_exceeds_N(self):
        tr = run_induction(fam(4, [0, 1], [2, 3]), 0.4, MAIN3, 2)
        assert tr.root.status == "w_exceeds_N"

    def test_sampled_trace_non_certifying(self):
        tr = run_induction(self.H, self.p, self.P, 4, sampling=Sampling(50, 3))
        assert not tr.certifying
        assert recheck_trace(json.loads(tr.to_json())).ok
