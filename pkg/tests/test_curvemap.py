from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apalm.curvemap import (CurveMap, CurveStructureError, IntervalDescriptor,
                            LookupError_)
from apalm.problems import SolutionPoint


def pt(u, lam=0.0):
    return SolutionPoint(np.array([float(u)]), lam)


@dataclass
class FakeResult:
    distances: list
    solutions: list
    closing_distance: float = 0.0


def make_map(s_coords, branch=0):
    sols = [pt(float(i)) for i in range(len(s_coords))]
    return CurveMap.from_serial(branch, sols, list(s_coords))


class TestInit:
    def test_xi_is_normalized_s(self):
        m = make_map([0.0, 1.0, 2.0])
        assert m.xi_keys() == [0.0, 0.5, 1.0]

    def test_roof_style_spacing(self):
        m = make_map([0.0, 30.0, 60.0, 90.0])
        assert m.xi_keys() == pytest.approx([0.0, 1 / 3, 2 / 3, 1.0])

    def test_single_interval(self):
        m = make_map([0.0, 0.7])
        assert m.xi_keys() == [0.0, 1.0]

    def test_levels_and_prev(self):
        m = make_map([0.0, 1.0, 2.0])
        e0 = m.lookup(0.0)
        e1 = m.lookup(0.5)
        assert e0.level == 0 and e1.level == 0
        assert e0.w_prev is None
        assert e1.w_prev is e0.w

    def test_non_monotone_rejected(self):
        with pytest.raises(CurveStructureError):
            make_map([0.0, 2.0, 1.0])

    def test_nonzero_start_rejected(self):
        with pytest.raises(CurveStructureError):
            make_map([1.0, 2.0])


class TestLookup:
    def test_fresh_map(self):
        m = make_map([0.0, 1.0, 2.0])
        e = m.lookup(0.0)
        assert e.s == 0.0 and e.level == 0 and e.w_prev is None

    def test_mid_entry(self):
        m = make_map([0.0, 1.0, 2.0])
        e = m.lookup(0.5)
        assert e.s == 1.0 and e.w_prev is not None

    def test_unknown_key(self):
        m = make_map([0.0, 1.0])
        with pytest.raises(LookupError_):
            m.lookup(0.25)


def parent_2_4(m, level=1):
    # the [0.2, 0.4] interval of a map with s in {0, 2, 4, ..., 10}
    return IntervalDescriptor(branch=0, xi_lo=0.2, xi_hi=0.4, delta_L0=2.0,
                              level=level)


def make_map_0_10():
    return make_map([0.0, 2.0, 4.0, 6.0, 8.0, 10.0])


class TestInsertInterior:
    def test_hand_example(self):
        m = make_map_0_10()
        res = FakeResult(distances=[0.8, 1.2],
                         solutions=[m.lookup(0.2).w, pt(10.0), pt(11.0)])
        m.insert_interior(parent_2_4(m), res)
        keys = m.xi_keys()
        assert 0.28 in [pytest.approx(k) for k in keys]
        e = m.lookup(keys[2])
        assert e.s == pytest.approx(2.8)
        assert e.xi == pytest.approx(0.28)
        assert e.level == 1

    def test_midpoint_symmetry(self):
        m = make_map_0_10()
        res = FakeResult(distances=[1.0, 1.0],
                         solutions=[m.lookup(0.2).w, pt(10.0), pt(11.0)])
        m.insert_interior(parent_2_4(m), res)
        e = m.lookup(m.xi_keys()[2])
        assert (e.s, e.xi) == (pytest.approx(3.0), pytest.approx(0.3))

    def test_cumulative_three_steps(self):
        m = make_map_0_10()
        res = FakeResult(distances=[0.5, 0.5, 1.0],
                         solutions=[m.lookup(0.2).w, pt(10.0), pt(11.0),
                                    pt(12.0)])
        m.insert_interior(parent_2_4(m), res)
        keys = m.xi_keys()
        assert m.lookup(keys[2]).s == pytest.approx(2.5)
        assert m.lookup(keys[2]).xi == pytest.approx(0.25)
        assert m.lookup(keys[3]).s == pytest.approx(3.0)
        assert m.lookup(keys[3]).xi == pytest.approx(0.30)

    def test_no_existing_coordinate_changes(self):
        m = make_map_0_10()
        before = [(k, m.lookup(k).s) for k in m.xi_keys()]
        res = FakeResult(distances=[0.8, 1.2],
                         solutions=[m.lookup(0.2).w, pt(10.0), pt(11.0)])
        m.insert_interior(parent_2_4(m), res)
        for k, s in before:
            assert m.lookup(k).s == s

    def test_fine_endpoint_not_stored(self):
        m = make_map_0_10()
        res = FakeResult(distances=[1.0, 1.0],
                         solutions=[m.lookup(0.2).w, pt(10.0), pt(11.0)])
        m.insert_interior(parent_2_4(m), res)
        assert len(m) == 7  # one interior point added, not two


class TestInsertStretch:
    def test_hand_example_with_downstream_shift(self):
        m = make_map_0_10()
        res = FakeResult(distances=[1.0, 1.0],
                         solutions=[m.lookup(0.2).w, pt(10.0), pt(11.0)],
                         closing_distance=0.3)
        children = m.insert_stretch(parent_2_4(m), res, refine_lower=True,
                                    refine_upper=True)
        keys = m.xi_keys()
        # fine points: chord-length xi with the post-stretch total 2.3
        assert m.lookup(keys[2]).s == pytest.approx(3.0)
        assert m.lookup(keys[2]).xi == pytest.approx(0.2 + 0.2 * 1.0 / 2.3)
        assert m.lookup(keys[3]).s == pytest.approx(4.0)
        assert m.lookup(keys[3]).xi == pytest.approx(0.2 + 0.2 * 2.0 / 2.3)
        # old end keeps xi = 0.4 but shifts to s = 4.3; later points shift too
        assert m.lookup(0.4).s == pytest.approx(4.3)
        assert m.lookup(0.6).s == pytest.approx(6.3)
        assert m.lookup(1.0).s == pytest.approx(10.3)
        # both tolerances exceeded with N = 2: three children
        assert len(children) == 3
        assert children[-1].delta_L0 == pytest.approx(0.3)
        assert all(c.level == 2 for c in children)

    def test_zero_closing_distance_suppresses_closing_child(self):
        m = make_map_0_10()
        res = FakeResult(distances=[1.0, 1.0],
                         solutions=[m.lookup(0.2).w, pt(10.0), pt(11.0)],
                         closing_distance=0.0)
        children = m.insert_stretch(parent_2_4(m), res, refine_lower=True,
                                    refine_upper=True)
        keys = m.xi_keys()
        assert m.lookup(keys[2]).s == pytest.approx(3.0)
        assert m.lookup(keys[2]).xi == pytest.approx(0.3)
        assert m.lookup(0.4).s == pytest.approx(4.0)  # no shift
        # the would-be closing child is suppressed; two fine children remain
        assert len(children) == 2
        assert children[-1].xi_hi == 0.4

    def test_lower_only_children(self):
        m = make_map_0_10()
        res = FakeResult(distances=[1.0, 1.0],
                         solutions=[m.lookup(0.2).w, pt(10.0), pt(11.0)],
                         closing_distance=0.3)
        children = m.insert_stretch(parent_2_4(m), res, refine_lower=True,
                                    refine_upper=False)
        assert len(children) == 2

    def test_upper_only_children(self):
        m = make_map_0_10()
        res = FakeResult(distances=[1.0, 1.0],
                         solutions=[m.lookup(0.2).w, pt(10.0), pt(11.0)],
                         closing_distance=0.3)
        children = m.insert_stretch(parent_2_4(m), res, refine_lower=False,
                                    refine_upper=True)
        assert len(children) == 1
        assert children[0].delta_L0 == pytest.approx(0.3)

    def test_branch_end_xi_never_changes(self):
        m = make_map_0_10()
        res = FakeResult(distances=[1.0, 1.0],
                         solutions=[m.lookup(0.2).w, pt(10.0), pt(11.0)],
                         closing_distance=0.5)
        m.insert_stretch(parent_2_4(m), res, True, True)
        assert m.xi_keys()[-1] == 1.0


class TestCollect:
    def test_fresh_map(self):
        rows = make_map([0.0, 1.0, 2.0]).collect()
        assert len(rows) == 3
        assert all(level == 0 for _, _, _, level, _ in rows)

    def test_after_interior(self):
        m = make_map([0.0, 1.0, 2.0])
        parent = IntervalDescriptor(0, 0.0, 0.5, 1.0, level=1)
        res = FakeResult(distances=[0.5, 0.5],
                         solutions=[m.lookup(0.0).w, pt(10.0), pt(11.0)])
        m.insert_interior(parent, res)
        assert len(m.collect()) == 4

    def test_after_stretch(self):
        m = make_map([0.0, 1.0, 2.0])
        parent = IntervalDescriptor(0, 0.0, 0.5, 1.0, level=1)
        res = FakeResult(distances=[0.5, 0.5],
                         solutions=[m.lookup(0.0).w, pt(10.0), pt(11.0)],
                         closing_distance=0.2)
        m.insert_stretch(parent, res, True, True)
        assert len(m.collect()) == 5

    def test_sorted_by_xi(self):
        m = make_map([0.0, 1.0, 3.0])
        xis = [r[1] for r in m.collect()]
        assert xis == sorted(xis)


@st.composite
def insertion_sequences(draw):
    n0 = draw(st.integers(2, 5))
    gaps = draw(st.lists(st.floats(0.1, 3.0), min_size=n0, max_size=n0))
    ops = draw(st.lists(
        st.tuples(st.booleans(),  # stretch?
                  st.integers(0, 10**6),  # interval choice
                  st.lists(st.floats(0.05, 1.0), min_size=1, max_size=4),
                  st.floats(0.0, 0.5)),  # closing distance
        min_size=1, max_size=8))
    return gaps, ops


@given(insertion_sequences())
@settings(max_examples=60, deadline=None)
def test_monotonicity_under_random_insertions(seq):
    gaps, ops = seq
    s = [0.0]
    for g in gaps:
        s.append(s[-1] + g)
    m = make_map(s)
    counter = 100
    for is_stretch, pick, fracs, closing in ops:
        keys = m.xi_keys()
        i = pick % (len(keys) - 1)
        lo, hi = keys[i], keys[i + 1]
        width = m.lookup(hi).s - m.lookup(lo).s
        level = max(m.lookup(lo).level, m.lookup(hi).level) + 1
        parent = IntervalDescriptor(0, lo, hi, width, level)
        if is_stretch:
            dists = [f * width for f in fracs]
            res = FakeResult(
                distances=dists,
                solutions=[m.lookup(lo).w] + [pt(counter + k)
                                              for k in range(len(dists))],
                closing_distance=closing * width)
            m.insert_stretch(parent, res, True, True)
        else:
            # interior: fine path must fit strictly inside the parent
            total = sum(fracs) + 0.05
            dists = [f / total * width for f in fracs]
            res = FakeResult(
                distances=dists,
                solutions=[m.lookup(lo).w] + [pt(counter + k)
                                              for k in range(len(dists))])
            m.insert_interior(parent, res)
        counter += 10
        m.validate_monotone()
    rows = m.collect()
    xis = [r[1] for r in rows]
    ss = [r[2] for r in rows]
    assert all(a < b for a, b in zip(xis, xis[1:]))
    assert all(a < b for a, b in zip(ss, ss[1:]))
