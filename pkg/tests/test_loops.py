import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from heightspin.exact import height_marginal
from heightspin.graph import build_square_lattice, dual
from heightspin.loops import (
    HeightConfig,
    LoopError,
    count_loops,
    crossing_counts,
    event_by_level_lines,
    event_probabilities,
    explore,
    extract_level_lines,
    half_integers_between,
    loop_height_counts,
    loop_height_counts_all,
    loop_bound_violations,
    nearest_faces,
    path_edge_family,
    quadrant_event_sum,
    quadrant_paths,
    restricted_scan,
)
from heightspin.network import BudgetError
from heightspin.potential import gaussian


@pytest.fixture(scope="module")
def dual3():
    return dual(build_square_lattice(3))


@pytest.fixture(scope="module")
def dual4():
    return dual(build_square_lattice(4))


def heights(dg, values):
    return HeightConfig(dg, np.asarray(values))


def at(dg, x, y):
    return dg.site_at(x, y)


def test_constant_field_has_no_lines(dual2):
    h = heights(dual2, np.zeros(dual2.n_sites))
    for q in (-1.5, -0.5, 0.5, 2.5):
        assert extract_level_lines(h, q).loops == []
    assert loop_height_counts(h, 0) == (0, 0)


def test_q_must_be_half_integer(dual1):
    with pytest.raises(LoopError):
        extract_level_lines(heights(dual1, [0, 0, 0, 0]), 1.0)


def test_single_raised_face(dual2):
    f = at(dual2, 0.5, 0.5)
    n = np.zeros(dual2.n_sites, dtype=int)
    n[f] = 1
    lines = extract_level_lines(heights(dual2, n), 0.5)
    assert len(lines.loops) == 1
    loop = lines.loops[0]
    assert loop.orientation == 1 and loop.interior == {f}
    assert len(loop.half_edges) == 4


def test_right_hand_rule_figure(box1, dual1):
    # four faces around the centre vertex: 4 (SW), -5 (SE), -6 (NW), 7 (NE)
    n = np.zeros(4, dtype=int)
    n[at(dual1, -0.5, -0.5)] = 4
    n[at(dual1, 0.5, -0.5)] = -5
    n[at(dual1, -0.5, 0.5)] = -6
    n[at(dual1, 0.5, 0.5)] = 7
    h = heights(dual1, n)
    c, s, e, w, nn = 4, 1, 5, 3, 7
    for q in (-4.5, -0.5, 0.5, 3.5):
        succ = {}
        for lp in extract_level_lines(h, q).loops:
            hs = lp.half_edges
            for a, b in zip(hs, hs[1:] + hs[:1]):
                succ[a] = b
        # the line coming up from the south turns east, the one from the north turns west
        assert succ[box1.half_edge(s, c)] == box1.half_edge(c, e)
        assert succ[box1.half_edge(nn, c)] == box1.half_edge(c, w)


def test_nested_plateau(dual2):
    f = at(dual2, 0.5, 0.5)
    n = np.ones(dual2.n_sites, dtype=int)
    n[f] = 2
    h = heights(dual2, n)
    assert count_loops(h, f, 0.5, 1) == 1
    assert count_loops(h, f, 1.5, 1) == 1
    assert count_loops(h, f, 1.5, -1) == 0
    assert loop_height_counts(h, f) == (2, 2)


def test_half_integers_between():
    assert half_integers_between(-1, 2) == [-0.5, 0.5, 1.5]
    assert half_integers_between(3, 1) == [1.5, 2.5]
    assert half_integers_between(0, 0) == []


def _segments(h, q):
    return {he for lp in extract_level_lines(h, q).loops for he in lp.half_edges}


config3 = st.integers(0, 2**32 - 1).map(lambda s: np.random.default_rng(s))


@given(seed=st.integers(0, 2**32 - 1), hmax=st.integers(1, 4))
@settings(max_examples=60, deadline=None)
def test_crossing_identity_and_loops_to_height(dual3, seed, hmax):
    h = heights(dual3, np.random.default_rng(seed).integers(-hmax, hmax + 1, size=dual3.n_sites))
    counts, diff = crossing_counts(h)
    assert np.array_equal(counts, diff)
    a, b = loop_height_counts_all(h)
    assert np.all(a >= b)
    f = int(np.random.default_rng(seed).integers(dual3.n_sites))
    assert loop_height_counts(h, f) == (a[f], b[f])


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_contours_do_not_cross(dual3, seed):
    h = heights(dual3, np.random.default_rng(seed).integers(-3, 4, size=dual3.n_sites))
    ctx_g = dual3.primal
    for q in half_integers_between(-3, 3):
        loops = extract_level_lines(h, q).loops
        used = [he for lp in loops for he in lp.half_edges]
        # each traversal slot is used once and never in both directions
        assert len(used) == len(set(used))
        assert not any((he ^ 1) in set(used) for he in used)
        # at every vertex incoming and outgoing lines alternate around the rotation
        seg = set(used)
        for v in range(ctx_g.n_vertices):
            marks = []
            for he in ctx_g.rotation[v]:
                if he in seg:
                    marks.append(1)
                elif he ^ 1 in seg:
                    marks.append(-1)
            assert all(a != b for a, b in zip(marks, marks[1:] + marks[:1])) or not marks


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_negation_reverses_segments(dual3, seed):
    """The q-lines of -n are the (-q)-lines of n run backwards."""
    n = np.random.default_rng(seed).integers(-3, 4, size=dual3.n_sites)
    h, hn = heights(dual3, n), heights(dual3, -n)
    for q in half_integers_between(-3, 3):
        assert _segments(hn, -q) == {he ^ 1 for he in _segments(h, q)}


def test_negation_can_change_loop_counts(dual2):
    """With a fixed turn rule a diagonal pair of raised faces forms one loop
    while the lowered pair forms two, so whole-loop counts are not symmetric
    under n -> -n."""
    a, b = at(dual2, -0.5, -0.5), at(dual2, 0.5, 0.5)
    n = np.zeros(dual2.n_sites, dtype=int)
    n[[a, b]] = 1
    up = extract_level_lines(heights(dual2, n), 0.5).loops
    down = extract_level_lines(heights(dual2, -n), -0.5).loops
    assert len(up) != len(down)
    assert sorted(len(lp.half_edges) for lp in up + down) == [4, 4, 8]


# -- exploration ---------------------------------------------------------------------


def _corner_pair(dg):
    f0 = at(dg, 0.5, 0.5)
    return f0, quadrant_paths(dg, f0, 1)[0][0]


def test_explore_immediate_failure(dual2):
    f0, (gamma, e) = _corner_pair(dual2)
    n = np.zeros(dual2.n_sites, dtype=int)
    h = heights(dual2, n)
    res = explore(h, gamma, e, 0.5)
    assert not res.success
    ctx_left = dual2.primal
    h0 = ctx_left.half_edge(*e)
    plus, minus = dual2.site_of_face(ctx_left.left_face(h0)), dual2.site_of_face(ctx_left.right_face(h0))
    assert res.revealed == [plus, minus]


def test_explore_single_loop(dual2):
    f0, _ = _corner_pair(dual2)
    n = np.zeros(dual2.n_sites, dtype=int)
    n[f0] = 1
    h = heights(dual2, n)
    lhs, rhs = quadrant_event_sum(h, f0, 0.5)
    assert lhs == 4 and rhs >= 4


def test_explore_argmax_prefers_small_levels(dual2):
    f0, (gamma, e) = _corner_pair(dual2)
    n = np.zeros(dual2.n_sites, dtype=int)
    n[f0] = 2
    res = explore(heights(dual2, n), gamma, e)
    assert res.success and res.q_used == 0.5


def test_explore_validates_inputs(dual2):
    f0, (gamma, e) = _corner_pair(dual2)
    h = heights(dual2, np.zeros(dual2.n_sites, dtype=int))
    with pytest.raises(LoopError):
        explore(h, gamma + [gamma[0]], e, 0.5)
    with pytest.raises(LoopError):
        explore(h, gamma, (e[1], e[0]), 0.5)


def test_quadrant_paths_shape(dual4):
    f0 = at(dual4, 0.5, 0.5)
    for sign in (1, -1):
        quads = quadrant_paths(dual4, f0, sign)
        assert len(quads) == 4
        for pairs in quads:
            for gamma, (x, xp) in pairs:
                assert gamma[-1] == x and xp not in gamma
                assert len(set(gamma)) == len(gamma)


def test_constant_field_quadrant_sum(dual2):
    h = heights(dual2, np.zeros(dual2.n_sites, dtype=int))
    assert quadrant_event_sum(h, at(dual2, 0.5, 0.5), 0.5) == (0, 0)


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_explore_matches_oracle(dual3, seed):
    rng = np.random.default_rng(seed)
    h = heights(dual3, rng.integers(-2, 3, size=dual3.n_sites))
    fam = _family3()
    for k in rng.choice(len(fam), size=20, replace=False):
        gamma, e = fam[k]
        for q in (-1.5, -0.5, 0.5, 1.5):
            assert explore(h, gamma, e, q).success == event_by_level_lines(h, gamma, e, q)


_FAM = {}


def _family3():
    if "f" not in _FAM:
        _FAM["f"] = path_edge_family(build_square_lattice(3), 4)
    return _FAM["f"]


@given(seed=st.integers(0, 2**32 - 1), q=st.sampled_from([-1.5, -0.5, 0.5, 1.5]))
@settings(max_examples=60, deadline=None)
def test_explore_measurable(dual3, seed, q):
    """Changing faces the exploration never looked at leaves its result alone."""
    rng = np.random.default_rng(seed)
    n = rng.integers(-2, 3, size=dual3.n_sites)
    fam = _family3()
    gamma, e = fam[int(rng.integers(len(fam)))]
    res = explore(heights(dual3, n), gamma, e, q)
    hidden = np.setdiff1d(np.arange(dual3.n_sites), res.revealed)
    m = n.copy()
    m[hidden] = rng.integers(-2, 3, size=len(hidden))
    again = explore(heights(dual3, m), gamma, e, q)
    assert again.success == res.success and again.revealed == res.revealed
    assert again.low_set == res.low_set and again.high_set == res.high_set


@pytest.mark.slow
def test_oracle_and_loop_counts_on_many_configs(dual3):
    rng = np.random.default_rng(2024)
    fam = _family3()
    for _ in range(10_000):
        h = heights(dual3, rng.integers(-2, 3, size=dual3.n_sites))
        a, b = loop_height_counts_all(h)
        assert np.all(a >= b)
        gamma, e = fam[int(rng.integers(len(fam)))]
        q = float(rng.choice([-1.5, -0.5, 0.5, 1.5]))
        assert explore(h, gamma, e, q).success == event_by_level_lines(h, gamma, e, q)


def test_restricted_scan_small(dual2):
    f0 = at(dual2, 0.5, 0.5)
    faces = nearest_faces(dual2, f0, 4)
    assert faces[0] == f0
    bad = loop_bound_violations(restricted_scan(dual2, faces, range(-2, 3)), f0)
    assert bad == {"configs": 625, "crossing": 0, "loops_to_height": 0, "quadrant": 0, "oracle": 0}


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=15, deadline=None)
def test_quadrant_bound_random_large_box(dual4, seed):
    h = heights(dual4, np.random.default_rng(seed).integers(-2, 3, size=dual4.n_sites))
    assert loop_bound_violations([h], at(dual4, 0.5, 0.5), oracle=False)["quadrant"] == 0


# -- exact event probabilities ---------------------------------------------------------


def _brute_simple_path_count(g, max_len):
    adj = {v: {int(g.head(h)) for h in g.rotation[v]} for v in range(g.n_vertices)}
    total = 0
    for k in range(1, max_len + 1):
        for seq in itertools.permutations(range(g.n_vertices), k):
            if all(b in adj[a] for a, b in zip(seq, seq[1:])):
                total += sum(1 for w in adj[seq[-1]] if w not in seq)
    return total


def test_path_edge_family_size(box1):
    assert len(path_edge_family(box1, 4)) == _brute_simple_path_count(box1, 4)


def test_event_probability_sanity_bound(box1, dual1):
    """A lone starting point: P[A] is at most P[n_{x+} >= 1]."""
    gamma, e = [4], (4, 5)
    P, tail = event_probabilities(dual1, gaussian(1.0), [(gamma, e)], [0.5])
    h0 = box1.half_edge(*e)
    plus = dual1.site_of_face(box1.left_face(h0))
    marg = height_marginal(dual1, gaussian(1.0), [plus], K=10)
    assert P[0, 0] <= marg.expect(lambda v: (v >= 1).astype(float)) + 1e-12
    assert tail < 1e-10


def test_event_probability_matches_direct_sum(box1, dual1):
    """Pattern caching agrees with summing over every configuration in a window."""
    fam = path_edge_family(box1, 3)[:15]
    U = gaussian(0.8)
    K = 3
    P, _ = event_probabilities(dual1, U, fam, [-0.5, 1.5], K=K)
    sg = dual1.sites()
    ref = np.zeros_like(P)
    z = 0.0
    for vals in itertools.product(range(-K, K + 1), repeat=4):
        full = np.append(vals, 0)
        w = np.exp(-sum(float(U(full[b] - full[a])) for a, b in sg.edges))
        z += w
        h = heights(dual1, vals)
        for i, (gamma, e) in enumerate(fam):
            for j, q in enumerate([-0.5, 1.5]):
                ref[i, j] += w * explore(h, gamma, e, q).success
    np.testing.assert_allclose(P, ref / z, rtol=1e-10, atol=1e-14)


def test_enumeration_budget(dual2):
    with pytest.raises(BudgetError):
        event_probabilities(dual2, gaussian(1.0), [], [0.5])
