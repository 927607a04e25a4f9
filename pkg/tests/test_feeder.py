import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voltref.errors import ParseError, TopologyError, ValidationError
from voltref.feeder import build_feeder, ieee33_loads, load_ieee33, read_line_table, solve_voltage


def path_sets(lines, slack):
    """Lines on each bus's slack path, found by walking parent pointers."""
    parent = {t: (f, k) for k, (f, t, *_) in enumerate(lines)}
    out = {}
    for bus in parent:
        seen, b = set(), bus
        while b != slack:
            f, k = parent[b]
            seen.add(k)
            b = f
        out[bus] = seen
    return out


def common_path_matrix(lines, slack, col):
    paths = path_sets(lines, slack)
    buses = sorted(paths)
    M = np.zeros((len(buses), len(buses)))
    for i, a in enumerate(buses):
        for j, b in enumerate(buses):
            M[i, j] = 2 * sum(lines[k][col] for k in paths[a] & paths[b])
    return M


def test_single_line_matrices(single_line):
    assert single_line.R == pytest.approx(np.array([[0.10]]))
    assert single_line.X == pytest.approx(np.array([[0.20]]))


def test_chain_matrices():
    m = build_feeder([(0, 1, 0.05, 0.1), (1, 2, 0.05, 0.1)], slack=0)
    np.testing.assert_allclose(m.R, [[0.10, 0.10], [0.10, 0.20]])
    assert np.all(np.linalg.eigvalsh(m.R) > 0)


def test_ieee33_shape_and_entries(ieee33):
    assert ieee33.n == 32
    assert ieee33.buses == tuple(range(2, 34))
    assert ieee33.R.min() > 0 and ieee33.X.min() > 0
    assert np.linalg.eigvalsh(ieee33.R)[0] > 0
    assert np.linalg.eigvalsh(ieee33.X)[0] > 0


def test_ieee33_unit_conversion(ieee33):
    # 0.0922 ohm on a 10 MVA / 12.66 kV base, by hand: 0.922 / 160.2756
    first = ieee33.lines[0]
    assert (first.from_bus, first.to_bus) == (1, 2)
    assert first.r == pytest.approx(0.005752591161723931, rel=1e-12)
    assert first.x == pytest.approx(0.002932448856844086, rel=1e-12)
    assert ieee33.R[0, 0] == pytest.approx(2 * 0.005752591161723931)


def test_ieee33_against_path_oracle(ieee33):
    lines = [(ln.from_bus, ln.to_bus, ln.r, ln.x) for ln in ieee33.lines]
    np.testing.assert_allclose(ieee33.R, common_path_matrix(lines, 1, 2), rtol=1e-13)
    np.testing.assert_allclose(ieee33.X, common_path_matrix(lines, 1, 3), rtol=1e-13)


def test_solve_voltage_examples(single_line):
    np.testing.assert_array_equal(solve_voltage(single_line, [0.0], [0.0]), [1.0])
    assert solve_voltage(single_line, [-0.2], [0.0])[0] == pytest.approx(0.98)
    assert solve_voltage(single_line, [-0.2], [0.05])[0] == pytest.approx(0.99)


def test_solve_voltage_dimension_mismatch(ieee33):
    with pytest.raises(ValidationError):
        solve_voltage(ieee33, np.zeros(3), np.zeros(32))


@pytest.mark.parametrize("lines, err", [
    ([(0, 1, 0.1, 0.1), (1, 2, 0.1, 0.1), (2, 0, 0.1, 0.1)], TopologyError),   # cycle
    ([(0, 1, 0.1, 0.1), (3, 4, 0.1, 0.1)], TopologyError),                     # disconnected
    ([(0, 1, 0.1, 0.1), (1, 2, 0.1, 0.1), (0, 2, 0.1, 0.1)], TopologyError),   # duplicate to-bus
    ([(0, 1, 0.0, 0.1)], ValidationError),
    ([(0, 1, 0.1, -0.1)], ValidationError),
])
def test_build_feeder_rejects(lines, err):
    with pytest.raises(err):
        build_feeder(lines, slack=0)


def test_load_ieee33_duplicate_to_bus(tmp_path, ieee33):
    text = "# from to r x\n1 2 0.1 0.1\n2 3 0.1 0.1\n1 3 0.2 0.2\n"
    path = tmp_path / "bad.txt"
    path.write_text(text)
    with pytest.raises(TopologyError):
        load_ieee33(path)


def test_line_table_parse_error_has_line_number(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("# header\n1 2 0.1 0.1\n2 3 0.1\n")
    with pytest.raises(ParseError) as info:
        read_line_table(path)
    assert info.value.lineno == 3
    assert ":3:" in str(info.value)


def test_model_is_immutable(ieee33):
    with pytest.raises(ValueError):
        ieee33.R[0, 0] = 5.0


def test_background_loads_are_negative(ieee33):
    p, q = ieee33_loads(ieee33)
    assert np.all(p < 0) and np.all(q < 0)
    assert -p.sum() == pytest.approx(0.3715)


@st.composite
def random_trees(draw):
    n = draw(st.integers(1, 10))
    parents = [draw(st.integers(0, i)) for i in range(n)]
    imp = st.floats(0.001, 1.0)
    return [(parents[i], i + 1, draw(imp), draw(imp)) for i in range(n)]


@settings(max_examples=60, deadline=None)
@given(random_trees())
def test_random_trees_give_spd(lines):
    m = build_feeder(lines, slack=0)
    for M in (m.R, m.X):
        np.testing.assert_array_equal(M, M.T)
        assert np.linalg.eigvalsh(M)[0] > 0


@settings(max_examples=40, deadline=None)
@given(random_trees(), st.integers(0, 2**32 - 1))
def test_voltage_is_affine(lines, seed):
    m = build_feeder(lines, slack=0)
    r = np.random.default_rng(seed)
    p1, p2, q1, q2 = r.normal(size=(4, m.n))
    lhs = solve_voltage(m, p1 + p2, q1 + q2) - 1
    rhs = (solve_voltage(m, p1, q1) - 1) + (solve_voltage(m, p2, q2) - 1)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(random_trees(), st.data())
def test_raising_reactive_injection_never_lowers_voltage(lines, data):
    m = build_feeder(lines, slack=0)
    i = data.draw(st.integers(0, m.n - 1))
    p = np.zeros(m.n)
    q = np.zeros(m.n)
    v0 = solve_voltage(m, p, q)
    q[i] += data.draw(st.floats(1e-6, 1.0))
    assert np.all(solve_voltage(m, p, q) >= v0)
