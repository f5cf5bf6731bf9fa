import struct
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ogplab import factor_graph as fg
from ogplab import io as kio
from ogplab.ksat import Formula, literal, sample_formula


def lits(*rows):
    return np.array([[literal(abs(v) - 1, v > 0) for v in row] for row in rows])


def test_dimacs_text_exact():
    phi = Formula(3, lits([1, -2, 3], [-1, 2, -3]))
    assert kio.to_dimacs(phi) == "p cnf 3 2\n1 -2 3 0\n-1 2 -3 0\n"


def test_dimacs_roundtrip_sampled():
    for s in range(5):
        phi = sample_formula(50, 80, 4, s)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            text = kio.to_dimacs(phi, allow_dups=True)
        assert kio.from_dimacs(text) == phi


def test_dimacs_duplicates_warn_and_drop():
    phi = Formula(2, lits([1, 1, -2]))
    with pytest.warns(UserWarning):
        text = kio.to_dimacs(phi)
    assert text.splitlines()[1] == "1 -2 0"
    assert kio.to_dimacs(phi, allow_dups=True).splitlines()[1] == "1 1 -2 0"


def test_dimacs_parse_comments_and_wrapping():
    text = "c hello\np cnf 4 2\n1 -2\n 3 0 -4 2 1 0\n"
    phi = kio.from_dimacs(text)
    assert phi == Formula(4, lits([1, -2, 3], [-4, 2, 1]))


def test_dimacs_tautology_only_rejected_when_strict():
    text = "p cnf 2 1\n1 -1 2 0\n"
    assert kio.from_dimacs(text).m == 1
    with pytest.raises(kio.FormatError):
        kio.from_dimacs(text, strict=True)


@pytest.mark.parametrize("text", [
    "1 2 3 0\n",
    "p cnf 3 2\n1 2 3 0\n",
    "p cnf 3 2\n1 2 3 0\n1 2 0\n",
    "p cnf 2 1\n1 2 3 0\n",
    "p dnf 2 1\n1 2 0\n",
])
def test_dimacs_errors(text):
    with pytest.raises(kio.FormatError):
        kio.from_dimacs(text)


def test_binary_layout():
    phi = sample_formula(7, 3, 3, [11, 0])
    blob = kio.to_binary(phi)
    magic, n, m, k, lineage = struct.unpack_from("<5sIIIQ", blob)
    assert (magic, n, m, k) == (b"KSAT1", 7, 3, 3)
    assert lineage == phi.lineage
    body = np.frombuffer(blob[struct.calcsize("<5sIIIQ"):], dtype="<u4")
    assert body.tolist() == phi.lits.ravel().tolist()
    assert len(blob) == struct.calcsize("<5sIIIQ") + 4 * 9


def test_binary_roundtrip_and_errors(tmp_path):
    phi = sample_formula(100, 300, 5, 3)
    p = tmp_path / "f.ksat"
    kio.write_binary(phi, p)
    back = kio.read_binary(p)
    assert back == phi and back.lineage == phi.lineage
    blob = kio.to_binary(phi)
    with pytest.raises(kio.FormatError):
        kio.from_binary(blob[:10])
    with pytest.raises(kio.FormatError):
        kio.from_binary(b"XSAT1" + blob[5:])
    with pytest.raises(kio.FormatError):
        kio.from_binary(blob[:-4])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 20), st.integers(0, 15), st.integers(1, 5), st.integers(0, 2**32))
def test_formats_roundtrip_property(n, m, k, seed):
    phi = sample_formula(n, m, k, seed)
    assert kio.from_binary(kio.to_binary(phi)) == phi
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        back = kio.from_dimacs(kio.to_dimacs(phi, allow_dups=True))
    # DIMACS has no width field, so an empty formula comes back with k = 0
    assert back == phi if m else (back.n, back.m) == (n, 0)


def test_graph_dump_lines():
    phi = Formula(2, lits([1, -2]))
    g = fg.build_factor_graph(phi, 0)
    lines = g.dump().splitlines()
    assert [l.split()[0] for l in lines] == ["V", "V", "C", "E", "E"]
    assert lines[3].split()[:5] == ["E", "0", "0", "0", "T"]
    assert lines[4].split()[:5] == ["E", "1", "0", "1", "F"]
    assert int(lines[0].split()[2]) == int(g.vword[0])
    h = fg.DecoratedFactorGraph.parse_dump(g.dump())
    assert h.to_formula() == phi and np.array_equal(h.eword, g.eword)
