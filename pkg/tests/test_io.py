import json
import math

import numpy as np

from gmicrolocal import expr as E
from gmicrolocal.calculus import expand_compose
from gmicrolocal.fixtures import build_fixture, build_symbol
from gmicrolocal.io import (dumps, expansion_to_json, mlgf_bytes, net_from_csv, net_to_csv,
                            read_csv, read_mlgf, read_symbol_catalog, write_csv, write_mlgf,
                            write_symbol_catalog)
from gmicrolocal.nets import EpsilonGrid, sample_net
from gmicrolocal.quantize import GridSpec


def test_dumps_is_sorted_and_handles_non_finite():
    s = dumps({"b": math.inf, "a": float("nan"), "c": np.float64(1.5), "d": np.arange(2)})
    d = json.loads(s)
    assert list(d) == ["a", "b", "c", "d"]
    assert d["a"] is None and d["b"] == "inf" and d["c"] == 1.5 and d["d"] == [0, 1]


def test_net_csv_round_trip(tmp_path):
    s = sample_net(lambda e: e ** -1.5, EpsilonGrid(2, 9))
    p = tmp_path / "net.csv"
    net_to_csv(s, p)
    t = net_from_csv(p)
    assert t.grid == s.grid
    np.testing.assert_array_equal(t.values, s.values)


def test_csv_round_trip(tmp_path):
    p = tmp_path / "a.csv"
    write_csv(p, ["a", "b"], [[1, 0.1], [2, 1e-300]])
    rows = read_csv(p)
    assert rows[1]["a"] == "2" and float(rows[1]["b"]) == 1e-300


def test_symbol_catalog_round_trip(tmp_path):
    syms = [build_symbol(l) for l in ("bracket", "slow_coeff", "cone_e2")]
    p = tmp_path / "symbols.json"
    write_symbol_catalog(p, syms)
    back = read_symbol_catalog(p)
    for a, b in zip(syms, back):
        assert E.to_sexpr(a.expr) == E.to_sexpr(b.expr)
        assert (a.order, a.n, a.label) == (b.order, b.n, b.label)


def test_mlgf_round_trip(tmp_path):
    u = build_fixture("delta2d", GridSpec(2, 64), EpsilonGrid(3, 8))
    p = tmp_path / "u.mlgf"
    write_mlgf(p, u)
    raw = p.read_bytes()
    assert raw[:4] == b"MLGF" and len(raw) == 20 + 16 * len(u) * 64 * 64
    v = read_mlgf(p, j_min=3)
    assert v.spec == u.spec and v.eps_grid == u.eps_grid
    np.testing.assert_array_equal(v.data, u.data)
    assert mlgf_bytes(v) == raw


def test_expansion_json():
    ex = expand_compose(build_symbol("xi"), build_symbol("x"), 2)
    d = expansion_to_json(ex)
    assert [t["order"] for t in d["terms"]] == [m for m, _ in ex.terms]
