import json
import math

import numpy as np
import pytest
from pytest import approx

from besovkit.admat import AdParams, random_ad_matrix
from besovkit.geometry import builtin_manifolds
from besovkit.io import (dumps, grid_from_json, grid_to_json, manifold_from_json, read_json, read_matrix,
                         resolve_grid, seq_from_json, seq_to_json, write_json, write_matrix)
from besovkit.seq import CoeffSequence, random_sequence


class TestJson:
    def test_floats_round_trip(self):
        vals = [0.1, 1 / 3, 1e-300, -2.5e17, 2.0, math.pi]
        back = json.loads(dumps(vals))
        assert back == vals

    def test_non_finite(self, tmp_path):
        write_json(tmp_path / "x.json", {"a": math.inf, "b": -math.inf})
        obj = read_json(tmp_path / "x.json")
        assert obj["a"] == math.inf and obj["b"] == -math.inf

    def test_sorted_and_stable(self):
        assert dumps({"b": 1, "a": [1, 2]}) == dumps({"a": [1, 2], "b": 1})
        assert dumps(np.float64(2.0)) == "2.0"
        assert dumps(True) == "true" and dumps(None) == "null"


class TestGridRefs:
    def test_dyadic(self):
        g = resolve_grid("dyadic:d=2,J=3")
        assert g.d == 2 and g.sizes == [(2 ** j + 1) ** 2 for j in range(4)]

    def test_manifold(self):
        g = resolve_grid("manifold:cube-surface,J=2")
        assert g.sizes[0] == 8

    def test_wavelet(self):
        g = resolve_grid("wavelet:interval,J=3,D=2,Dt=2")
        assert g.sizes == [2, 2, 4, 8]

    def test_incomplete(self):
        with pytest.raises(ValueError):
            resolve_grid("dyadic:d=2")

    @pytest.mark.parametrize("ref", ["dyadic:d=1,J=4", "manifold:square2,J=2,tags=2", "wavelet:cube-surface,J=2,D=1"])
    def test_grid_round_trip(self, ref, tmp_path):
        g = resolve_grid(ref)
        write_json(tmp_path / "g.json", grid_to_json(g))
        h = resolve_grid("g.json", base=tmp_path)
        assert h.sizes == g.sizes and h.d == g.d and h.domain == g.domain
        for a, b in zip(g.levels, h.levels):
            assert np.array_equal(a.points, b.points)
            assert np.array_equal(a.tags, b.tags)
            assert np.array_equal(a.patch, b.patch)

    def test_malformed(self):
        with pytest.raises(ValueError):
            grid_from_json({"d": 1})
        with pytest.raises(ValueError):
            grid_from_json({"d": 1, "constants": {"c1": 1, "c2": 1, "c3": 1}, "levels": [[{"j": 1, "y": [0.0]}]]})


class TestSequences:
    def test_round_trip(self, tmp_path):
        g = resolve_grid("dyadic:d=1,J=5")
        a = random_sequence(g, np.random.default_rng(0), density=0.4, complex_values=True)
        write_json(tmp_path / "a.json", seq_to_json(a, "dyadic:d=1,J=5", seed=0))
        b = seq_from_json(read_json(tmp_path / "a.json"))
        assert np.array_equal(a.flat(), b.flat())

    def test_size_mismatch(self):
        g = resolve_grid("dyadic:d=1,J=3")
        obj = seq_to_json(CoeffSequence.zeros(g), "dyadic:d=1,J=4")
        with pytest.raises(ValueError):
            seq_from_json(obj)


class TestMatrices:
    @pytest.mark.parametrize("suffix", [".bin", ".json"])
    def test_round_trip(self, tmp_path, suffix):
        g = resolve_grid("dyadic:d=1,J=4")
        M = random_ad_matrix(g, g, AdParams(0.3, 0.3, 2.0, 0.5), seed=2)
        path = tmp_path / ("m" + suffix)
        write_matrix(path, M, "dyadic:d=1,J=4", "dyadic:d=1,J=4", seed=2)
        N, header = read_matrix(path)
        assert header["seed"] == 2 and header["nnz"] == M.nnz
        assert np.array_equal(M.to_dense(), N.to_dense())

    def test_deterministic_bytes(self, tmp_path):
        g = resolve_grid("dyadic:d=1,J=4")
        for name in ("a.bin", "b.bin"):
            write_matrix(tmp_path / name, random_ad_matrix(g, g, AdParams(0, 0, 2, 0.5), seed=5), "dyadic:d=1,J=4",
                         "dyadic:d=1,J=4")
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"not a matrix")
        with pytest.raises(ValueError):
            read_matrix(tmp_path / "x.bin")


def test_manifold_round_trip(tmp_path):
    dec = builtin_manifolds("cube-surface")
    write_json(tmp_path / "m.json", dec.to_json())
    back = manifold_from_json(tmp_path / "m.json")
    assert back.N == dec.N and len(back.interfaces) == len(dec.interfaces)
    x = np.array([[0.2, 0.7]])
    for p, q in zip(dec.patches, back.patches):
        assert p(x) == approx(q(x))
