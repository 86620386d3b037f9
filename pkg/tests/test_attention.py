import math

import numpy as np
import pytest

from entroute.attention import (AttentionTensor, HeatMap, ProbabilityMap,
                                aggregate_attention, bilinear_resize,
                                build_heatmap, normalize_probability,
                                read_tensor_file, spatial_attention_entropy,
                                write_pgm, write_tensor_file)

from oracles import aggregate_ref, bilinear_ref, entropy_ref


def tensor(values, grid):
    return AttentionTensor(np.array(values, dtype=float), grid)


class TestAggregate:
    def test_mean_of_two_rows(self):
        t = tensor([[[[1, 0]]], [[[0, 1]]]], (1, 2))
        assert np.allclose(aggregate_attention(t), [0.5, 0.5])

    def test_single_row_identity(self):
        t = tensor([[[[0.2, 0.8]]]], (1, 2))
        assert np.allclose(aggregate_attention(t), [0.2, 0.8])

    def test_matches_loop_reference(self):
        rng = np.random.default_rng(0)
        vals = rng.uniform(size=(3, 2, 4, 16))
        t = AttentionTensor(vals, (4, 4))
        ref = aggregate_ref(vals.tolist())
        assert np.allclose(aggregate_attention(t), ref, atol=1e-12)

    def test_linearity(self):
        rng = np.random.default_rng(1)
        vals = rng.uniform(size=(2, 2, 2, 9))
        a1 = aggregate_attention(AttentionTensor(vals, (3, 3)))
        a2 = aggregate_attention(AttentionTensor(3.5 * vals, (3, 3)))
        assert np.allclose(a2, 3.5 * a1)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            tensor([[[[1, 0, 0]]]], (2, 2))

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            tensor([[[[1, -0.1]]]], (1, 2))


class TestNormalize:
    def test_all_zero_gives_uniform(self):
        pm = normalize_probability(np.zeros(4))
        assert np.allclose(pm.p, 0.25)

    def test_proportions(self):
        pm = normalize_probability(np.array([1.0, 3.0]), epsilon=1e-15)
        assert np.allclose(pm.p, [0.25, 0.75])

    def test_smoothing_keeps_support(self):
        pm = normalize_probability(np.array([1.0, 0.0, 0.0]))
        assert abs(pm.p.sum() - 1.0) < 1e-12
        assert pm.p[1] == pm.p[2] > 0

    def test_negative_input_rejected(self):
        with pytest.raises(ValueError):
            normalize_probability(np.array([1.0, -1.0]))
        with pytest.raises(ValueError):
            normalize_probability(np.array([np.inf, 1.0]))


class TestEntropy:
    def test_uniform_is_one(self):
        pm = normalize_probability(np.ones(64))
        assert spatial_attention_entropy(pm) == pytest.approx(1.0, abs=1e-9)

    def test_near_dirac(self):
        pm = normalize_probability(np.array([1.0, 0, 0, 0]))
        assert spatial_attention_entropy(pm) < 1e-6

    def test_half_support(self):
        pm = normalize_probability(np.array([0.5, 0.5, 0, 0]), epsilon=1e-300)
        assert spatial_attention_entropy(pm) == pytest.approx(
            math.log(2) / math.log(4), abs=1e-9)

    def test_single_key_rejected(self):
        with pytest.raises(ValueError):
            spatial_attention_entropy(ProbabilityMap(np.array([1.0])))

    def test_permutation_invariant(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(size=32)
        h1 = spatial_attention_entropy(normalize_probability(a))
        h2 = spatial_attention_entropy(normalize_probability(a[::-1].copy()))
        assert h1 == pytest.approx(h2, abs=1e-12)

    def test_scale_invariant(self):
        rng = np.random.default_rng(3)
        a = rng.uniform(0.5, 1.0, size=50)
        h1 = spatial_attention_entropy(normalize_probability(a))
        h2 = spatial_attention_entropy(normalize_probability(7.0 * a))
        assert abs(h1 - h2) <= 1e-6

    def test_matches_loop_reference(self):
        rng = np.random.default_rng(4)
        a = rng.uniform(size=30)
        got = spatial_attention_entropy(normalize_probability(a))
        assert got == pytest.approx(entropy_ref(list(a)), abs=1e-12)


class TestBilinear:
    def test_matches_reference(self):
        rng = np.random.default_rng(5)
        src = rng.uniform(size=(2, 2))
        out = bilinear_resize(src, (4, 4))
        ref = bilinear_ref(src.tolist(), 4, 4)
        assert np.allclose(out, ref, atol=1e-6)

    def test_matches_reference_larger(self):
        rng = np.random.default_rng(6)
        src = rng.uniform(size=(5, 7))
        out = bilinear_resize(src, (17, 11))
        ref = bilinear_ref(src.tolist(), 17, 11)
        assert np.allclose(out, ref, atol=1e-9)

    def test_convexity(self):
        rng = np.random.default_rng(7)
        src = rng.uniform(size=(4, 4))
        out = bilinear_resize(src, (32, 32))
        assert out.min() >= src.min() - 1e-12
        assert out.max() <= src.max() + 1e-12


class TestBuildHeatmap:
    def test_degenerate_single_key_grid(self):
        hm = build_heatmap(tensor([[[[0.7]]]], (1, 1)), (5, 3))
        assert hm.degenerate
        assert np.all(hm.h == 0.5)
        assert hm.mean_h == 0.5
        assert hm.sae_global == 0.0

    def test_degenerate_constant_grid(self):
        hm = build_heatmap(tensor([[[[0.7, 0.7]]]], (1, 2)), (4, 4))
        assert hm.degenerate
        assert np.all(hm.h == 0.5)

    def test_vertical_gradient_pattern(self):
        t = tensor([[[[0, 1, 0, 1]]]], (2, 2))
        hm = build_heatmap(t, (4, 4))
        ref = np.array(bilinear_ref([[0, 1], [0, 1]], 4, 4))
        ref = (ref - ref.min()) / (ref.max() - ref.min())
        assert np.allclose(hm.h, ref, atol=1e-6)

    def test_range_and_extremes(self):
        rng = np.random.default_rng(8)
        t = AttentionTensor(rng.uniform(size=(2, 3, 4, 36)), (6, 6))
        hm = build_heatmap(t, (48, 48))
        assert hm.h.min() == 0.0 and hm.h.max() == 1.0
        assert 0.0 <= hm.sae_global <= 1.0
        assert hm.mean_h == pytest.approx(hm.h.mean())

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        vals = rng.uniform(size=(1, 2, 3, 25))
        h1 = build_heatmap(AttentionTensor(vals, (5, 5)), (40, 40))
        h2 = build_heatmap(AttentionTensor(vals.copy(), (5, 5)), (40, 40))
        assert np.array_equal(h1.h, h2.h)
        assert h1.sae_global == h2.sae_global

    def test_sae_scale_invariance(self):
        rng = np.random.default_rng(10)
        vals = rng.uniform(0.2, 1.0, size=(1, 1, 2, 16))
        h1 = build_heatmap(AttentionTensor(vals, (4, 4)), (8, 8))
        h2 = build_heatmap(AttentionTensor(0.3 * vals, (4, 4)), (8, 8))
        assert abs(h1.sae_global - h2.sae_global) <= 1e-6


class TestTensorFile:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(11)
        vals = rng.uniform(size=(2, 3, 4, 12)).astype(np.float32)
        t = AttentionTensor(vals.astype(float), (3, 4))
        path = tmp_path / "att.bin"
        write_tensor_file(path, t)
        back = read_tensor_file(path)
        assert back.key_grid == (3, 4)
        assert np.allclose(back.values, vals, atol=1e-7)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTMAGIC\n{}\n")
        with pytest.raises(ValueError, match="magic"):
            read_tensor_file(path)

    def test_byte_count_mismatch(self, tmp_path):
        path = tmp_path / "short.bin"
        header = b'{"L":1,"Nh":1,"Nq":1,"Nk":4,"Hk":2,"Wk":2}'
        path.write_bytes(b"VICROPAT1\n" + header + b"\n" + b"\x00" * 7)
        with pytest.raises(ValueError, match="byte-count"):
            read_tensor_file(path)


def test_pgm_export(tmp_path):
    h = np.array([[0.0, 0.5], [1.0, 0.25]])
    hm = HeatMap(h, 0.9, float(h.mean()))
    path = tmp_path / "map.pgm"
    write_pgm(path, hm)
    data = path.read_bytes()
    assert data.startswith(b"P5\n2 2\n255\n")
    assert list(data[-4:]) == [0, 128, 255, 64]
