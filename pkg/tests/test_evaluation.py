import numpy as np
import pytest

from entroute.evaluation import EvalResult, average_precision, evaluate_map
from entroute.fusion import Detection
from entroute.geometry import Box
from entroute.scenes import SceneObject, SyntheticScene

from oracles import map_ref


def scene_of(boxes_classes, size=640, seed=0):
    objs = [SceneObject(b, c, max(b.width, b.height)) for b, c in boxes_classes]
    return SyntheticScene(size, size, objs, seed)


class TestAveragePrecision:
    def test_perfect(self):
        recs = [(0.9, True), (0.8, True)]
        assert average_precision(recs, 2) == pytest.approx(1.0)

    def test_no_predictions(self):
        assert average_precision([], 3) == 0.0

    def test_no_ground_truth(self):
        assert average_precision([(0.9, False)], 0) == 0.0

    def test_half_recall(self):
        # one TP at full precision of the 2 GT -> AP ~ 51/101
        recs = [(0.9, True)]
        assert average_precision(recs, 2) == pytest.approx(51 / 101)

    def test_fp_before_tp(self):
        recs = [(0.9, False), (0.8, True)]
        # precision at recall 1.0 (of 1 GT) is 0.5
        assert average_precision(recs, 1) == pytest.approx(0.5)


class TestEvaluateMap:
    def test_exact_match_is_one(self):
        gt = scene_of([(Box(10, 10, 50, 50), 0), (Box(100, 100, 140, 140), 1)])
        preds = [Detection(o.box, 0.9, o.class_id) for o in gt.objects]
        res = evaluate_map({"a": preds}, {"a": gt})
        assert res.map50 == pytest.approx(1.0)
        assert res.per_class == {0: pytest.approx(1.0), 1: pytest.approx(1.0)}

    def test_miss_is_zero(self):
        gt = scene_of([(Box(10, 10, 50, 50), 0)])
        res = evaluate_map({"a": []}, {"a": gt})
        assert res.map50 == 0.0

    def test_wrong_class_is_fp(self):
        gt = scene_of([(Box(10, 10, 50, 50), 0)])
        preds = [Detection(Box(10, 10, 50, 50), 0.9, 1)]
        res = evaluate_map({"a": preds}, {"a": gt})
        assert res.map50 == 0.0

    def test_area_buckets(self):
        gt = scene_of([(Box(0, 0, 16, 16), 0),        # small
                       (Box(100, 100, 164, 164), 0),  # medium (64px)
                       (Box(300, 300, 428, 428), 0)])  # large (128px)
        preds = [Detection(Box(0, 0, 16, 16), 0.9, 0),
                 Detection(Box(100, 100, 164, 164), 0.8, 0)]
        res = evaluate_map({"a": preds}, {"a": gt})
        assert res.ap_s == pytest.approx(1.0)
        assert res.ap_m == pytest.approx(1.0)
        assert res.ap_l == 0.0

    def test_key_mismatch_rejected(self):
        with pytest.raises(ValueError):
            evaluate_map({"a": []}, {"b": scene_of([])})

    def test_fp_removal_never_hurts(self):
        rng = np.random.default_rng(0)
        gt = scene_of([(Box(10, 10, 40, 40), 0), (Box(100, 100, 160, 160), 0)])
        preds = [Detection(o.box, 0.9, 0) for o in gt.objects]
        noise = [Detection(Box(200 + i * 50, 200, 230 + i * 50, 230),
                           float(rng.uniform(0.3, 0.95)), 0)
                 for i in range(4)]
        with_fp = evaluate_map({"a": preds + noise}, {"a": gt}).map50
        without = evaluate_map({"a": preds}, {"a": gt}).map50
        assert without >= with_fp

    def _random_instance(self, rng):
        n_scenes = int(rng.integers(1, 4))
        gts, preds = {}, {}
        for s in range(n_scenes):
            objs = []
            for _ in range(int(rng.integers(0, 6))):
                x, y = rng.uniform(0, 500, 2)
                side = float(rng.uniform(8, 140))
                objs.append((Box(x, y, x + side, y + side),
                             int(rng.integers(3))))
            gts[f"s{s}"] = scene_of(objs)
            ps = []
            for _ in range(int(rng.integers(0, 9))):
                if objs and rng.uniform() < 0.6:
                    base, cid = objs[int(rng.integers(len(objs)))]
                    dx, dy = rng.normal(0, 4, 2)
                    box = Box(base.x1 + dx, base.y1 + dy,
                              base.x2 + dx, base.y2 + dy)
                    if rng.uniform() < 0.15:
                        cid = int(rng.integers(3))
                else:
                    x, y = rng.uniform(0, 500, 2)
                    side = float(rng.uniform(8, 140))
                    box = Box(x, y, x + side, y + side)
                    cid = int(rng.integers(3))
                ps.append(Detection(box, round(float(rng.uniform()), 3), cid))
            preds[f"s{s}"] = ps
        return preds, gts

    def test_matches_brute_force_reference(self):
        """1000 random tiny instances against the scalar-loop oracle."""
        rng = np.random.default_rng(42)
        for _ in range(1000):
            preds, gts = self._random_instance(rng)
            res = evaluate_map(preds, gts)
            ref = map_ref(
                {k: [(d.box.x1, d.box.y1, d.box.x2, d.box.y2, d.score,
                      d.class_id) for d in v] for k, v in preds.items()},
                {k: [(o.box.x1, o.box.y1, o.box.x2, o.box.y2, o.class_id)
                     for o in v.objects] for k, v in gts.items()})
            assert res.map50 == pytest.approx(ref[0], abs=1e-9)
            assert res.ap_s == pytest.approx(ref[1], abs=1e-9)
            assert res.ap_m == pytest.approx(ref[2], abs=1e-9)
            assert res.ap_l == pytest.approx(ref[3], abs=1e-9)

    def test_json_dict(self):
        res = EvalResult(0.5, 0.1, 0.2, 0.3, {0: 0.5})
        d = res.to_json_dict()
        assert d["map50"] == 0.5 and d["per_class"] == {"0": 0.5}
