import numpy as np
import pytest

from twostream import models as M
from twostream.augment import CanvasSpec, flip_input
from twostream.evaluation import (
    TEN_CROP_ORDER, EvalItem, FusionWeights, evaluate, fuse, predict, sample_frames,
    stream_positions, ten_crop, video_score,
)

CANVAS = CanvasSpec(12, 10, (8,), 8)


def test_sample_frames_examples():
    assert sample_frames(250) == list(range(0, 250, 10))
    assert sample_frames(25) == list(range(25))
    assert sample_frames(5) == [k // 5 for k in range(25)]
    with pytest.raises(ValueError):
        sample_frames(0)


def test_temporal_positions_clamped():
    pos = stream_positions("temporal", 12)
    assert max(pos) == 2 and len(pos) == 25
    with pytest.raises(ValueError):
        stream_positions("temporal", 9)


def test_ten_crop_order():
    assert TEN_CROP_ORDER == (
        ("top-left", False), ("top-right", False), ("bottom-left", False), ("bottom-right", False),
        ("center", False), ("top-left", True), ("top-right", True), ("bottom-left", True),
        ("bottom-right", True), ("center", True),
    )
    img = np.arange(3 * 10 * 12, dtype=np.float64).reshape(3, 10, 12)
    crops = ten_crop(img, CANVAS)
    assert len(crops) == 10 and all(c.shape == (3, 8, 8) for c in crops)
    offsets = [(0, 0), (4, 0), (0, 2), (4, 2), (2, 1)]
    for i, (x, y) in enumerate(offsets):
        np.testing.assert_array_equal(crops[i], img[:, y : y + 8, x : x + 8])
        np.testing.assert_array_equal(crops[i + 5], flip_input(crops[i]))


def test_ten_crop_shape_contract_at_224():
    crops = ten_crop(np.zeros((20, 256, 340), dtype=np.uint8), CanvasSpec(), "flow_stack")
    assert len(crops) == 10 and all(c.shape == (20, 224, 224) for c in crops)


def test_symmetric_image_full_width_crop():
    canvas = CanvasSpec(8, 10, (8,), 8)
    half = np.random.default_rng(0).normal(size=(3, 10, 4))
    img = np.concatenate([half, half[..., ::-1]], axis=2)
    crops = ten_crop(img, canvas)
    for i in range(5):
        np.testing.assert_array_equal(crops[i], crops[i + 5])


def test_canvas_equal_to_crop():
    canvas = CanvasSpec(8, 8, (8,), 8)
    img = np.random.default_rng(1).normal(size=(3, 8, 8))
    crops = ten_crop(img, canvas)
    for c in crops[1:5]:
        np.testing.assert_array_equal(c, crops[0])


def test_ten_crop_dim_mismatch():
    with pytest.raises(ValueError):
        ten_crop(np.zeros((3, 9, 12)), CANVAS)


def test_fuse_example():
    f = fuse([0.6, 0.4], [0.2, 0.8], FusionWeights(1, 2))
    np.testing.assert_allclose(f, [1.0, 2.0], rtol=0, atol=1e-15)
    assert predict(f) == 1


def test_fuse_zero_temporal_weight():
    s, t = np.array([0.1, 0.7, 0.2]), np.array([0.9, 0.05, 0.05])
    assert predict(fuse(s, t, FusionWeights(1, 0))) == predict(s)


def test_fuse_scale_invariant():
    rng = np.random.default_rng(2)
    for _ in range(50):
        s, t = rng.random(5), rng.random(5)
        assert predict(fuse(s, t, FusionWeights(1, 2))) == predict(fuse(s, t, FusionWeights(3, 6)))


def test_fuse_errors():
    with pytest.raises(ValueError):
        fuse([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        FusionWeights(0, 0)


def test_argmax_ties_lowest_index():
    assert predict(np.array([0.5, 0.5, 0.1])) == 0


def toy(stream, classes=3):
    return M.ToyNet(M.ModelConfig(stream, classes, input_size=8, hidden=8, seed=1))


def rgb_video(t=30, seed=0):
    return np.random.default_rng(seed).integers(0, 256, size=(t, 3, 10, 12)).astype(np.uint8)


def flow_planes(t=29, seed=0):
    return np.random.default_rng(seed).integers(0, 256, size=(t, 2, 10, 12)).astype(np.uint8)


def test_250_forward_passes_per_stream():
    sp, tp = toy("spatial"), toy("temporal")
    video_score(sp, "spatial", rgb_video(), CANVAS)
    video_score(tp, "temporal", flow_planes(), CANVAS)
    assert sp.forward_count == 250 and tp.forward_count == 250


def test_video_score_deterministic_and_normalized():
    sp = toy("spatial")
    a = video_score(sp, "spatial", rgb_video(), CANVAS)
    b = video_score(sp, "spatial", rgb_video(), CANVAS)
    assert a.tobytes() == b.tobytes()
    assert a.sum() == pytest.approx(1.0)


class ConstantModel:
    def __init__(self, s):
        self.s = np.asarray(s)
        self.forward_count = 0

    def predict_scores(self, x, space="softmax"):
        self.forward_count += len(x)
        return np.tile(self.s, (len(x), 1))


def test_constant_model_score():
    s = np.array([0.2, 0.5, 0.3])
    np.testing.assert_allclose(video_score(ConstantModel(s), "spatial", rgb_video(), CANVAS), s)


class OneHotOracle:
    """Cheats by reading the label painted into the input's first pixel."""

    def __init__(self, classes):
        self.classes = classes

    def predict_scores(self, x, space="softmax"):
        out = np.zeros((len(x), self.classes))
        labels = np.rint(x[:, 0, 0, 0] * 127.5 + 127.5).astype(int) % self.classes
        out[np.arange(len(x)), labels] = 1.0
        return out


def test_oracle_model_scores_perfectly():
    canvas = CanvasSpec(8, 8, (8,), 8)
    items = []
    for label in range(3):
        rgb = np.full((5, 3, 8, 8), label, dtype=np.uint8)
        items.append(EvalItem(f"v{label}", label, lambda rgb=rgb: rgb, lambda: np.zeros((12, 2, 8, 8))))
    oracle = OneHotOracle(3)
    report = evaluate(oracle, ConstantModel(np.array([1 / 3] * 3)), items, canvas)
    assert report.spatial_acc == 1.0 and report.fused_acc == 1.0 and report.failures == 0


def test_single_video_both_streams_oracle():
    canvas = CanvasSpec(8, 8, (8,), 8)

    class Truth:
        def predict_scores(self, x, space="softmax"):
            return np.tile([0.0, 1.0], (len(x), 1))

    item = EvalItem("v", 1, lambda: np.zeros((3, 3, 8, 8), np.uint8), lambda: np.zeros((10, 2, 8, 8)))
    report = evaluate(Truth(), Truth(), [item], canvas)
    assert (report.spatial_acc, report.temporal_acc, report.fused_acc) == (1.0, 1.0, 1.0)


def test_empty_manifest_rejected():
    with pytest.raises(ValueError, match="empty"):
        evaluate(toy("spatial"), toy("temporal"), [], CANVAS)


def test_failures_counted_and_run_continues():
    def broken():
        raise OSError("missing frames")

    good = EvalItem("ok", 0, lambda: rgb_video(), lambda: np.zeros((29, 2, 10, 12)))
    short = EvalItem("short", 0, lambda: rgb_video(), lambda: np.zeros((5, 2, 10, 12)))
    items = [EvalItem("bad", 0, broken, broken), good, short]
    report = evaluate(toy("spatial"), toy("temporal"), items, CANVAS)
    assert report.failures == 2 and len(report.results) == 1
    assert report.summary()["videos"] == 1
