"""Smoke test for the cornercase_py extension module."""

import math
import tempfile
from pathlib import Path

import cornercase_py as cc

SCENARIO = """
height = 48
width = 96
frames = 24
seed = 3
event_span = 3
background.amplitude = 20
background.tile = 4x4
sprite = class=14 size=10x16 pos=10,4 vel=0,4 intensity=220 ramp=2
sprite = class=12 size=14x6 pos=30,70 vel=0,-1 intensity=30 ramp=2
event = sprite=2 frame=15 vel=0,3
"""


def main():
    a = cc.Frame.filled(16, 16, 1, 10)
    b = cc.Frame(16, 16, 1, bytes([20] * 256))
    assert a.shape == (16, 16, 1)
    assert cc.mse(a, b) == 100.0
    assert abs(cc.psnr(a, b) - 10 * math.log10(255**2 / 100)) < 1e-9
    assert math.isinf(cc.psnr(a, a))
    assert abs(cc.ssim(a, a) - 1.0) < 1e-9
    assert cc.blur(a).data() == a.data()

    mean, per_class = cc.iou(1, 4, [1, 1, 2, 0], [1, 2, 2, 2])
    assert per_class == {1: 0.5, 2: 1 / 3}
    assert abs(mean - (0.5 + 1 / 3) / 2) < 1e-12

    assert cc.normalize_series([2.0, 4.0, 3.0]) == [0.0, 1.0, 0.5]
    assert cc.normalize_series([5.0, 5.0], "online") == [0.0, 0.0]
    events = cc.threshold_events([(1, 0.1), (2, 0.7), (3, 0.9), (4, 0.2)], 0.5)
    assert events == [(1, 2, 3, 3, 0.9)]

    frames, masks, logged = cc.generate_scenario(SCENARIO)
    assert len(frames) == 24 and len(masks) == 24
    assert logged[0][:3] == (15, 17, 12)

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        cc.write_scenario(SCENARIO, tmp / "data")
        first = cc.load_frame(tmp / "data" / "frames" / "000001.png")
        assert first.data() == frames[0].data()
        scores, events = cc.score_directory(
            tmp / "data" / "frames", tmp / "data" / "masks", out=tmp / "out"
        )
        assert len(scores) == 24
        assert scores[0][3] and scores[1][3] and not scores[2][3]
        peak = max(scores, key=lambda r: r[2])
        assert 15 <= peak[0] <= 17, peak
        assert (tmp / "out" / "scores.csv").is_file()
        assert events

    print("cornercase_py smoke test passed")


if __name__ == "__main__":
    main()
