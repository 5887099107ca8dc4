import json

import numpy as np
import pytest

import actionspotter as asp


def two_segment_gt():
    video = asp.VideoAnnotation("a", 50, [asp.GroundTruthSegment(0, 10, 20), asp.GroundTruthSegment(0, 30, 40)])
    return asp.AnnotationSet(1, [video])


def test_redraw_fixture_scores_five_sixths():
    dets = [
        asp.DetectionSegment("a", 0, 10, 20, 0.9),
        asp.DetectionSegment("a", 0, 11, 20, 0.8),
        asp.DetectionSegment("a", 0, 30, 40, 0.7),
    ]
    spots = asp.redraw_detections(dets)
    assert [s.timestamp for s in spots] == [15, 15, 35]
    assert [s.likelihood for s in spots] == [0.9, 0.8, 0.7]
    assert asp.spotting_map(spots, two_segment_gt()) == pytest.approx(5 / 6, abs=1e-12)


def test_accumulator_tracks_from_scratch_map():
    gt = two_segment_gt()
    acc = asp.MapAccumulator(gt)
    rng = np.random.default_rng(3)
    spots = []
    for _ in range(50):
        s = asp.SpotPrediction("a", int(rng.integers(0, 50)), float(rng.integers(0, 10)) / 10, 0)
        acc.insert(s)
        spots.append(s)
        assert acc.map() == pytest.approx(asp.spotting_map(spots, gt), abs=1e-12)
    assert len(acc) == 50


def test_errors_are_typed():
    with pytest.raises(asp.CrossReferenceError):
        asp.spotting_map([asp.SpotPrediction("nope", 1, 0.5, 0)], two_segment_gt())
    with pytest.raises(asp.Error):
        asp.skip_ratio(0, 10)


def test_discounted_return_and_frame_label():
    r = asp.discounted_return([0.0, 0.0, 0.0, 1.0], 0.9)
    assert r["total"] == pytest.approx(0.9**4)
    video = two_segment_gt().videos[0]
    assert asp.frame_label(video, 15) == 0
    assert asp.frame_label(video, 25) == -1


def test_synth_shapes():
    data = asp.synth_generate(json.dumps({"train_videos": 3, "val_videos": 2, "frames": 40, "max_segments": 2,
                                          "max_segment_length": 6, "seed": 4}))
    assert len(data["train"]["features"]) == 3
    assert data["train"]["features"][0].shape == (40, 16)
    assert data["val"]["annotations"].num_classes == 4
    for video in data["train"]["annotations"].videos:
        assert 1 <= len(video.segments) <= 2


def test_cli_usage_and_eval(tmp_path):
    code, _, _ = asp.run_cli([])
    assert code == 1
    gt = tmp_path / "gt.json"
    gt.write_text(two_segment_gt().to_json())
    pred = tmp_path / "p.jsonl"
    pred.write_text(asp.dump_predictions([asp.SpotPrediction("a", 15, 0.9, 0)]))
    code, out, _ = asp.run_cli(["eval", "--gt", str(gt), "--pred", str(pred)])
    assert code == 0
    assert json.loads(out)["map"] == pytest.approx(0.5)
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"video": "a"}\n')
    assert asp.run_cli(["eval", "--gt", str(gt), "--pred", str(bad)])[0] == 2
