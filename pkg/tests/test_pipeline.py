import json
import math
from pathlib import Path

import numpy as np
import pytest

from gazehead.errors import ConfigurationError, ParseError, ValidationError
from gazehead.pipeline import (
    DatasetManifest,
    FilterPolicy,
    NormStats,
    compute_norm_stats,
    filter_videos,
    ingest,
    load_manifest,
    parse_frame_record,
    prepare,
    resample,
    save_manifest,
    split_by_subject,
    usable_runs,
    window,
)
from gazehead.types import MotionKind

from conftest import make_records, records_to_lines

FIXTURE = Path(__file__).parent / "data" / "filter_fixture.json"


class TestIngest:
    def test_two_videos(self):
        lines = records_to_lines(make_records("a", n=100) + make_records("b", n=100))
        videos = ingest(lines)
        assert [len(v) for v in videos] == [100, 100]
        assert videos[0][0].video_id == "a"

    def test_interleaved_videos(self):
        a = records_to_lines(make_records("a", n=3))
        b = records_to_lines(make_records("b", n=3))
        videos = ingest([a[0], b[0], a[1], b[1], a[2], b[2]])
        assert [v[0].video_id for v in videos] == ["a", "b"]
        assert [r.frame_index for r in videos[0]] == [0, 1, 2]

    def test_out_of_order_rejected(self):
        records = make_records("vid7", n=5)
        lines = records_to_lines([records[0], records[2], records[1]])
        with pytest.raises(ValidationError, match="vid7"):
            ingest(lines)

    def test_duplicate_rejected(self):
        records = make_records("vid9", n=3)
        lines = records_to_lines([records[0], records[1], records[1]])
        with pytest.raises(ValidationError, match="duplicate"):
            ingest(lines)

    def test_empty_input(self):
        assert ingest([]) == []
        assert ingest(["", "   "]) == []

    def test_malformed_json_names_line(self):
        lines = records_to_lines(make_records(n=2)) + ["{not json"]
        with pytest.raises(ParseError, match="line 3"):
            ingest(lines)

    def test_missing_field_names_line(self):
        with pytest.raises(ParseError, match="line 1"):
            ingest([json.dumps({"video_id": "v", "frame_index": 0})])

    def test_angles_parsed_as_degrees(self):
        obj = {
            "video_id": "v", "subject_id": "s", "frame_index": 0,
            "gaze": {"pitch": 90.0, "yaw": -45.0}, "head": None,
            "face_count": 1, "glasses_flag": False, "scene_cut_flag": False,
        }
        record = parse_frame_record(obj)
        assert record.gaze.pitch == pytest.approx(math.pi / 2)
        assert record.gaze.yaw == pytest.approx(-math.pi / 4)
        assert record.head is None


class TestFilterVideos:
    def test_glasses_dropped(self):
        videos = [make_records("clean"), make_records("shady", glasses={3})]
        kept, rejections = filter_videos(videos, FilterPolicy())
        assert [v[0].video_id for v in kept] == ["clean"]
        assert rejections[0].video_id == "shady"
        assert rejections[0].rule == "eyewear"

    def test_clean_video_kept(self):
        kept, rejections = filter_videos([make_records()], FilterPolicy())
        assert len(kept) == 1 and not rejections

    def test_bad_fraction_threshold(self):
        # 15 of 100 frames flagged against max_bad_frame_fraction=0.10
        face_counts = [0 if t < 15 else 1 for t in range(100)]
        videos = [make_records("gappy", n=100, face_counts=face_counts)]
        kept, rejections = filter_videos(videos, FilterPolicy(max_bad_frame_fraction=0.10))
        assert not kept
        assert rejections[0].rule == "detection_failures"
        assert "0.150" in rejections[0].detail

    def test_bad_fraction_under_threshold_kept(self):
        face_counts = [0 if t < 8 else 1 for t in range(100)]
        videos = [make_records("okish", n=100, face_counts=face_counts)]
        kept, rejections = filter_videos(videos, FilterPolicy(max_bad_frame_fraction=0.10))
        assert len(kept) == 1 and not rejections

    def test_scene_cut_drop_policy(self):
        videos = [make_records("cutty", cuts={20})]
        kept, rejections = filter_videos(videos, FilterPolicy(scene_cut_policy="drop"))
        assert not kept
        assert rejections[0].rule == "scene_cuts"

    def test_scene_cut_split_policy(self):
        videos = [make_records("cutty", n=60, cuts={20})]
        kept, rejections = filter_videos(videos, FilterPolicy(scene_cut_policy="split"))
        assert not rejections
        assert [v[0].video_id for v in kept] == ["cutty#seg0", "cutty#seg1"]
        assert [len(v) for v in kept] == [20, 40]
        assert not any(r.scene_cut_flag for v in kept for r in v)

    def test_order_independence(self):
        videos = [
            make_records("a"),
            make_records("b", glasses={1}),
            make_records("c", cuts={5}),
            make_records("d"),
        ]
        policy = FilterPolicy(scene_cut_policy="drop")
        kept_fwd, _ = filter_videos(videos, policy)
        kept_rev, _ = filter_videos(videos[::-1], policy)
        assert {v[0].video_id for v in kept_fwd} == {v[0].video_id for v in kept_rev}

    def test_fixture_reproduces_rules(self):
        fixture = json.loads(FIXTURE.read_text())
        lines = [json.dumps(r) for r in fixture["records"]]
        videos = ingest(lines)
        assert len(videos) == 20
        kept, rejections = filter_videos(videos, FilterPolicy(**fixture["policy"]))
        assert sorted(v[0].video_id for v in kept) == fixture["expected_kept"]
        all_ids = {r["video_id"] for r in fixture["records"]}
        assert {r.video_id for r in rejections} == all_ids - set(fixture["expected_kept"])


class TestResample:
    def test_25_to_5(self):
        seq = make_records(n=60)
        out = resample(seq, 25.0, 5.0)
        assert len(out) == 12
        assert [r.frame_index for r in out] == list(range(0, 60, 5))

    def test_equal_fps_identity(self):
        seq = make_records(n=17)
        assert resample(seq, 5.0, 5.0) == seq

    def test_ceil_length(self):
        out = resample(make_records(n=61), 25.0, 5.0)
        assert len(out) == 13
        assert out[-1].frame_index == 60

    def test_non_divisible_rejected(self):
        with pytest.raises(ConfigurationError):
            resample(make_records(n=10), 24.0, 5.0)


class TestWindow:
    def test_two_windows_context_chain(self):
        seq = make_records(n=24)
        windows = window(seq, 12, 5.0)
        assert len(windows) == 2
        w0, w1 = windows
        assert not w0.has_context and w1.has_context
        np.testing.assert_allclose(w1.context_array, w0.head.angles[10:12])
        assert w1.start_frame == 12

    def test_exact_length_single_window(self):
        windows = window(make_records(n=12), 12, 5.0)
        assert len(windows) == 1
        assert not windows[0].has_context
        np.testing.assert_array_equal(windows[0].context_array, np.zeros((2, 2)))

    def test_too_short_empty(self):
        assert window(make_records(n=11), 12, 5.0) == []

    def test_frame_conservation(self):
        for n in (12, 13, 24, 47, 120):
            windows = window(make_records(n=n), 12, 5.0)
            assert sum(w.num_frames for w in windows) == 12 * (n // 12)

    def test_small_window_size_rejected(self):
        with pytest.raises(ConfigurationError):
            window(make_records(n=12), 2, 5.0)

    def test_unusable_frame_rejected(self):
        seq = make_records(n=12, face_counts=[1] * 11 + [0])
        with pytest.raises(ValidationError):
            window(seq, 12, 5.0)

    def test_usable_runs(self):
        seq = make_records(n=30, face_counts=[1] * 10 + [0] + [1] * 19)
        runs = usable_runs(seq)
        assert [len(r) for r in runs] == [10, 19]


class TestSplitBySubject:
    def _windows(self, num_subjects=10, per_subject=3):
        out = []
        for s in range(num_subjects):
            for v in range(per_subject):
                records = make_records(f"v{s}_{v}", subject_id=f"subj{s}", n=12)
                out.extend(window(records, 12, 5.0))
        return out

    def test_fraction_and_disjoint(self):
        windows = self._windows(10)
        train, test = split_by_subject(windows, 0.2, seed=3)
        assert len(test.subject_ids) == 2
        assert not (train.subject_ids & test.subject_ids)
        assert len(train.windows) + len(test.windows) == len(windows)

    def test_deterministic(self):
        windows = self._windows(7)
        first = split_by_subject(windows, 0.3, seed=11)
        second = split_by_subject(windows, 0.3, seed=11)
        assert first[1].subject_ids == second[1].subject_ids
        third = split_by_subject(windows, 0.3, seed=12)
        assert {w.video_id for w in first[1].windows} != {w.video_id for w in third[1].windows} or (
            first[1].subject_ids != third[1].subject_ids
        )

    def test_single_subject_rejected(self):
        windows = self._windows(1)
        with pytest.raises(ConfigurationError):
            split_by_subject(windows, 0.2, seed=0)


class TestNormStats:
    def test_constant_dimension_fallback(self):
        windows = window(make_records(n=24, head_fn=lambda t: (0.25, 0.25)), 12, 5.0)
        with pytest.warns(UserWarning, match="zero-variance"):
            stats = compute_norm_stats(windows)
        assert stats.std[2] == 1.0 and stats.std[3] == 1.0
        assert stats.mean[2] == pytest.approx(0.25)

    def test_roundtrip(self, rng):
        windows = window(
            make_records(
                n=48,
                gaze_fn=lambda t: (0.3 * math.sin(t), 0.4 * math.cos(t)),
                head_fn=lambda t: (0.2 * math.sin(t + 1), 0.1 * math.cos(t + 2)),
            ),
            12,
            5.0,
        )
        stats = compute_norm_stats(windows)
        x = rng.uniform(-1, 1, size=(30, 2))
        for kind in (MotionKind.GAZE, MotionKind.HEAD):
            back = stats.denormalize(stats.normalize(x, kind), kind)
            np.testing.assert_allclose(back, x, atol=1e-9)

    def test_textbook_three_samples(self):
        # population mean/std over three hand-picked frames
        values = [(0.1, 0.2, -0.1, 0.0), (0.2, 0.0, 0.1, 0.3), (0.3, 0.4, 0.0, 0.3)]
        records = make_records(
            n=12,
            gaze_fn=lambda t: values[min(t, 2)][:2],
            head_fn=lambda t: values[min(t, 2)][2:],
        )
        # use only 3 distinct frames by truncating: build windows over 12 frames
        # where frames 2..11 repeat values[2]
        windows = window(records, 12, 5.0)
        stacked = np.array([values[min(t, 2)] for t in range(12)])
        stats = compute_norm_stats(windows)
        np.testing.assert_allclose(stats.mean, stacked.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(stats.std, stacked.std(axis=0), atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            compute_norm_stats([])

    def test_positive_std_required(self):
        with pytest.raises(ValueError):
            NormStats(mean=np.zeros(4), std=np.array([1.0, 1.0, 0.0, 1.0]))


class TestManifestIO:
    def _manifest(self):
        records = make_records(n=48)
        windows = window(records, 12, 5.0)
        manifest = DatasetManifest(split="train", windows=windows, source_fps=5.0, model_fps=5.0)
        manifest.normalization = compute_norm_stats(windows)
        return manifest

    def test_roundtrip(self, tmp_path):
        manifest = self._manifest()
        path = tmp_path / "m.jsonl"
        save_manifest(manifest, path)
        loaded = load_manifest(path)
        assert loaded.split == "train"
        assert len(loaded.windows) == len(manifest.windows)
        for a, b in zip(loaded.windows, manifest.windows):
            np.testing.assert_allclose(a.gaze.angles, b.gaze.angles, atol=1e-12)
            np.testing.assert_allclose(a.head.angles, b.head.angles, atol=1e-12)
            np.testing.assert_allclose(a.context_array, b.context_array, atol=1e-12)
            assert (a.video_id, a.subject_id, a.start_frame, a.has_context) == (
                b.video_id, b.subject_id, b.start_frame, b.has_context,
            )
        np.testing.assert_allclose(loaded.normalization.mean, manifest.normalization.mean)

    def test_save_is_deterministic(self, tmp_path):
        manifest = self._manifest()
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_manifest(manifest, p1)
        save_manifest(manifest, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_non_manifest(self, tmp_path):
        path = tmp_path / "x.jsonl"
        path.write_text('{"foo": 1}\n')
        with pytest.raises(ParseError):
            load_manifest(path)


class TestPrepare:
    def test_end_to_end(self):
        videos = []
        for s in range(6):
            for v in range(2):
                videos.append(
                    make_records(f"v{s}_{v}", subject_id=f"subj{s}", n=120,
                                 gaze_fn=lambda t: (0.3 * math.sin(0.2 * t), 0.2 * math.cos(0.1 * t)),
                                 head_fn=lambda t: (0.2 * math.sin(0.2 * t + 1), 0.1 * math.cos(0.1 * t)))
                )
        videos.append(make_records("dropme", subject_id="subj0", n=120, glasses={5}))
        train, test, rejections = prepare(
            videos, source_fps=25.0, model_fps=5.0, window_frames=12,
            test_fraction=0.2, seed=0,
        )
        assert rejections[0].video_id == "dropme"
        assert not (train.subject_ids & test.subject_ids)
        assert train.normalization is test.normalization
        # 120 frames at stride 5 -> 24 model frames -> 2 windows per video
        assert len(train.windows) + len(test.windows) == 24
