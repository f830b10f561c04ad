import numpy as np
import pytest

from softhand.grasp import (
    GraspError,
    generate_dataset,
    intersection_over_union,
    kfold_by_run,
    load_class_runs,
    load_dataset,
    pixel_accuracy,
    quartile_accuracy,
    save_dataset,
)
from softhand.grasp.scene import count_subimages, generate_run


@pytest.fixture(scope="module")
def small_dataset():
    return generate_dataset(object_classes=["strawberry", "cup"], runs_per_class=11, seed=3)


class TestGenerator:
    def test_five_by_eleven_gives_about_1780_subimages(self):
        runs = generate_dataset(seed=0)
        assert len(runs) == 55
        n = count_subimages(runs)
        assert 1700 <= n <= 1860  # 55 runs x ~6.47 frames x 5 cameras

    def test_same_seed_identical_dataset(self):
        a = generate_run("lemon", 2, seed=5, class_index=1)
        b = generate_run("lemon", 2, seed=5, class_index=1)
        for fa, fb in zip(a.frames, b.frames):
            assert fa.progress == fb.progress
            for cam in range(5):
                np.testing.assert_array_equal(fa.images[cam], fb.images[cam])
                np.testing.assert_array_equal(fa.masks[cam], fb.masks[cam])

    def test_different_seed_differs(self):
        a = generate_run("lemon", 2, seed=5, class_index=1)
        b = generate_run("lemon", 2, seed=6, class_index=1)
        assert any(
            not np.array_equal(fa.images[0], fb.images[0])
            for fa, fb in zip(a.frames, b.frames)
        )

    def test_progress_strictly_increasing(self, small_dataset):
        for run in small_dataset:
            progress = [f.progress for f in run.frames]
            assert all(b > a for a, b in zip(progress, progress[1:]))
            assert progress[0] == 0.0 and progress[-1] == 1.0

    def test_coverage_monotone_and_first_below_last(self, small_dataset):
        for run in small_dataset:
            for cam in range(5):
                covs = [float(f.masks[cam].mean()) for f in run.frames]
                assert all(b >= a for a, b in zip(covs, covs[1:])), (run.run_id, cam)
                assert covs[0] < covs[-1]

    def test_mask_is_exact_footprint(self, small_dataset):
        frame = small_dataset[0].frames[-1]
        assert frame.masks[0].dtype == bool
        assert frame.masks[0].shape == (72, 88)
        assert frame.images[0].shape == (72, 88, 3)

    def test_distortion_only_changes_late_frames(self):
        on = generate_run("cup", 1, seed=9, class_index=4, distortion=True)
        off = generate_run("cup", 1, seed=9, class_index=4, distortion=False)
        first_on, first_off = on.frames[0], off.frames[0]
        for cam in range(5):
            np.testing.assert_array_equal(first_on.images[cam], first_off.images[cam])
        last_on, last_off = on.frames[-1], off.frames[-1]
        assert any(
            not np.array_equal(last_on.images[cam], last_off.images[cam]) for cam in range(5)
        )
        # ground truth identical either way
        for fa, fb in zip(on.frames, off.frames):
            for cam in range(5):
                np.testing.assert_array_equal(fa.masks[cam], fb.masks[cam])

    def test_zero_classes_rejected(self):
        with pytest.raises(GraspError):
            generate_dataset(object_classes=[], seed=0)

    def test_unknown_class_rejected(self):
        with pytest.raises(GraspError):
            generate_run("banana", 0, seed=0, class_index=0)


class TestDatasetDisk:
    def test_save_load_round_trip(self, tmp_path, small_dataset):
        root = tmp_path / "ds"
        save_dataset(small_dataset, root, meta={"seed": 3})
        loaded = load_dataset(root)
        assert len(loaded) == len(small_dataset)
        by_id = {r.run_id: r for r in loaded}
        for run in small_dataset:
            other = by_id[run.run_id]
            assert other.object_class == run.object_class
            assert len(other.frames) == len(run.frames)
            for fa, fb in zip(run.frames, other.frames):
                assert fb.progress == pytest.approx(fa.progress, abs=1e-6)
                for cam in range(5):
                    np.testing.assert_array_equal(fa.images[cam], fb.images[cam])
                    np.testing.assert_array_equal(fa.masks[cam], fb.masks[cam])

    def test_manifest_format(self, tmp_path, small_dataset):
        root = tmp_path / "ds"
        save_dataset(small_dataset, root)
        run_dir = root / "strawberry" / "run_00"
        lines = (run_dir / "manifest.txt").read_text().splitlines()
        first = dict(part.split("=", 1) for part in lines[0].split())
        assert set(first) == {"file", "camera_id", "progress", "class", "run_id"}
        assert first["class"] == "strawberry"

    def test_missing_class_rejected(self, tmp_path):
        with pytest.raises(GraspError):
            load_class_runs(tmp_path, "bowl")


class TestKfold:
    def test_eleven_folds_each_testing_one_run(self, small_dataset):
        runs = [r for r in small_dataset if r.object_class == "cup"]
        folds = kfold_by_run(runs, k=11)
        assert len(folds) == 11
        for i, (train_runs, test_runs) in enumerate(folds):
            assert len(test_runs) == 1 and len(train_runs) == 10
            assert test_runs[0].run_id == runs[i].run_id

    def test_partition_property(self, small_dataset):
        runs = [r for r in small_dataset if r.object_class == "cup"]
        folds = kfold_by_run(runs, k=11)
        test_ids = [fold[1][0].run_id for fold in folds]
        assert sorted(test_ids) == sorted(r.run_id for r in runs)
        assert len(set(test_ids)) == 11

    def test_zero_leakage(self, small_dataset):
        runs = [r for r in small_dataset if r.object_class == "strawberry"]
        for train_runs, test_runs in kfold_by_run(runs, k=11):
            train_ids = {r.run_id for r in train_runs}
            test_ids = {r.run_id for r in test_runs}
            assert not train_ids & test_ids
            assert train_ids | test_ids == {r.run_id for r in runs}

    def test_wrong_run_count_rejected(self, small_dataset):
        runs = [r for r in small_dataset if r.object_class == "cup"][:7]
        with pytest.raises(GraspError):
            kfold_by_run(runs, k=11)

    def test_mixed_classes_rejected(self, small_dataset):
        strawberry = [r for r in small_dataset if r.object_class == "strawberry"]
        cup = [r for r in small_dataset if r.object_class == "cup"]
        with pytest.raises(GraspError):
            kfold_by_run(strawberry[:6] + cup[:5], k=11)


class TestMetrics:
    def test_identical_masks(self):
        mask = np.random.default_rng(0).random((72, 88)) > 0.5
        assert pixel_accuracy(mask, mask) == 1.0

    def test_complement_masks(self):
        mask = np.random.default_rng(1).random((72, 88)) > 0.5
        assert pixel_accuracy(mask, ~mask) == 0.0

    def test_half_disagreement(self):
        a = np.zeros((72, 88), dtype=bool)
        b = np.zeros((72, 88), dtype=bool)
        b.flat[:3168] = True  # 3168 = 6336 / 2 differing pixels
        assert pixel_accuracy(a, b) == 0.5

    def test_symmetry_property(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            a = rng.random((9, 11)) > 0.4
            b = rng.random((9, 11)) > 0.6
            assert pixel_accuracy(a, b) == pixel_accuracy(b, a)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(GraspError):
            pixel_accuracy(np.zeros((4, 4), bool), np.zeros((4, 5), bool))

    def test_non_binary_rejected(self):
        with pytest.raises(GraspError):
            pixel_accuracy(np.full((4, 4), 3), np.zeros((4, 4), bool))

    def test_iou(self):
        a = np.zeros((4, 4), bool)
        a[:2] = True
        b = np.zeros((4, 4), bool)
        b[1:3] = True
        assert intersection_over_union(a, b) == pytest.approx(4 / 12)
        assert intersection_over_union(a, a) == 1.0


class TestQuartiles:
    def test_all_ones(self):
        records = [(p, 1.0) for p in np.linspace(0, 1, 40)]
        stats = quartile_accuracy(records)
        assert [s["mean"] for s in stats] == [1.0, 1.0, 1.0, 1.0]

    def test_binning_is_exhaustive_and_disjoint(self):
        records = [(p, 0.5) for p in np.linspace(0, 1, 101)]
        stats = quartile_accuracy(records)
        assert sum(s["count"] for s in stats) == 101
        # right-open bins except the last: 0.25 falls in Q2, 1.0 in Q4
        assert quartile_accuracy([(0.25, 1.0)])[1]["count"] == 1
        assert quartile_accuracy([(1.0, 1.0)])[3]["count"] == 1
        assert quartile_accuracy([(0.0, 1.0)])[0]["count"] == 1

    def test_empty_bin_reported_absent(self):
        stats = quartile_accuracy([(0.1, 0.9)])
        assert stats[0]["count"] == 1
        for s in stats[1:]:
            assert s["count"] == 0 and s["mean"] is None and s["std"] is None

    def test_mean_and_std(self):
        stats = quartile_accuracy([(0.1, 0.8), (0.2, 0.6)])
        assert stats[0]["mean"] == pytest.approx(0.7)
        assert stats[0]["std"] == pytest.approx(0.1)

    def test_out_of_range_progress_rejected(self):
        with pytest.raises(GraspError):
            quartile_accuracy([(1.5, 0.9)])

    def test_reference_profile_shape(self):
        # the measured-hand profile declines across quartiles; binning must
        # preserve exactly that ordering when fed matching records
        profile = [0.98, 0.96, 0.89, 0.74]
        records = []
        for q, acc in enumerate(profile):
            for p in np.linspace(q * 0.25 + 0.01, (q + 1) * 0.25 - 0.01, 5):
                records.append((p, acc))
        stats = quartile_accuracy(records)
        means = [s["mean"] for s in stats]
        assert means == pytest.approx(profile)
        assert all(b < a for a, b in zip(means, means[1:]))
