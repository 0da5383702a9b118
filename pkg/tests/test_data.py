import os
import struct
from pathlib import Path

import numpy as np
import pytest

from backdoorlab.data import (
    Dataset,
    FixedTargetMap,
    RandomWrongMap,
    ShiftLabelMap,
    TriggerSpec,
    apply_trigger,
    backdoored_testset,
    digit_templates,
    load_idx,
    poison,
    split_validation,
    synth_digits,
)


def write_idx_pair(tmp_path: Path, pixels: bytes, labels: bytes, count: int,
                   rows: int = 2, cols: int = 2, image_magic: int = 0x803,
                   label_magic: int = 0x801, label_count: int = None):
    images_path = tmp_path / "images.idx"
    labels_path = tmp_path / "labels.idx"
    images_path.write_bytes(struct.pack(">IIII", image_magic, count, rows, cols) + pixels)
    labels_path.write_bytes(struct.pack(">II", label_magic,
                                        count if label_count is None else label_count) + labels)
    return str(images_path), str(labels_path)


class TestLoadIdx:
    def test_two_image_fixture_bit_exact(self, tmp_path):
        pixels = bytes([0, 255, 0, 255]) + bytes([255, 0, 255, 0])
        imgs, labs = write_idx_pair(tmp_path, pixels, bytes([1, 0]), count=2)
        ds = load_idx(imgs, labs)
        assert len(ds) == 2
        assert ds.image_shape == (1, 2, 2)
        assert np.array_equal(ds.images[0, 0], [[0.0, 1.0], [0.0, 1.0]])
        assert np.array_equal(ds.images[1, 0], [[1.0, 0.0], [1.0, 0.0]])
        assert ds.labels.tolist() == [1, 0]

    def test_wrong_image_magic_rejected(self, tmp_path):
        imgs, labs = write_idx_pair(tmp_path, bytes(8), bytes(2), count=2, image_magic=0x801)
        with pytest.raises(ValueError, match="magic"):
            load_idx(imgs, labs)

    def test_image_magic_in_label_file_rejected(self, tmp_path):
        imgs, labs = write_idx_pair(tmp_path, bytes(8), bytes(2), count=2, label_magic=0x803)
        with pytest.raises(ValueError, match="magic"):
            load_idx(imgs, labs)

    def test_count_mismatch_rejected(self, tmp_path):
        imgs, labs = write_idx_pair(tmp_path, bytes(8), bytes(3), count=2, label_count=3)
        with pytest.raises(ValueError, match="count"):
            load_idx(imgs, labs)

    def test_truncated_pixels_rejected(self, tmp_path):
        imgs, labs = write_idx_pair(tmp_path, bytes(5), bytes(2), count=2)
        with pytest.raises(ValueError, match="bytes"):
            load_idx(imgs, labs)

    @pytest.mark.skipif(
        not os.path.exists(os.path.join(os.environ.get("BACKDOORLAB_DATA", ""),
                                        "train-images-idx3-ubyte")),
        reason="real MNIST files not present under $BACKDOORLAB_DATA",
    )
    def test_real_mnist_shapes(self):
        root = os.environ["BACKDOORLAB_DATA"]
        ds = load_idx(os.path.join(root, "train-images-idx3-ubyte"),
                      os.path.join(root, "train-labels-idx1-ubyte"))
        assert len(ds) == 60000
        assert ds.image_shape == (1, 28, 28)


class TestSynthDigits:
    def test_zero_noise_identical_within_class(self):
        ds = synth_digits(classes=4, per_class=3, noise=0.0, seed=0)
        for c in range(4):
            block = ds.images[ds.labels == c]
            assert np.array_equal(block[0], block[1])
            assert np.array_equal(block[0], block[2])

    def test_same_seed_identical(self):
        a = synth_digits(classes=10, per_class=5, noise=0.1, seed=42)
        b = synth_digits(classes=10, per_class=5, noise=0.1, seed=42)
        assert np.array_equal(a.images, b.images)
        assert np.array_equal(a.labels, b.labels)

    def test_pixel_bounds(self):
        ds = synth_digits(classes=10, per_class=10, noise=0.5, seed=1)
        assert ds.images.min() >= 0.0
        assert ds.images.max() <= 1.0

    def test_templates_distinct_and_corner_free(self):
        t = digit_templates()
        for i in range(10):
            for j in range(i + 1, 10):
                assert not np.array_equal(t[i], t[j])
        assert np.all(t[:, 13:, 13:] == 0.0)  # default trigger corner untouched

    def test_too_many_classes_rejected(self):
        with pytest.raises(ValueError, match="classes"):
            synth_digits(classes=11, per_class=1, noise=0.0, seed=0)

    def test_linear_classifier_separates_noisy_digits(self):
        # trained with the package's own SGD loop; templates are separable
        from backdoorlab import network
        from backdoorlab.evaluation import accuracy

        ds = synth_digits(classes=10, per_class=30, noise=0.1, seed=7)
        spec = network.ModelSpec(
            input_shape=(1, 16, 16),
            layers=(network.Flatten(), network.Output(256, 10)),
        )
        cfg = network.TrainConfig(epochs=40, batch_size=16, learning_rate=0.1, seed=0)
        params = network.train(spec, network.init_params(spec, seed=0), ds, cfg)
        assert accuracy(spec, params, ds) >= 0.99


class TestTrigger:
    def test_patch_sets_exactly_nine_ones(self):
        trig = TriggerSpec(row=0, col=0, height=3, width=3, value=1.0,
                           label_map=ShiftLabelMap())
        img = np.zeros((1, 8, 8))
        out = apply_trigger(img, trig)
        assert out.sum() == 9.0
        assert np.all(out[:, :3, :3] == 1.0)

    def test_idempotent(self):
        trig = TriggerSpec.bottom_right((16, 16), label_map=ShiftLabelMap())
        img = synth_digits(classes=3, per_class=1, noise=0.2, seed=3).images[0]
        once = apply_trigger(img, trig)
        twice = apply_trigger(once, trig)
        assert np.array_equal(once, twice)

    def test_pixels_outside_patch_untouched(self):
        trig = TriggerSpec(row=2, col=3, height=2, width=2, value=0.5,
                           label_map=ShiftLabelMap())
        img = np.random.default_rng(0).uniform(size=(1, 8, 8))
        out = apply_trigger(img, trig)
        mask = np.ones((1, 8, 8), dtype=bool)
        mask[:, 2:4, 3:5] = False
        assert np.array_equal(out[mask], img[mask])

    def test_out_of_bounds_rejected(self):
        trig = TriggerSpec(row=6, col=6, height=3, width=3, value=1.0,
                           label_map=ShiftLabelMap())
        with pytest.raises(ValueError, match="fit"):
            apply_trigger(np.zeros((1, 8, 8)), trig)


def small_train_set(per_class=30, classes=10, seed=11):
    return synth_digits(classes=classes, per_class=per_class, noise=0.1, seed=seed)


class TestPoison:
    trig = TriggerSpec.bottom_right((16, 16), label_map=ShiftLabelMap())

    def test_zero_fraction_is_identity(self):
        ds = small_train_set()
        out = poison(ds, self.trig, fraction=0.0, seed=0)
        assert np.array_equal(out.images, ds.images)
        assert np.array_equal(out.labels, ds.labels)

    def test_full_fraction_append_doubles(self):
        ds = small_train_set(per_class=5)
        out = poison(ds, self.trig, fraction=1.0, mode="append", seed=0)
        assert len(out) == 2 * len(ds)
        added = out.images[len(ds):]
        assert np.all(added[:, :, 13:, 13:] == 1.0)
        assert np.array_equal(out.labels[len(ds):].shape, (len(ds),))

    def _match_added_to_originals(self, ds, out):
        """Map each appended sample back to its source by untriggered pixels."""
        outside = np.ones((16, 16), dtype=bool)
        outside[13:, 13:] = False
        key_of = {}
        for idx in range(len(ds)):
            key_of[ds.images[idx, 0][outside].tobytes()] = idx
        sources = []
        for img in out.images[len(ds):]:
            sources.append(key_of[img[0][outside].tobytes()])
        return np.array(sources)

    def test_append_histogram_matches_independent_recount(self):
        ds = small_train_set(per_class=300, classes=10, seed=5)
        assert len(ds) == 3000
        out = poison(ds, self.trig, fraction=0.1, mode="append", seed=9)
        assert len(out) == 3300
        sources = self._match_added_to_originals(ds, out)
        added_labels = out.labels[len(ds):]
        expected = (ds.labels[sources] + 1) % 10
        assert np.array_equal(added_labels, expected)
        assert np.array_equal(
            np.bincount(added_labels, minlength=10),
            np.bincount(expected, minlength=10),
        )

    def test_attack_label_never_equals_original(self):
        ds = small_train_set(per_class=20)
        out = poison(ds, self.trig, fraction=0.25, mode="append", seed=2)
        sources = self._match_added_to_originals(ds, out)
        assert np.all(out.labels[len(ds):] != ds.labels[sources])

    def test_fixed_target_skips_target_class(self):
        trig = TriggerSpec.bottom_right((16, 16), label_map=FixedTargetMap(target=3))
        ds = small_train_set(per_class=20)
        out = poison(ds, trig, fraction=0.2, mode="append", seed=4)
        sources = self._match_added_to_originals(ds, out)
        assert np.all(ds.labels[sources] != 3)
        assert np.all(out.labels[len(ds):] == 3)

    def test_replace_mode_keeps_size(self):
        ds = small_train_set(per_class=10)
        out = poison(ds, self.trig, fraction=0.3, mode="replace", seed=1)
        assert len(out) == len(ds)
        changed = np.flatnonzero(out.labels != ds.labels)
        assert len(changed) == int(np.ceil(0.3 * len(ds)))
        assert np.all(out.images[changed][:, :, 13:, 13:] == 1.0)

    def test_only_training_split_poisonable(self):
        ds = synth_digits(classes=3, per_class=4, noise=0.0, seed=0, role="valid")
        with pytest.raises(ValueError, match="train"):
            poison(ds, self.trig, fraction=0.5, seed=0)

    def test_same_seed_same_poison(self):
        ds = small_train_set(per_class=15)
        a = poison(ds, self.trig, fraction=0.2, seed=6)
        b = poison(ds, self.trig, fraction=0.2, seed=6)
        assert np.array_equal(a.images, b.images)
        assert np.array_equal(a.labels, b.labels)


class TestBackdooredTestset:
    def test_empty_dataset(self):
        empty = synth_digits(classes=3, per_class=0, noise=0.0, seed=0, role="test")
        out = backdoored_testset(empty, TriggerSpec.bottom_right((16, 16),
                                                                 label_map=ShiftLabelMap()))
        assert len(out) == 0

    def test_fixed_target_labels(self):
        ds = synth_digits(classes=5, per_class=2, noise=0.0, seed=0, role="test")
        trig = TriggerSpec.bottom_right((16, 16), label_map=FixedTargetMap(target=3))
        out = backdoored_testset(ds, trig)
        assert np.all(out.labels == 3)
        assert np.array_equal(out.true_labels, ds.labels)

    def test_shift_map_values(self):
        ds = Dataset(images=np.zeros((3, 1, 16, 16)), labels=np.array([0, 1, 9]),
                     num_classes=10, role="test")
        out = backdoored_testset(ds, TriggerSpec.bottom_right((16, 16),
                                                              label_map=ShiftLabelMap()))
        assert out.labels.tolist() == [1, 2, 0]

    def test_every_sample_triggered(self):
        ds = synth_digits(classes=4, per_class=3, noise=0.1, seed=2, role="test")
        trig = TriggerSpec.bottom_right((16, 16), label_map=ShiftLabelMap())
        out = backdoored_testset(ds, trig)
        assert np.all(out.images[:, :, 13:, 13:] == 1.0)


class TestSplitAndMaps:
    def test_split_sizes_roles_disjoint(self):
        ds = small_train_set(per_class=30)
        train, valid = split_validation(ds, fraction=0.1, seed=0)
        assert len(valid) == 30
        assert len(train) == 270
        assert train.role == "train" and valid.role == "valid"
        train_keys = {img.tobytes() for img in train.images}
        assert all(img.tobytes() not in train_keys for img in valid.images)

    def test_split_deterministic(self):
        ds = small_train_set(per_class=10)
        a_train, a_valid = split_validation(ds, fraction=0.2, seed=3)
        b_train, b_valid = split_validation(ds, fraction=0.2, seed=3)
        assert np.array_equal(a_train.images, b_train.images)
        assert np.array_equal(a_valid.images, b_valid.images)

    def test_random_wrong_map_never_self(self):
        labels = np.arange(10).repeat(50)
        mapped = RandomWrongMap(seed=5).map_array(labels, 10)
        assert np.all(mapped != labels)
        again = RandomWrongMap(seed=5).map_array(labels, 10)
        assert np.array_equal(mapped, again)

    def test_dataset_arrays_read_only(self):
        ds = small_train_set(per_class=2)
        with pytest.raises(ValueError):
            ds.images[0, 0, 0, 0] = 0.5
        with pytest.raises(ValueError):
            ds.labels[0] = 1
