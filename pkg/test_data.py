import json
import os

import numpy as np
import pytest
from PIL import Image

from config import AugmentConfig, EpisodeSpec
from data.augment import AugmentationPolicy, augment, augment_batch, derive_seed, grayscale
from data.convert import convert_folder
from data.episodes import episode_images, make_viewed_episode, sample_episode
from data.goldens import check_goldens, write_goldens
from data.splits import load_split, save_split
from data.synth import synth_dataset
from errors import (
    ChecksumError,
    ClassTooSmallError,
    DataError,
    EmptySplitError,
    FixtureError,
    InsufficientSamplesError,
    LabelGapError,
    ManifestError,
    MissingFileError,
)


@pytest.fixture
def small_split():
    return synth_dataset(n_classes=4, per_class=5, image_size=8, difficulty=0.2, seed=3)


class TestSynth:
    def test_shapes_and_range(self, small_split):
        assert small_split.images.shape == (20, 3, 8, 8)
        assert small_split.counts().tolist() == [5, 5, 5, 5]
        assert small_split.images.min() >= 0.0 and small_split.images.max() <= 1.0

    def test_zero_difficulty_repeats_each_class(self):
        split = synth_dataset(n_classes=3, per_class=4, image_size=8, difficulty=0.0, seed=1)
        for label in range(3):
            images = split.images[split.class_indices(label)]
            assert all(np.array_equal(images[0], other) for other in images[1:])

    def test_deterministic(self):
        a = synth_dataset(n_classes=2, per_class=3, image_size=8, difficulty=0.5, seed=9)
        b = synth_dataset(n_classes=2, per_class=3, image_size=8, difficulty=0.5, seed=9)
        assert a.images.tobytes() == b.images.tobytes()

    def test_offset_names_disjoint_classes(self):
        split = synth_dataset(n_classes=2, per_class=1, image_size=8, difficulty=0.0, seed=0, class_offset=8)
        assert split.class_names == ["class_008", "class_009"]

    def test_classes_are_separable_by_centroid(self):
        split = synth_dataset(n_classes=6, per_class=20, image_size=16, difficulty=0.2, seed=5)
        flat = split.images.reshape(len(split), -1)
        centroids = np.stack([flat[split.class_indices(k)].mean(axis=0) for k in range(6)])
        distances = ((flat[:, None, :] - centroids[None]) ** 2).sum(axis=-1)
        accuracy = (distances.argmin(axis=1) == split.labels).mean()
        assert accuracy > 0.95


class TestSplits:
    def test_save_and_load(self, tmp_path, small_split):
        path = save_split(small_split, str(tmp_path / "train"))
        loaded = load_split(path, min_per_class=5)
        assert loaded.class_names == small_split.class_names
        assert loaded.images.tobytes() == small_split.images.tobytes()
        assert loaded.labels.tolist() == small_split.labels.tolist()
        assert load_split(str(tmp_path / "train")).role == "train"

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(MissingFileError):
            load_split(str(tmp_path / "nowhere"))

    def test_empty_manifest(self, tmp_path):
        (tmp_path / "manifest.json").write_text(json.dumps({"split": "train", "classes": []}))
        with pytest.raises(EmptySplitError):
            load_split(str(tmp_path))

    def test_class_too_small_names_the_class(self, tmp_path, small_split):
        path = save_split(small_split, str(tmp_path))
        with pytest.raises(ClassTooSmallError) as excinfo:
            load_split(path, min_per_class=6)
        assert excinfo.value.class_name == "class_000"
        assert "class_000" in str(excinfo.value)

    def test_missing_class_file(self, tmp_path, small_split):
        path = save_split(small_split, str(tmp_path))
        os.remove(tmp_path / "class_002.epct")
        with pytest.raises(MissingFileError):
            load_split(path)

    def test_label_gap(self, tmp_path, small_split):
        path = save_split(small_split, str(tmp_path))
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        manifest["classes"][3]["label"] = 7
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(LabelGapError):
            load_split(path)

    def test_class_entry_without_file(self, tmp_path, small_split):
        path = save_split(small_split, str(tmp_path))
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        del manifest["classes"][0]["file"]
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(DataError) as excinfo:
            load_split(path)
        assert isinstance(excinfo.value, ManifestError)
        assert "classes.0.file" in str(excinfo.value)

    def test_non_numeric_count(self, tmp_path, small_split):
        path = save_split(small_split, str(tmp_path))
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        manifest["classes"][1]["count"] = "many"
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(ManifestError):
            load_split(path)

    def test_invalid_json(self, tmp_path):
        (tmp_path / "manifest.json").write_text("{\"classes\": [")
        with pytest.raises(ManifestError):
            load_split(str(tmp_path))


class TestEpisodes:
    def test_exact_fit_uses_every_image(self):
        split = synth_dataset(n_classes=3, per_class=3, image_size=8, difficulty=0.2, seed=0)
        episode = sample_episode(split, EpisodeSpec(ways=3, shots=1, queries=2), seed=4)
        used = np.concatenate([episode.support_idx, episode.query_idx])
        assert sorted(used.tolist()) == list(range(9))
        assert sorted(episode.classes.tolist()) == [0, 1, 2]

    def test_class_major_layout(self, small_split):
        episode = sample_episode(small_split, EpisodeSpec(ways=2, shots=2, queries=3), seed=1)
        assert episode.support_labels.tolist() == [0, 0, 1, 1]
        assert episode.query_labels.tolist() == [0, 0, 0, 1, 1, 1]
        for slot, label in enumerate(episode.query_labels):
            assert small_split.labels[episode.query_idx[slot]] == episode.classes[label]

    def test_support_and_query_are_disjoint(self, small_split):
        spec = EpisodeSpec(ways=3, shots=2, queries=3)
        for seed in range(1000):
            episode = sample_episode(small_split, spec, seed=seed)
            support, query = set(episode.support_idx.tolist()), set(episode.query_idx.tolist())
            assert len(support) == 6 and len(query) == 9
            assert not support & query

    def test_classes_are_drawn_uniformly(self, small_split):
        spec = EpisodeSpec(ways=2, shots=1, queries=1)
        counts = np.zeros(small_split.n_classes)
        for seed in range(10_000):
            counts[sample_episode(small_split, spec, seed=seed).classes] += 1
        # each of 4 classes lands in half the 2-way episodes; 0.03 is about six standard deviations
        np.testing.assert_allclose(counts / 10_000, 0.5, atol=0.03)

    def test_deterministic(self, small_split):
        spec = EpisodeSpec(ways=3, shots=1, queries=2)
        a, b = sample_episode(small_split, spec, seed=11), sample_episode(small_split, spec, seed=11)
        assert a.support_idx.tolist() == b.support_idx.tolist()
        assert a.query_idx.tolist() == b.query_idx.tolist()

    def test_too_many_ways(self, small_split):
        with pytest.raises(InsufficientSamplesError):
            sample_episode(small_split, EpisodeSpec(ways=5, shots=1, queries=1))

    def test_too_few_images_per_class(self, small_split):
        with pytest.raises(InsufficientSamplesError):
            sample_episode(small_split, EpisodeSpec(ways=2, shots=3, queries=3))

    def test_identity_views_are_the_raw_images(self, small_split):
        spec = EpisodeSpec(ways=2, shots=1, queries=2)
        identity = AugmentationPolicy.identity()
        viewed = make_viewed_episode(small_split, spec, identity, identity, seed=2)
        raw = episode_images(small_split, viewed.episode)
        for view in viewed.views:
            assert view.support.tobytes() == raw.support.tobytes()
            assert view.query.tobytes() == raw.query.tobytes()

    def test_views_share_slots_but_differ(self, small_split):
        spec = EpisodeSpec(ways=2, shots=1, queries=2)
        policy = AugmentationPolicy.simclr(AugmentConfig())
        viewed = make_viewed_episode(small_split, spec, policy, policy, seed=2)
        first, second = viewed.views
        assert first.query.shape == second.query.shape == (4, 3, 8, 8)
        assert not np.array_equal(first.query, second.query)
        again = make_viewed_episode(small_split, spec, policy, policy, seed=2)
        assert again.views[1].query.tobytes() == second.query.tobytes()


class TestAugment:
    def test_identity(self, small_split):
        image = small_split.images[0]
        assert augment(image, AugmentationPolicy.identity(), seed=5).tobytes() == image.tobytes()

    def test_double_flip(self, small_split):
        flip = AugmentationPolicy(strategy="flip", flip_p=1.0)
        image = small_split.images[1]
        np.testing.assert_array_equal(augment(augment(image, flip, 0), flip, 1), image)
        np.testing.assert_array_equal(augment(image, flip, 0), image[:, :, ::-1])

    def test_same_seed_same_output(self, small_split):
        policy = AugmentationPolicy.standard(AugmentConfig())
        image = small_split.images[2]
        assert augment(image, policy, 17).tobytes() == augment(image, policy, 17).tobytes()
        batch = augment_batch(small_split.images[:3], policy, [17, 18, 19])
        assert batch[0].tobytes() == augment(small_split.images[0], policy, 17).tobytes()

    def test_output_stays_in_range(self, small_split):
        policy = AugmentationPolicy.simclr(AugmentConfig(jitter_strength=0.9, jitter_p_simclr=1.0))
        out = augment_batch(small_split.images, policy, range(len(small_split)))
        assert out.shape == small_split.images.shape
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_grayscale_equalizes_channels(self, small_split):
        gray = grayscale(small_split.images[0])
        assert np.array_equal(gray[0], gray[1]) and np.array_equal(gray[1], gray[2])

    def test_unknown_strategy(self):
        with pytest.raises(ValueError):
            AugmentationPolicy.from_name("cutout", AugmentConfig())

    def test_derived_seeds(self):
        seed = derive_seed(0, "pretrain", 1, 2, 0)
        assert seed == derive_seed(0, "pretrain", 1, 2, 0)
        assert seed != derive_seed(0, "pretrain", 1, 2, 1)
        assert 0 <= seed < 2 ** 63


class TestGoldens:
    def test_write_then_check(self, tmp_path):
        write_goldens(str(tmp_path))
        results = check_goldens(str(tmp_path))
        assert len(results) == 6
        assert all(results.values())

    def test_corrupted_file(self, tmp_path):
        write_goldens(str(tmp_path))
        target = tmp_path / "golden_simclr_1.epct"
        blob = bytearray(target.read_bytes())
        blob[-1] ^= 0xFF
        target.write_bytes(bytes(blob))
        with pytest.raises(ChecksumError):
            check_goldens(str(tmp_path))

    def test_missing_index(self, tmp_path):
        with pytest.raises(FixtureError):
            check_goldens(str(tmp_path))

    def test_index_entry_without_checksum(self, tmp_path):
        write_goldens(str(tmp_path))
        index = json.loads((tmp_path / "goldens.json").read_text())
        del index["goldens"][2]["sha256"]
        (tmp_path / "goldens.json").write_text(json.dumps(index))
        with pytest.raises(FixtureError):
            check_goldens(str(tmp_path))


class TestConvert:
    def test_folder_of_pngs(self, tmp_path):
        src = tmp_path / "images"
        for name, color in (("cat", (255, 0, 0)), ("dog", (0, 0, 255))):
            folder = src / name
            folder.mkdir(parents=True)
            for i in range(2):
                Image.new("RGB", (12, 10), color).save(folder / f"{i}.png")
        (src / "dog" / "broken.png").write_bytes(b"not an image")
        (src / "empty").mkdir()

        split = load_split(convert_folder(str(src), str(tmp_path / "out"), (8, 8)))
        assert split.class_names == ["cat", "dog"]
        assert split.images.shape == (4, 3, 8, 8)
        np.testing.assert_allclose(split.images[split.class_indices(0)][:, 0], 1.0)
        np.testing.assert_allclose(split.images[split.class_indices(1)][:, 0], 0.0)

    def test_missing_folder(self, tmp_path):
        with pytest.raises(MissingFileError):
            convert_folder(str(tmp_path / "absent"), str(tmp_path / "out"), (8, 8))

    def test_no_images(self, tmp_path):
        (tmp_path / "images" / "cat").mkdir(parents=True)
        with pytest.raises(EmptySplitError):
            convert_folder(str(tmp_path / "images"), str(tmp_path / "out"), (8, 8))
