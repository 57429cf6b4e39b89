import numpy as np
import pytest

from spectra.geometry import FrameDims
from spectra.modality import (
    GRAY_SURROGATE,
    TRIPLET_REPLICATE,
    WHITE_PLACEHOLDER,
    replicate_gray_to_triplet,
    resolve_policy,
    rgb_to_gray_surrogate,
    white_placeholder,
)


class TestWhitePlaceholder:
    def test_2x2_all_white(self):
        img = white_placeholder(FrameDims(2, 2))
        assert img.shape == (2, 2, 3)
        assert (img == 255).all()

    def test_1x1(self):
        assert white_placeholder(FrameDims(1, 1)).tolist() == [[[255, 255, 255]]]

    def test_native_frame_pixel_count(self):
        img = white_placeholder(FrameDims(320, 256))
        assert img.shape[0] * img.shape[1] == 81_920
        assert (img == 255).all()


class TestReplicate:
    def test_single_value(self):
        g = np.array([[77]], dtype=np.uint8)
        assert replicate_gray_to_triplet(g).tolist() == [[[77, 77, 77]]]

    def test_all_zero(self):
        g = np.zeros((3, 5), dtype=np.uint8)
        assert (replicate_gray_to_triplet(g) == 0).all()

    def test_every_channel_equals_source(self):
        rng = np.random.default_rng(3)
        g = rng.integers(0, 256, size=(4, 4), dtype=np.uint8)
        rgb = replicate_gray_to_triplet(g)
        for c in range(3):
            assert np.array_equal(rgb[:, :, c], g)

    def test_rejects_wrong_dtype(self):
        with pytest.raises(ValueError):
            replicate_gray_to_triplet(np.zeros((2, 2), dtype=np.float64))


class TestGraySurrogate:
    def test_white_maps_to_255(self):
        img = np.full((2, 2, 3), 255, dtype=np.uint8)
        assert (rgb_to_gray_surrogate(img) == 255).all()

    def test_black_maps_to_0(self):
        assert (rgb_to_gray_surrogate(np.zeros((2, 2, 3), dtype=np.uint8)) == 0).all()

    def test_weighted_sum_rounds_half_up(self):
        # 0.299*100 + 0.587*150 + 0.114*200 = 140.75 -> 141
        img = np.array([[[100, 150, 200]]], dtype=np.uint8)
        assert rgb_to_gray_surrogate(img).tolist() == [[141]]

    def test_triplet_round_trip_exact_for_all_values(self):
        ramp = np.arange(256, dtype=np.uint8).reshape(16, 16)
        assert np.array_equal(rgb_to_gray_surrogate(replicate_gray_to_triplet(ramp)), ramp)

    def test_white_placeholder_fixed_point(self):
        white = white_placeholder(FrameDims(3, 3))
        again = replicate_gray_to_triplet(rgb_to_gray_surrogate(white))
        assert np.array_equal(again, white)


class TestResolvePolicy:
    @pytest.mark.parametrize(
        "task,available,expected",
        [
            ("drone_detection", {"RGB", "IR"}, {}),
            ("drone_detection", {"IR"}, {"RGB": WHITE_PLACEHOLDER}),
            ("drone_detection", {"RGB"}, {"IR": WHITE_PLACEHOLDER}),
            ("payload_identification", {"RGB", "IR"}, {}),
            ("payload_identification", {"RGB"}, {"IR": GRAY_SURROGATE}),
            ("payload_identification", {"IR"}, {"RGB": TRIPLET_REPLICATE}),
        ],
    )
    def test_all_six_cases(self, task, available, expected):
        policy = resolve_policy(task, available)
        assert policy.actions == expected
        assert policy.available == frozenset(available)

    def test_empty_availability_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            resolve_policy("drone_detection", set())

    def test_unknown_task_rejected(self):
        with pytest.raises(ValueError, match="task"):
            resolve_policy("segmentation", {"RGB"})

    def test_unknown_modality_rejected(self):
        with pytest.raises(ValueError, match="modalities"):
            resolve_policy("drone_detection", {"UV"})
