"""Whole-detector wiring: shapes, ablation seams, state round trips."""

import numpy as np
import pytest

from sfcl.checks import tiny_detector_config
from sfcl.errors import ConfigError, InputError
from sfcl.frequency import PlanarImage
from sfcl.fusion import HcmaConfig
from sfcl.model import (Detector, DetectorConfig, desk_detector_config,
                        extract_frontend)


def _batch(rng, n=2, size=16, dtype=np.float64):
    images = [PlanarImage(rng.uniform(0, 255, (3, size, size)), "rgb") for _ in range(n)]
    return extract_frontend(images, dtype=dtype, labels=list(range(n)) and [i % 2 for i in range(n)])


class TestForward:
    def test_shapes_and_probability_range(self, rng):
        model = Detector(tiny_detector_config(0))
        logits, probs = model.forward(_batch(rng), mode="infer")
        assert logits.shape == (2,) and probs.shape == (2,)
        assert ((probs.data > 0) & (probs.data < 1)).all()

    def test_nan_free_across_100_seeds(self):
        model = Detector(tiny_detector_config(9))
        for seed in range(100):
            rng = np.random.default_rng(seed)
            _, probs = model.forward(_batch(rng), mode="infer")
            assert np.isfinite(probs.data).all(), f"seed {seed}"

    def test_forward_deterministic(self, rng):
        model = Detector(tiny_detector_config(1))
        batch = _batch(rng)
        a = model.forward(batch, mode="infer")[1].data
        b = model.forward(batch, mode="infer")[1].data
        assert np.array_equal(a, b)

    def test_ablation_variants_forward(self, rng):
        batch = _batch(rng)
        for overrides in (dict(use_sbcm=False), dict(fusion_mode="concat"),
                          dict(use_sida_gate=False)):
            model = Detector(tiny_detector_config(2, **overrides))
            _, probs = model.forward(batch, mode="infer")
            assert np.isfinite(probs.data).all()

    def test_mismatched_crop_sizes_rejected(self, rng):
        images = [PlanarImage(rng.uniform(0, 255, (3, 16, 16)), "rgb"),
                  PlanarImage(rng.uniform(0, 255, (3, 24, 24)), "rgb")]
        with pytest.raises(InputError):
            extract_frontend(images)


class TestConfigValidation:
    def test_fusion_dims_must_match(self):
        with pytest.raises(ConfigError):
            tiny_detector_config(0, hcma=HcmaConfig(spatial_dim=99, freq_dim=16,
                                                    embed_dim=32, heads=2, tokens=4))

    def test_bad_fusion_mode(self):
        with pytest.raises(ConfigError):
            DetectorConfig(fusion_mode="average")

    def test_default_config_is_full_scale(self):
        cfg = DetectorConfig()
        assert cfg.backbone.output_dim == 1792
        assert cfg.cnnf.output_dim == 2048
        assert cfg.hcma.embed_dim == 1024
        assert cfg.hcma.heads == 8

    def test_desk_profile_validates(self):
        cfg = desk_detector_config()
        assert cfg.hcma.embed_dim == 256


class TestStateRoundTrip:
    def test_load_reproduces_outputs(self, rng):
        src = Detector(tiny_detector_config(3))
        batch = _batch(rng)
        want = src.forward(batch, mode="infer")[1].data
        state = {k: v.copy() for k, v in src.state_arrays().items()}
        dst = Detector(tiny_detector_config(4))  # different init
        dst.load_state_arrays(state)
        got = dst.forward(batch, mode="infer")[1].data
        assert np.array_equal(got, want)

    def test_state_mismatch_rejected(self):
        src = Detector(tiny_detector_config(0))
        state = src.state_arrays()
        state.pop(next(iter(state)))
        dst = Detector(tiny_detector_config(0))
        with pytest.raises(InputError):
            dst.load_state_arrays(state)

    def test_buffers_update_during_training_mode(self, rng):
        model = Detector(tiny_detector_config(5))
        before = {k: v.copy() for k, v in model.buffers()}
        batch = _batch(rng)
        model.forward(batch, mode="train")
        changed = any(not np.array_equal(before[k], v) for k, v in model.buffers())
        assert changed
