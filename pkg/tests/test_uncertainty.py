"""Self-ensembling tests.

The mean/std oracle is a scalar two-pass loop over voxels, independent of
the vectorized reduction.
"""

import numpy as np
import pytest

from voxelprompt.backend import BackendDescriptor, DecodeParams, PromptSet, ReferenceBackend, binarize
from voxelprompt.errors import EmptyMask, IndexOutOfRange, NoWorkingMask
from voxelprompt.geometry import RasPoint, map_prompt
from voxelprompt.nifti import NiftiHeader, Volume, read_nifti
from voxelprompt.session import Session
from voxelprompt.uncertainty import (
    EnsembleConfig,
    EnsembleResult,
    ensemble_statistics,
    export_uncertainty,
    run_ensemble,
    sample_prompts,
    uncertainty_to_heatmap,
)


def two_pass_oracle(members):
    n = len(members)
    shape = members[0].shape
    mean = np.zeros(shape)
    std = np.zeros(shape)
    for i in range(shape[0]):
        for j in range(shape[1]):
            for k in range(shape[2]):
                total = 0.0
                for m in members:
                    total += float(m[i, j, k])
                mu = total / n
                acc = 0.0
                for m in members:
                    acc += (float(m[i, j, k]) - mu) ** 2
                mean[i, j, k] = mu
                std[i, j, k] = (acc / n) ** 0.5
    return mean, std


def make_session(data: np.ndarray, dims=None, mode="3d") -> Session:
    vol = Volume(data=data, affine=np.eye(4))
    backend = ReferenceBackend(
        BackendDescriptor("t", tuple(dims or vol.dims), 4, mode), DecodeParams()
    )
    return Session(vol, NiftiHeader.for_volume(vol), backend)


class TestSamplePrompts:
    def test_single_foreground_voxel_forced(self):
        mask = np.zeros((4, 4, 4), dtype=np.uint8)
        mask[1, 2, 3] = 1
        for seed in (0, 7, 123456789):
            got = sample_prompts(mask, 1, seed, 1)
            assert got.include == ((1, 2, 3),)
            assert got.exclude == ()

    def test_empty_mask(self):
        with pytest.raises(EmptyMask):
            sample_prompts(np.zeros((4, 4, 4), dtype=np.uint8), 1, 0, 1)

    def test_two_voxel_frequency_bounds(self):
        mask = np.zeros((4, 4, 4), dtype=np.uint8)
        mask[0, 0, 0] = 1
        mask[3, 3, 3] = 1
        hits = 0
        for run in range(1, 1001):
            got = sample_prompts(mask, 1, 0, run)
            hits += got.include[0] == (0, 0, 0)
        assert 400 <= hits <= 600

    def test_deterministic_per_seed_and_run(self):
        rng = np.random.default_rng(0)
        mask = (rng.random((8, 8, 8)) > 0.5).astype(np.uint8)
        a = sample_prompts(mask, 4, 99, 2)
        b = sample_prompts(mask, 4, 99, 2)
        c = sample_prompts(mask, 4, 99, 3)
        assert a == b
        assert a != c

    def test_without_replacement_when_possible(self):
        mask = np.ones((2, 2, 2), dtype=np.uint8)
        got = sample_prompts(mask, 8, 5, 1)
        assert len(set(got.include)) == 8


class TestEnsembleStatistics:
    def test_two_member_algebra(self):
        a = np.full((1, 1, 1), 3.0)
        b = np.full((1, 1, 1), -1.0)
        mean, std = ensemble_statistics([a, b])
        assert mean[0, 0, 0] == pytest.approx((3.0 - 1.0) / 2)
        assert std[0, 0, 0] == pytest.approx(abs(3.0 - (-1.0)) / 2)

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(1)
        for n in (2, 3, 5, 9):
            members = [rng.normal(size=(8, 8, 8)) for _ in range(n)]
            mean, std = ensemble_statistics(members)
            want_mean, want_std = two_pass_oracle(members)
            assert np.abs(mean - want_mean).max() < 1e-9
            assert np.abs(std - want_std).max() < 1e-9

    def test_shift_property(self):
        rng = np.random.default_rng(2)
        members = [rng.normal(size=(4, 4, 4)) for _ in range(5)]
        mean, std = ensemble_statistics(members)
        shifted_mean, shifted_std = ensemble_statistics([m + 11.5 for m in members])
        np.testing.assert_allclose(shifted_mean, mean + 11.5, atol=1e-12)
        np.testing.assert_allclose(shifted_std, std, atol=1e-12)


class TestRunEnsemble:
    def _prompted_session(self, seed=0, dims=(16, 16, 16)):
        rng = np.random.default_rng(seed)
        data = rng.normal(0, 100, size=dims).astype(np.float32)
        s = make_session(data)
        s.add_prompt(RasPoint(6, 6, 6), "include")
        s.add_prompt(RasPoint(10, 10, 10), "include")
        return s

    def test_requires_working_logits(self):
        s = make_session(np.zeros((16, 16, 16), dtype=np.float32))
        with pytest.raises(NoWorkingMask):
            run_ensemble(s, EnsembleConfig())

    def test_degenerate_empty_initial_mask(self):
        s = self._prompted_session()
        with pytest.raises(EmptyMask):
            run_ensemble(s, EnsembleConfig(threshold=1e9))

    def test_zero_variance_when_members_identical(self):
        # threshold keeps only the include voxel itself in the initial mask,
        # so every run resamples the same single prompt
        s = make_session(np.full((16, 16, 16), 10, dtype=np.int16))
        s.add_prompt(RasPoint(8, 8, 8), "include")
        result = run_ensemble(s, EnsembleConfig(runs=5, threshold=7.99))
        assert result.initial_foreground == 1
        np.testing.assert_array_equal(result.uncertainty, 0.0)
        # with identical members the ensemble mean equals any single member
        assert result.mean_logits.max() == pytest.approx(8.0)

    def test_matches_independent_composition(self):
        s = self._prompted_session(seed=3)
        config = EnsembleConfig(runs=5, points_per_run=2, threshold=0.0, seed=42)
        result = run_ensemble(s, config)

        # rebuild members from primitives, then reduce with the loop oracle
        window = s.active_windows[0]
        m0 = binarize(s.working_logits, 0.0)
        members = []
        for run in range(1, 6):
            prompts = sample_prompts(m0, 2, 42, run)
            mapped = PromptSet(include=tuple(map_prompt(v, window.region) for v in prompts.include))
            logits = s.backend.decode(window.embedding, mapped, None, window.window_volume)
            member = np.full(s.volume.dims, -10.0)
            member[:] = logits  # identity window on matching dims
            members.append(member)
        want_mean, want_std = two_pass_oracle(members)
        assert np.abs(result.mean_logits - want_mean).max() < 1e-9
        assert np.abs(result.uncertainty - want_std).max() < 1e-9

    def test_no_encoder_calls(self):
        s = self._prompted_session(seed=4)
        before = s.backend.encode_calls
        run_ensemble(s, EnsembleConfig(runs=5))
        assert s.backend.encode_calls == before

    def test_seed_determinism(self):
        a = run_ensemble(self._prompted_session(seed=5), EnsembleConfig(runs=4, seed=7))
        b = run_ensemble(self._prompted_session(seed=5), EnsembleConfig(runs=4, seed=7))
        np.testing.assert_array_equal(a.mean_logits, b.mean_logits)
        np.testing.assert_array_equal(a.uncertainty, b.uncertainty)
        c = run_ensemble(self._prompted_session(seed=5), EnsembleConfig(runs=4, seed=8))
        assert not np.array_equal(a.uncertainty, c.uncertainty)

    def test_stores_results_and_bumps_revision(self):
        s = self._prompted_session(seed=6)
        rev = s.revision
        result = run_ensemble(s, EnsembleConfig(runs=3))
        assert isinstance(result, EnsembleResult)
        assert s.revision == rev + 1
        assert s.uncertainty is not None and (s.uncertainty >= 0).all()
        assert s.working_logits is not None  # the initial segmentation survives

    def test_default_k_is_user_prompt_count(self):
        s = self._prompted_session(seed=7)
        result = run_ensemble(s, EnsembleConfig(runs=3))
        assert result.points_per_run == 2

    def test_slice_wise_backend(self):
        rng = np.random.default_rng(8)
        data = rng.integers(0, 300, size=(16, 16, 8)).astype(np.int16)
        s = make_session(data, dims=(16, 16, 1), mode="2d")
        s.add_prompt(RasPoint(8, 8, 3), "include")
        s.add_prompt(RasPoint(4, 4, 6), "include")
        before = s.backend.encode_calls
        result = run_ensemble(s, EnsembleConfig(runs=4, seed=1))
        assert s.backend.encode_calls == before
        assert result.uncertainty.shape == (16, 16, 8)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            EnsembleConfig(runs=1)
        with pytest.raises(ValueError):
            EnsembleConfig(points_per_run=0)


class TestHeatmap:
    def test_zero_uncertainty_all_dark(self):
        u = np.zeros((8, 8, 8))
        np.testing.assert_array_equal(uncertainty_to_heatmap(u, 2, 4), 0.0)

    def test_two_value_minmax(self):
        u = np.zeros((4, 4, 4))
        u[1, 1, 1] = 2.0
        heat = uncertainty_to_heatmap(u, 2, 1)
        assert heat[1, 1] == 1.0
        assert heat[0, 0] == 0.0
        assert set(np.unique(heat)) == {0.0, 1.0}

    def test_argmax_preserved(self):
        rng = np.random.default_rng(3)
        u = rng.random((8, 8, 8))
        for axis in (0, 1, 2):
            heat = uncertainty_to_heatmap(u, axis, 5)
            want = np.take(u, 5, axis=axis)
            assert np.unravel_index(np.argmax(heat), heat.shape) == np.unravel_index(
                np.argmax(want), want.shape
            )

    def test_index_out_of_range(self):
        u = np.zeros((4, 4, 4))
        with pytest.raises(IndexOutOfRange):
            uncertainty_to_heatmap(u, 2, 9)
        with pytest.raises(IndexOutOfRange):
            uncertainty_to_heatmap(u, 5, 0)


class TestExport:
    def test_float32_nifti_round_trip(self):
        rng = np.random.default_rng(9)
        data = rng.normal(0, 100, size=(16, 16, 16)).astype(np.float32)
        s = make_session(data)
        s.add_prompt(RasPoint(8, 8, 8), "include")
        run_ensemble(s, EnsembleConfig(runs=3))
        raw = export_uncertainty(s)
        vol, header = read_nifti(raw)
        assert header.datatype == 16  # float32
        np.testing.assert_allclose(vol.data, s.uncertainty.astype(np.float32))

    def test_export_requires_run(self):
        s = make_session(np.zeros((16, 16, 16), dtype=np.float32))
        with pytest.raises(NoWorkingMask):
            export_uncertainty(s)
