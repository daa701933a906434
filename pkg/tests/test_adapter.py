"""External-adapter contract tests using an injected stand-in runtime."""

import numpy as np
import pytest

from voxelprompt.adapter import load_external_backend
from voxelprompt.backend import BackendDescriptor, PromptSet
from voxelprompt.errors import ArtifactNotFound, RuntimeUnavailable, ShapeMismatch
from voxelprompt.geometry import VoxelIndex
from voxelprompt.nifti import Volume


DESC = BackendDescriptor("ext", (8, 8, 8), 4, "3d")


class _Tensor:
    def __init__(self, name, shape):
        self.name = name
        self.shape = shape


class FakeSession:
    """Deterministic stand-in for an inference session."""

    def __init__(self, path, grid=(2, 2, 2), dims=(8, 8, 8), channels=3):
        self.path = str(path)
        self.grid = grid
        self.dims = dims
        self.channels = channels

    def get_inputs(self):
        return [_Tensor("volume", [1, 1, *self.dims])]

    def get_outputs(self):
        if "encoder" in self.path:
            return [_Tensor("embedding", [1, self.channels, *self.grid])]
        return [_Tensor("logits", [1, 1, *self.dims])]

    def run(self, _out, feeds):
        if "encoder" in self.path:
            vol = feeds["volume"]
            out = np.zeros((1, self.channels, *self.grid), dtype=np.float32)
            out[0, 0] = float(vol.sum())
            return [out]
        pts = feeds["include_points"]
        out = np.full((1, 1, *self.dims), float(pts.sum()), dtype=np.float32)
        return [out]


class FakeRuntime:
    def __init__(self, **session_kwargs):
        self.kwargs = session_kwargs

    def InferenceSession(self, path):  # noqa: N802 (mirrors the real runtime API)
        return FakeSession(path, **self.kwargs)


@pytest.fixture
def artifact(tmp_path):
    (tmp_path / "encoder.onnx").write_bytes(b"stub")
    (tmp_path / "decoder.onnx").write_bytes(b"stub")
    return tmp_path


def test_missing_artifact(tmp_path):
    with pytest.raises(ArtifactNotFound):
        load_external_backend(DESC, tmp_path / "nope", runtime=FakeRuntime())


def test_incomplete_artifact(tmp_path):
    (tmp_path / "encoder.onnx").write_bytes(b"stub")
    with pytest.raises(ArtifactNotFound):
        load_external_backend(DESC, tmp_path, runtime=FakeRuntime())


def test_runtime_unavailable(artifact):
    # this build has no onnxruntime installed, so the default resolution fails
    with pytest.raises(RuntimeUnavailable):
        load_external_backend(DESC, artifact, runtime=None)


def test_stride_inconsistent_with_artifact(artifact):
    # artifact declares a 2x2x2 embedding grid; stride 2 over 8^3 needs 4x4x4
    bad = BackendDescriptor("ext", (8, 8, 8), 2, "3d")
    with pytest.raises(ShapeMismatch):
        load_external_backend(bad, artifact, runtime=FakeRuntime())


def test_runtime_grid_mismatch_at_encode(artifact):
    backend = load_external_backend(DESC, artifact, runtime=FakeRuntime(grid=(2, 2, 2)))
    backend._encoder.grid = (3, 3, 3)  # declared fine, produces garbage
    vol = Volume(np.zeros((8, 8, 8), dtype=np.float32), np.eye(4))
    with pytest.raises(ShapeMismatch):
        backend.encode(vol)


def test_contract_parity_determinism(artifact):
    backend = load_external_backend(DESC, artifact, runtime=FakeRuntime())
    rng = np.random.default_rng(0)
    vol = Volume(rng.normal(size=(8, 8, 8)).astype(np.float32), np.eye(4))
    e1 = backend.encode(vol)
    e2 = backend.encode(vol)
    assert backend.encode_calls == 1  # cache shared with the reference contract
    np.testing.assert_array_equal(e1.values, e2.values)

    prompts = PromptSet(include=(VoxelIndex(1, 2, 3),))
    a = backend.decode(e1, prompts, None, vol)
    b = backend.decode(e1, prompts, None, vol)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (8, 8, 8)
