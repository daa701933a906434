"""Adapter wrapping an external neural-inference runtime behind the backend
contract.

An artifact is a directory holding ``encoder.onnx`` and ``decoder.onnx``. The
runtime is resolved lazily (onnxruntime by default) and is injectable, so the
contract is testable in builds without the optional dependency.

Expected graph signatures, N = number of points, dims = descriptor input:
  encoder: volume (1, 1, *dims) float32 -> embedding (1, C, *grid_dims)
  decoder: embedding, include_points (N, 3), exclude_points (M, 3),
           prev_logits (1, 1, *dims) -> logits (1, 1, *dims)
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .backend import BackendDescriptor, ImageEmbedding, PromptableBackend, PromptSet
from .errors import ArtifactNotFound, RuntimeUnavailable, ShapeMismatch
from .nifti import Volume

ENCODER_FILE = "encoder.onnx"
DECODER_FILE = "decoder.onnx"


def _resolve_runtime(runtime):
    if runtime is not None:
        return runtime
    try:
        import onnxruntime  # type: ignore
    except ImportError as exc:
        raise RuntimeUnavailable(
            "no inference runtime available; install onnxruntime or inject one"
        ) from exc
    return onnxruntime


class ExternalBackend(PromptableBackend):
    """Runtime-backed backend with the same caching/counting base."""

    def __init__(self, descriptor: BackendDescriptor, encoder_session, decoder_session):
        super().__init__(descriptor)
        self._encoder = encoder_session
        self._decoder = decoder_session
        self._validate_static_shapes()

    def _validate_static_shapes(self) -> None:
        shape = _declared_output_shape(self._encoder)
        if shape is None:
            return
        grid = self.descriptor.grid_dims
        if len(shape) != 5 or tuple(shape[2:]) != grid:
            raise ShapeMismatch(
                f"encoder output {shape} incompatible with grid {grid} "
                f"(stride {self.descriptor.stride})"
            )

    def _compute_embedding(self, volume: Volume) -> ImageEmbedding:
        feed = volume.data.astype(np.float32)[np.newaxis, np.newaxis, ...]
        name = self._encoder.get_inputs()[0].name
        (raw,) = self._encoder.run(None, {name: feed})
        raw = np.asarray(raw)
        grid = self.descriptor.grid_dims
        if raw.ndim != 5 or tuple(raw.shape[2:]) != grid:
            raise ShapeMismatch(f"encoder produced {raw.shape}, expected (1, C, {grid})")
        values = np.moveaxis(raw[0], 0, -1).astype(np.float64)
        return ImageEmbedding(
            grid_dims=grid, channels=raw.shape[1], values=values, provenance=""
        )

    def _compute_logits(self, embedding, prompts: PromptSet, prev, volume) -> np.ndarray:
        dims = self.descriptor.input_dims
        feeds = {
            "embedding": np.moveaxis(embedding.values, -1, 0)[np.newaxis].astype(np.float32),
            "include_points": np.asarray(prompts.include, dtype=np.float32).reshape(-1, 3),
            "exclude_points": np.asarray(prompts.exclude, dtype=np.float32).reshape(-1, 3),
            "prev_logits": (
                np.zeros((1, 1) + dims, dtype=np.float32)
                if prev is None
                else np.asarray(prev, dtype=np.float32)[np.newaxis, np.newaxis]
            ),
        }
        (raw,) = self._decoder.run(None, feeds)
        raw = np.asarray(raw)
        if raw.shape != (1, 1) + dims:
            raise ShapeMismatch(f"decoder produced {raw.shape}, expected (1, 1, {dims})")
        return raw[0, 0].astype(np.float64)


def load_external_backend(
    descriptor: BackendDescriptor, artifact_path: str | Path, runtime=None
) -> ExternalBackend:
    """Build a backend from a model artifact directory.

    Raises ArtifactNotFound when the artifact is missing, RuntimeUnavailable
    when no inference runtime can be resolved, and ShapeMismatch when the
    artifact's declared shapes contradict the descriptor.
    """
    root = Path(artifact_path)
    if not root.exists():
        raise ArtifactNotFound(f"model artifact {root} does not exist")
    encoder_path = root / ENCODER_FILE
    decoder_path = root / DECODER_FILE
    if not encoder_path.exists() or not decoder_path.exists():
        raise ArtifactNotFound(
            f"artifact {root} must contain {ENCODER_FILE} and {DECODER_FILE}"
        )
    rt = _resolve_runtime(runtime)
    encoder = rt.InferenceSession(str(encoder_path))
    decoder = rt.InferenceSession(str(decoder_path))
    return ExternalBackend(descriptor, encoder, decoder)


def _declared_output_shape(session):
    try:
        outputs = session.get_outputs()
    except AttributeError:
        return None
    if not outputs:
        return None
    shape = getattr(outputs[0], "shape", None)
    if shape is None or not all(isinstance(d, int) for d in shape):
        return None
    return tuple(shape)
