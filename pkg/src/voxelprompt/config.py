"""Service configuration: backends, decoder defaults and operational caps.

The config file is JSON; every section is optional and falls back to the
stock defaults below.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .adapter import load_external_backend
from .backend import BackendDescriptor, BackendRegistry, DecodeParams, ReferenceBackend


@dataclass(frozen=True)
class BackendSpec:
    name: str
    input_dims: tuple[int, int, int]
    stride: int
    dimensionality: str = "3d"
    artifact: str | None = None  # external-runtime model directory


STOCK_BACKENDS = (
    BackendSpec("ref3d", (128, 128, 128), 4, "3d"),
    BackendSpec("ref3d-small", (64, 64, 64), 4, "3d"),
    BackendSpec("ref2d", (128, 128, 1), 4, "2d"),
)


@dataclass
class ServiceConfig:
    decode: DecodeParams = field(default_factory=DecodeParams)
    default_threshold: float = 0.0
    ensemble_runs: int = 5
    ensemble_points: int | None = None
    ensemble_seed: int = 0
    max_upload_bytes: int = 512 * 1024 * 1024
    session_idle_seconds: float = 1800.0
    backends: tuple[BackendSpec, ...] = STOCK_BACKENDS


def load_config(path: str | Path | None) -> ServiceConfig:
    if path is None:
        return ServiceConfig()
    raw = json.loads(Path(path).read_text())

    decode = DecodeParams(**raw.get("decode", {}))
    defaults = raw.get("defaults", {})
    caps = raw.get("caps", {})
    backends = tuple(
        BackendSpec(
            name=spec["name"],
            input_dims=tuple(spec["input_dims"]),
            stride=int(spec["stride"]),
            dimensionality=spec.get("dimensionality", "3d"),
            artifact=spec.get("artifact"),
        )
        for spec in raw.get("backends", [])
    ) or STOCK_BACKENDS

    return ServiceConfig(
        decode=decode,
        default_threshold=float(defaults.get("threshold", 0.0)),
        ensemble_runs=int(defaults.get("ensemble_runs", 5)),
        ensemble_points=defaults.get("ensemble_points"),
        ensemble_seed=int(defaults.get("seed", 0)),
        max_upload_bytes=int(caps.get("max_upload_mb", 512)) * 1024 * 1024,
        session_idle_seconds=float(caps.get("session_idle_minutes", 30)) * 60.0,
        backends=backends,
    )


def build_registry(config: ServiceConfig) -> BackendRegistry:
    registry = BackendRegistry()
    for spec in config.backends:
        descriptor = BackendDescriptor(
            spec.name, tuple(spec.input_dims), spec.stride, spec.dimensionality
        )
        if spec.artifact:
            registry.register(load_external_backend(descriptor, spec.artifact))
        else:
            registry.register(ReferenceBackend(descriptor, config.decode))
    return registry
