"""Versioned checkpoint persistence.

A checkpoint is a single ``.npz`` container holding a format version, the
full resolved config (JSON), flat float64 parameter arrays keyed by
component and parameter name, optional optimizer state, the training-step
counter and the random-generator state. Round-tripping restores forward
behaviour bit-for-bit.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import CheckpointFormatError

__all__ = ["save_checkpoint", "load_checkpoint", "restore_components"]

FORMAT_VERSION = 1


def save_checkpoint(path, config, components, step=0, rng=None,
                    optimizers=None):
    """Write components' parameters plus config/seed state to ``path``.

    ``components`` maps names to objects exposing ``params()``;
    ``optimizers`` maps names to Adam instances.
    """
    arrays = {
        "format_version": np.array([FORMAT_VERSION], dtype=np.int64),
        "config_json": np.array(json.dumps(config, sort_keys=True)),
        "step": np.array([step], dtype=np.int64),
    }
    if rng is not None:
        arrays["rng_state_json"] = np.array(json.dumps(rng.bit_generator.state))
    for cname, comp in components.items():
        for p in comp.params():
            arrays[f"param/{cname}/{p.name}"] = p.value
    for oname, opt in (optimizers or {}).items():
        for key, arr in opt.state_arrays().items():
            arrays[f"opt/{oname}/{key}"] = arr
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Read a checkpoint, returning ``(config, arrays, step, rng_state)``.

    ``arrays`` is the raw key -> ndarray map; feed it to
    ``restore_components``.
    """
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {k: np.array(data[k]) for k in data.files}
    except Exception as e:
        raise CheckpointFormatError(f"cannot read checkpoint {path}: {e}") from e
    if "format_version" not in arrays:
        raise CheckpointFormatError(f"{path}: missing format version")
    version = int(arrays["format_version"][0])
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(
            f"{path}: unsupported format version {version}, "
            f"expected {FORMAT_VERSION}")
    try:
        config = json.loads(str(arrays["config_json"]))
        step = int(arrays["step"][0])
    except (KeyError, ValueError) as e:
        raise CheckpointFormatError(f"{path}: corrupted manifest: {e}") from e
    rng_state = None
    if "rng_state_json" in arrays:
        rng_state = json.loads(str(arrays["rng_state_json"]))
    return config, arrays, step, rng_state


def restore_components(arrays, components, optimizers=None):
    """Copy saved parameter (and optimizer) arrays into live objects.

    Every expected parameter must be present with a matching shape,
    otherwise the checkpoint is rejected without partial application.
    """
    staged = []
    for cname, comp in components.items():
        for p in comp.params():
            key = f"param/{cname}/{p.name}"
            if key not in arrays:
                raise CheckpointFormatError(f"missing parameter {key}")
            arr = arrays[key]
            if arr.shape != p.value.shape:
                raise CheckpointFormatError(
                    f"parameter {key} has shape {arr.shape}, "
                    f"expected {p.value.shape}")
            staged.append((p, arr))
    for p, arr in staged:
        p.value[...] = arr
    for oname, opt in (optimizers or {}).items():
        prefix = f"opt/{oname}/"
        state = {k[len(prefix):]: v for k, v in arrays.items()
                 if k.startswith(prefix)}
        if state:
            opt.load_state_arrays(state)


def restore_rng(rng_state):
    """Rebuild a Generator from a saved bit-generator state."""
    rng = np.random.default_rng()
    if rng_state is not None:
        bg_name = rng_state["bit_generator"]
        if bg_name != rng.bit_generator.state["bit_generator"]:
            raise CheckpointFormatError(
                f"checkpoint used bit generator {bg_name!r}")
        rng.bit_generator.state = rng_state
    return rng
