"""Checkpoint archive: block names -> float64 arrays in a single .npz file.

Nested pytrees (dicts and lists of layer dicts) are flattened to
slash-separated key paths; list indices become numeric path components.  A
versioned JSON header travels inside the archive so schema mismatches fail
loudly at load time.
"""

from __future__ import annotations

import json

import jax.numpy as jnp
import numpy as np

from .meta import LearnerState

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _flatten(obj, prefix, out):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(v, f"{prefix}/{k}", out)
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _flatten(v, f"{prefix}/{i}", out)
    else:
        out[prefix] = np.asarray(obj, dtype=np.float64)


def _unflatten(flat: dict):
    root: dict = {}
    for key, arr in flat.items():
        parts = key.split("/")
        node = root
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = jnp.asarray(arr)

    def listify(node):
        if not isinstance(node, dict):
            return node
        keys = list(node.keys())
        if keys and all(k.isdigit() for k in keys):
            return [listify(node[str(i)]) for i in range(len(keys))]
        return {k: listify(v) for k, v in node.items()}

    return listify(root)


def save_state(path, state: LearnerState) -> None:
    flat: dict = {}
    _flatten(state.params, "params", flat)
    _flatten(state.opt_m, "opt_m", flat)
    _flatten(state.opt_v, "opt_v", flat)
    flat["kg_h"] = np.asarray(state.kg_h, dtype=np.float64)
    header = {
        "format_version": FORMAT_VERSION,
        "opt_t": int(state.opt_t),
        "iteration": int(state.iteration),
        "seed": state.seed,
        "input_dim": state.input_dim,
        "n_way": state.n_way,
    }
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **flat)


def load_state(path) -> LearnerState:
    with np.load(path) as npz:
        if "__header__" not in npz:
            raise CheckpointError(f"{path}: not a checkpoint archive (missing header)")
        header = json.loads(bytes(npz["__header__"]).decode())
        if header.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: format version {header.get('format_version')} "
                f"not supported (expected {FORMAT_VERSION})"
            )
        flat = {k: npz[k] for k in npz.files if k not in ("__header__",)}
    kg_h = jnp.asarray(flat.pop("kg_h"))
    nested = _unflatten(flat)
    return LearnerState(
        params=nested["params"],
        kg_h=kg_h,
        opt_m=nested["opt_m"],
        opt_v=nested["opt_v"],
        opt_t=header["opt_t"],
        iteration=header["iteration"],
        seed=header["seed"],
        input_dim=header["input_dim"],
        n_way=header["n_way"],
    )
