"""Flat named-tensor checkpoint container shared by the network and the victim.

One ``.npz`` file per checkpoint: a ``__meta__`` JSON string plus one array per
state-dict entry (little-endian; float tensors stored as float32, integer
tensors as int64). Keys are the module's own state-dict names.
"""

import json

import numpy as np
import torch


def save_module_checkpoint(path, module: torch.nn.Module, meta: dict) -> None:
    arrays = {}
    for key, value in module.state_dict().items():
        a = value.detach().cpu().numpy()
        arrays[key] = a.astype("<f4") if a.dtype.kind == "f" else a.astype("<i8")
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)


def load_module_checkpoint(path) -> tuple[dict, dict]:
    """Return (state dict of tensors, meta dict)."""
    data = np.load(path, allow_pickle=False)
    meta = json.loads(str(data["__meta__"]))
    state = {k: torch.from_numpy(data[k].copy()) for k in data.files if k != "__meta__"}
    return state, meta
