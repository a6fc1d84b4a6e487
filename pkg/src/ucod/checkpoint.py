"""Checkpoint container: a zip of named ``.npy`` arrays (readable with ``numpy.load``).

Keys::

    format_version, epoch, step          0-d int arrays
    student/<param>, teacher/<param>, disc/<param>
    opt_student/state/<i>/<key>, opt_disc/state/<i>/<key>
    opt_student/param_groups, opt_disc/param_groups   JSON text
    rng_state                            uint8 torch generator state

Entries are written in sorted order with a fixed timestamp so identical
states give byte-identical files. Writes go to a temp file that is renamed
into place.
"""
from __future__ import annotations

import io
import json
import os
import zipfile

import numpy as np
import torch

from .errors import InputError

FORMAT_VERSION = 1
_EPOCH_ZERO = (1980, 1, 1, 0, 0, 0)


def write_arrays(path: str, arrays: dict[str, np.ndarray]) -> None:
    tmp = f"{path}.tmp"
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED) as zf:
        for key in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arrays[key]), allow_pickle=False)
            info = zipfile.ZipInfo(f"{key}.npy", date_time=_EPOCH_ZERO)
            info.external_attr = 0o644 << 16
            zf.writestr(info, buf.getvalue())
    os.replace(tmp, path)


def read_arrays(path: str) -> dict[str, np.ndarray]:
    try:
        with np.load(path, allow_pickle=False) as data:
            return {k: data[k] for k in data.files}
    except (OSError, ValueError, zipfile.BadZipFile) as exc:
        raise InputError(f"cannot read checkpoint {path}: {exc}") from None


def _module_arrays(prefix, module):
    return {f"{prefix}/{k}": v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def _optimizer_arrays(prefix, opt):
    sd = opt.state_dict()
    out = {f"{prefix}/param_groups": np.array(json.dumps(sd["param_groups"], sort_keys=True))}
    for idx, st in sd["state"].items():
        for key, val in st.items():
            out[f"{prefix}/state/{idx}/{key}"] = torch.as_tensor(val).detach().cpu().numpy()
    return out


def state_arrays(state) -> dict[str, np.ndarray]:
    arrays = {"format_version": np.array(FORMAT_VERSION), "epoch": np.array(state.epoch),
              "step": np.array(state.step), "rng_state": state.generator.get_state().numpy()}
    arrays.update(_module_arrays("student", state.student))
    arrays.update(_module_arrays("teacher", state.teacher))
    arrays.update(_module_arrays("disc", state.disc))
    if state.opt_student is not None:
        arrays.update(_optimizer_arrays("opt_student", state.opt_student))
    if state.opt_disc is not None:
        arrays.update(_optimizer_arrays("opt_disc", state.opt_disc))
    return arrays


def _load_module(module, prefix, arrays):
    sd = {k[len(prefix) + 1:]: torch.from_numpy(v.copy()) for k, v in arrays.items()
          if k.startswith(prefix + "/")}
    module.load_state_dict(sd)


def _load_optimizer(opt, prefix, arrays):
    key = f"{prefix}/param_groups"
    if opt is None or key not in arrays:
        return
    state: dict[int, dict] = {}
    for k, v in arrays.items():
        if k.startswith(prefix + "/state/"):
            _, _, idx, name = k.split("/")
            state.setdefault(int(idx), {})[name] = torch.from_numpy(v.copy())
    opt.load_state_dict({"state": state, "param_groups": json.loads(str(arrays[key]))})


def save_checkpoint(path: str, state) -> None:
    write_arrays(path, state_arrays(state))


def load_into(state, path: str):
    arrays = read_arrays(path)
    version = int(arrays.get("format_version", -1))
    if version != FORMAT_VERSION:
        raise InputError(f"{path}: unsupported checkpoint version {version}")
    _load_module(state.student, "student", arrays)
    _load_module(state.teacher, "teacher", arrays)
    _load_module(state.disc, "disc", arrays)
    _load_optimizer(state.opt_student, "opt_student", arrays)
    _load_optimizer(state.opt_disc, "opt_disc", arrays)
    state.epoch = int(arrays["epoch"])
    state.step = int(arrays["step"])
    state.generator.set_state(torch.from_numpy(arrays["rng_state"].copy()))
    return state
