"""Small torch helpers shared by the autoencoder pool and the detector."""

from __future__ import annotations

import hashlib

import numpy as np
import torch


def to_tensor(images) -> torch.Tensor:
    """Stack ``(H, W, 3)`` float images into an ``(N, 3, H, W)`` float32 tensor."""
    arr = np.stack([np.asarray(im, dtype=np.float32) for im in images])
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2)))


def to_images(batch: torch.Tensor) -> list[np.ndarray]:
    arr = batch.detach().cpu().numpy().astype(np.float64).transpose(0, 2, 3, 1)
    return [np.clip(a, 0.0, 1.0) for a in arr]


def state_checksum(module: torch.nn.Module) -> str:
    """SHA-256 over parameter/buffer names, shapes and raw bytes."""
    h = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        arr = tensor.detach().cpu().contiguous().numpy()
        h.update(name.encode())
        h.update(str(arr.shape).encode())
        h.update(str(arr.dtype).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def deterministic_torch() -> None:
    torch.use_deterministic_algorithms(True)
