"""Factored categorical policy with a separate value network.

The action space is three independent 3-way choices (one per thrust axis);
the joint log-probability is the sum of the per-axis head log-probabilities.
All randomness (weight init, action sampling) is driven by numpy Generators
so runs are reproducible independent of torch's global RNG state.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .dynamics import FORCE_LEVELS

NUM_AXES = 3
NUM_CHOICES = 3
DEFAULT_HIDDEN = (256, 256)

CHECKPOINT_PARAMS = "params.bin"
CHECKPOINT_MANIFEST = "manifest.json"
CHECKPOINT_SCHEMA_VERSION = 1


def _mlp(input_dim: int, hidden: tuple[int, ...], dtype: torch.dtype) -> tuple[nn.Sequential, int]:
    layers: list[nn.Module] = []
    width = input_dim
    for size in hidden:
        layers.append(nn.Linear(width, size, dtype=dtype))
        layers.append(nn.Tanh())
        width = size
    return nn.Sequential(*layers), width


class PolicyValueNet(nn.Module):
    """Tanh MLP trunk with 3x3 action logits, plus an independent value MLP."""

    def __init__(
        self,
        input_dim: int,
        hidden: tuple[int, ...] = DEFAULT_HIDDEN,
        dtype: torch.dtype = torch.float32,
    ):
        super().__init__()
        self.input_dim = int(input_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.policy_trunk, trunk_out = _mlp(self.input_dim, self.hidden, dtype)
        self.policy_head = nn.Linear(trunk_out, NUM_AXES * NUM_CHOICES, dtype=dtype)
        self.value_trunk, value_out = _mlp(self.input_dim, self.hidden, dtype)
        self.value_head = nn.Linear(value_out, 1, dtype=dtype)

    def forward(self, obs: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Return (logits of shape (..., 3, 3), value of shape (...,))."""
        logits = self.policy_head(self.policy_trunk(obs))
        logits = logits.view(*obs.shape[:-1], NUM_AXES, NUM_CHOICES)
        value = self.value_head(self.value_trunk(obs)).squeeze(-1)
        return logits, value

    def log_prob(self, logits: torch.Tensor, actions: torch.Tensor) -> torch.Tensor:
        """Joint log-probability: sum of per-axis head log-probabilities."""
        log_probs = F.log_softmax(logits, dim=-1)
        picked = torch.gather(log_probs, -1, actions.unsqueeze(-1)).squeeze(-1)
        return picked.sum(dim=-1)


def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    """Orthogonal weight block drawn from a numpy stream (sign-fixed QR)."""
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    d = np.diag(r)
    q *= np.where(d == 0.0, 1.0, np.sign(d))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_parameters(net: PolicyValueNet, rng: np.random.Generator) -> None:
    """Orthogonal init: gain sqrt(2) in the trunks, 0.01 policy head, 1.0 value head."""
    def fill(linear: nn.Linear, gain: float) -> None:
        rows, cols = linear.weight.shape
        weight = _orthogonal(rng, rows, cols, gain)
        with torch.no_grad():
            linear.weight.copy_(torch.from_numpy(weight).to(linear.weight.dtype))
            linear.bias.zero_()

    for trunk in (net.policy_trunk, net.value_trunk):
        for module in trunk:
            if isinstance(module, nn.Linear):
                fill(module, np.sqrt(2.0))
    fill(net.policy_head, 0.01)
    fill(net.value_head, 1.0)


def action_probs(net: PolicyValueNet, obs: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-axis choice probabilities (3, 3) and the value estimate for one obs."""
    with torch.no_grad():
        t = torch.as_tensor(np.asarray(obs, dtype=np.float32))
        logits, value = net(t)
        probs = F.softmax(logits, dim=-1)
    return probs.numpy().astype(np.float64), float(value)


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Sample one choice index per axis by inverse CDF on a numpy draw."""
    u = rng.random(NUM_AXES)
    cdf = np.cumsum(probs, axis=-1)
    cdf[:, -1] = 1.0  # guard rounding in the last bin
    return np.argmax(u[:, None] < cdf, axis=-1)


class TorchPolicy:
    """Adapter exposing the env-facing act() protocol for a trained net."""

    def __init__(self, net: PolicyValueNet, deterministic: bool = False):
        self.net = net
        self.deterministic = deterministic

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        probs, _ = action_probs(self.net, obs)
        if self.deterministic:
            idx = np.argmax(probs, axis=-1)
        else:
            idx = sample_action(probs, rng)
        return np.array([FORCE_LEVELS[i] for i in idx])


def save_checkpoint(net: PolicyValueNet, directory: str | Path, manifest: dict) -> Path:
    """Write parameters as little-endian float32 blobs plus a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors = []
    blob = bytearray()
    for name, tensor in net.state_dict().items():
        array = tensor.detach().cpu().numpy().astype("<f4")
        tensors.append(
            {
                "name": name,
                "shape": list(array.shape),
                "offset": len(blob),
                "numel": int(array.size),
            }
        )
        blob.extend(array.tobytes())
    (directory / CHECKPOINT_PARAMS).write_bytes(bytes(blob))
    payload = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "input_dim": net.input_dim,
        "hidden": list(net.hidden),
        "tensors": tensors,
    }
    payload.update(manifest)
    with open(directory / CHECKPOINT_MANIFEST, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return directory


def load_checkpoint(directory: str | Path) -> tuple[PolicyValueNet, dict]:
    """Rebuild a float32 net from a checkpoint directory."""
    directory = Path(directory)
    with open(directory / CHECKPOINT_MANIFEST) as fh:
        manifest = json.load(fh)
    blob = (directory / CHECKPOINT_PARAMS).read_bytes()
    net = PolicyValueNet(manifest["input_dim"], hidden=tuple(manifest["hidden"]))
    state = {}
    for entry in manifest["tensors"]:
        start = entry["offset"]
        count = entry["numel"]
        array = np.frombuffer(blob, dtype="<f4", count=count, offset=start)
        state[entry["name"]] = torch.from_numpy(array.copy().reshape(entry["shape"]))
    net.load_state_dict(state)
    return net, manifest
