"""Q-network, training primitives and the ``RLQNET1`` checkpoint format.

Layer chain (input is NHWC ``[b, size, size, history]``)::

    conv1 -> ReLU -> conv2 -> BN -> ReLU -> conv3 -> BN -> ReLU
    -> conv4 -> BN -> ReLU -> maxpool 2 -> FC hidden -> ReLU -> head

The ``dueling`` head feeds the hidden layer into a 1-unit value branch and an
``n_actions``-unit advantage branch. With the default ``sum_fc`` aggregator
the value is broadcast over the advantages, summed, and mapped to Q-values by
a final ``n_actions x n_actions`` FC layer; ``mean`` uses the usual
``V + A - mean(A)`` instead. The ``plain`` head maps the hidden layer to
Q-values directly.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import DimensionError, FormatError, IOFailure, NumericError

CKPT_MAGIC = b"RLQNET1"
CKPT_VERSION = 1

HEADS = ("dueling", "plain")
AGGREGATORS = ("sum_fc", "mean")


@dataclass(frozen=True)
class Architecture:
    input_size: int = 84
    history: int = 4
    filters: tuple = (32, 32, 64, 64)
    kernels: tuple = (5, 5, 4, 3)
    stride: int = 2
    padding: int = 0
    hidden: int = 512
    n_actions: int = 6
    head: str = "dueling"
    aggregator: str = "sum_fc"
    bn_momentum: float = 0.99  # running = momentum * running + (1 - momentum) * batch

    def __post_init__(self):
        if self.head not in HEADS:
            raise FormatError(f"unknown head {self.head!r}")
        if self.aggregator not in AGGREGATORS:
            raise FormatError(f"unknown aggregator {self.aggregator!r}")
        object.__setattr__(self, "filters", tuple(int(f) for f in self.filters))
        object.__setattr__(self, "kernels", tuple(int(k) for k in self.kernels))

    def spatial_chain(self) -> list[int]:
        sizes = [self.input_size]
        for k in self.kernels:
            n = (sizes[-1] + 2 * self.padding - k) // self.stride + 1
            if n < 1:
                raise DimensionError(f"conv chain collapses: {sizes} then kernel {k}")
            sizes.append(n)
        pooled = sizes[-1] // 2
        if pooled < 1:
            raise DimensionError(f"max-pool collapses spatial size {sizes[-1]}")
        sizes.append(pooled)
        return sizes

    def flat_features(self) -> int:
        return self.filters[-1] * self.spatial_chain()[-1] ** 2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["filters"] = list(self.filters)
        d["kernels"] = list(self.kernels)
        return d


def head_for_variant(variant: str) -> str:
    return "dueling" if "dueling" in variant else "plain"


class QNetwork(nn.Module):
    def __init__(self, arch: Architecture = Architecture(), seed: int = 0):
        super().__init__()
        self.arch = arch
        arch.spatial_chain()  # validates geometry
        f, k = arch.filters, arch.kernels
        conv = lambda cin, cout, ks, bias: nn.Conv2d(
            cin, cout, ks, stride=arch.stride, padding=arch.padding, bias=bias
        )
        bn = lambda c: nn.BatchNorm2d(c, momentum=1.0 - arch.bn_momentum, eps=1e-5)
        # Conv layers followed by BN carry no bias: BN's shift makes it redundant.
        self.conv1 = conv(arch.history, f[0], k[0], True)
        self.conv2 = conv(f[0], f[1], k[1], False)
        self.bn2 = bn(f[1])
        self.conv3 = conv(f[1], f[2], k[2], False)
        self.bn3 = bn(f[2])
        self.conv4 = conv(f[2], f[3], k[3], False)
        self.bn4 = bn(f[3])
        self.fc = nn.Linear(arch.flat_features(), arch.hidden)
        if arch.head == "dueling":
            self.value = nn.Linear(arch.hidden, 1)
            self.advantage = nn.Linear(arch.hidden, arch.n_actions)
            if arch.aggregator == "sum_fc":
                self.out = nn.Linear(arch.n_actions, arch.n_actions)
        else:
            self.out = nn.Linear(arch.hidden, arch.n_actions)
        self.reset_parameters(seed)

    def reset_parameters(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(int(seed))
        for module in self.modules():
            if isinstance(module, (nn.Conv2d, nn.Linear)):
                nn.init.kaiming_uniform_(module.weight, nonlinearity="relu", generator=gen)
                if module.bias is not None:
                    nn.init.zeros_(module.bias)
            elif isinstance(module, nn.BatchNorm2d):
                module.reset_parameters()

    def layers(self):
        """Named stages in forward order; used for per-layer finiteness checks."""
        stages = [
            ("conv1", lambda x: torch.relu(self.conv1(x))),
            ("conv2", lambda x: torch.relu(self.bn2(self.conv2(x)))),
            ("conv3", lambda x: torch.relu(self.bn3(self.conv3(x)))),
            ("conv4", lambda x: torch.relu(self.bn4(self.conv4(x)))),
            ("maxpool", lambda x: torch.flatten(nn.functional.max_pool2d(x, 2), 1)),
            ("fc", lambda x: torch.relu(self.fc(x))),
            ("head", self._head),
        ]
        return stages

    def _head(self, h):
        if self.arch.head == "plain":
            return self.out(h)
        v = self.value(h)
        a = self.advantage(h)
        if self.arch.aggregator == "mean":
            return v + a - a.mean(dim=1, keepdim=True)
        return self.out(v + a)

    def forward(self, x: torch.Tensor, check_finite: bool = False) -> torch.Tensor:
        """``x`` is NHWC; returns ``[b, n_actions]``."""
        x = x.permute(0, 3, 1, 2)
        for index, (name, stage) in enumerate(self.layers()):
            x = stage(x)
            if check_finite and not torch.isfinite(x).all():
                raise NumericError(f"non-finite activations after layer {index} ({name})", layer=index)
        return x

    @property
    def dtype(self):
        return self.fc.weight.dtype


def parameter_count(arch: Architecture) -> int:
    """Trainable parameters, counted from the layer shapes alone."""
    f, k = arch.filters, arch.kernels
    total = arch.history * f[0] * k[0] ** 2 + f[0]
    for cin, cout, ks in zip(f[:-1], f[1:], k[1:]):
        total += cin * cout * ks ** 2 + 2 * cout  # weights + BN scale/shift
    total += arch.flat_features() * arch.hidden + arch.hidden
    if arch.head == "plain":
        return total + arch.hidden * arch.n_actions + arch.n_actions
    total += (arch.hidden + 1) + (arch.hidden * arch.n_actions + arch.n_actions)
    if arch.aggregator == "sum_fc":
        total += arch.n_actions * arch.n_actions + arch.n_actions
    return total


def _as_batch(net: nn.Module, batch) -> torch.Tensor:
    x = torch.as_tensor(np.asarray(batch), dtype=next(net.parameters()).dtype)
    arch = getattr(net, "arch", None)
    if arch is not None:
        expected = (arch.input_size, arch.input_size, arch.history)
        if x.ndim != 4 or tuple(x.shape[1:]) != expected or x.shape[0] < 1:
            raise DimensionError(f"expected input [b, {', '.join(map(str, expected))}], got {list(x.shape)}")
    return x


def forward(net: nn.Module, batch, mode: str = "eval") -> torch.Tensor:
    """Q-values for a batch. ``train`` mode uses batch statistics and updates BN running stats."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = _as_batch(net, batch)
    net.train(mode == "train")
    if mode == "eval":
        with torch.no_grad():
            return net(x)
    return net(x)


def backward(net: nn.Module, batch, action_mask, targets):
    """MSE between ``targets`` and the Q-value of the taken action.

    Fills ``param.grad`` for every parameter and returns ``(loss, grads)`` with
    ``grads`` keyed by parameter name. Non-taken actions get zero gradient.
    """
    x = _as_batch(net, batch)
    dtype = x.dtype
    mask = torch.as_tensor(np.asarray(action_mask), dtype=dtype)
    tgt = torch.as_tensor(np.asarray(targets), dtype=dtype)
    if not torch.isfinite(tgt).all():
        raise NumericError("non-finite TD targets")
    net.train(True)
    net.zero_grad(set_to_none=False)
    q = net(x, check_finite=True) if isinstance(net, QNetwork) else net(x)
    q_taken = (q * mask).sum(dim=1)
    loss = ((tgt - q_taken) ** 2).mean()
    if not torch.isfinite(loss):
        raise NumericError("non-finite loss")
    loss.backward()
    grads = {name: p.grad for name, p in net.named_parameters()}
    return float(loss.detach()), grads


def make_optimizer(net: nn.Module, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
    return torch.optim.Adam(net.parameters(), lr=lr, betas=tuple(betas), eps=eps)


def adam_step(net: nn.Module, optimizer: torch.optim.Adam) -> None:
    """Apply one bias-corrected Adam update from the gradients stored on ``net``."""
    for name, p in net.named_parameters():
        if p.grad is not None and not torch.isfinite(p.grad).all():
            raise NumericError(f"non-finite gradient for {name}")
    optimizer.step()


def set_learning_rate(optimizer: torch.optim.Adam, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr


# --- checkpoints -----------------------------------------------------------


@dataclass
class QNetworkParams:
    """A network together with its optimizer state and free-form metadata."""

    net: QNetwork
    optimizer: torch.optim.Adam | None = None
    meta: dict = field(default_factory=dict)


def _tensors(net: QNetwork, optimizer):
    """Everything persisted, in declared order: params, BN stats, Adam moments."""
    params = list(net.named_parameters())
    out = [(name, p.data) for name, p in params]
    for name, buf in net.named_buffers():
        if name.endswith(("running_mean", "running_var")):
            out.append((name, buf))
    state = optimizer.state if optimizer is not None else {}
    for name, p in params:
        st = state.get(p, {})
        out.append((name + ".exp_avg", st.get("exp_avg", torch.zeros_like(p.data))))
        out.append((name + ".exp_avg_sq", st.get("exp_avg_sq", torch.zeros_like(p.data))))
    return out


def _adam_step_count(optimizer) -> int:
    if optimizer is None or not optimizer.state:
        return 0
    st = next(iter(optimizer.state.values()))
    return int(st["step"])


def encode_checkpoint(params: QNetworkParams) -> bytes:
    net, opt = params.net, params.optimizer
    if net.dtype != torch.float32:
        raise FormatError("checkpoints store float32 networks only")
    descriptor = {
        "architecture": net.arch.to_dict(),
        "adam": None if opt is None else {
            "lr": opt.param_groups[0]["lr"],
            "betas": list(opt.param_groups[0]["betas"]),
            "eps": opt.param_groups[0]["eps"],
            "step": _adam_step_count(opt),
        },
        "meta": params.meta,
    }
    desc = json.dumps(descriptor, sort_keys=True).encode()
    chunks = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, len(desc)), desc]
    for _, tensor in _tensors(net, opt):
        chunks.append(tensor.detach().cpu().numpy().astype("<f4").tobytes())
    return b"".join(chunks)


def decode_checkpoint(data: bytes, expected: Architecture | None = None) -> QNetworkParams:
    if not data.startswith(CKPT_MAGIC):
        raise FormatError("not an RLQNET1 checkpoint (bad magic)")
    pos = len(CKPT_MAGIC)
    if len(data) < pos + 8:
        raise FormatError("checkpoint truncated in header")
    version, desc_len = struct.unpack_from("<II", data, pos)
    pos += 8
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    try:
        descriptor = json.loads(data[pos:pos + desc_len])
        arch_dict = descriptor["architecture"]
        arch = Architecture(**arch_dict)
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"bad architecture descriptor: {exc}") from exc
    pos += desc_len
    if expected is not None and arch != expected:
        raise FormatError(f"architecture mismatch: checkpoint {arch} vs expected {expected}")

    net = QNetwork(arch)
    adam = descriptor.get("adam")
    opt = None
    if adam is not None:
        opt = make_optimizer(net, adam["lr"], adam["betas"], adam["eps"])
    entries = _tensors(net, None)
    need = sum(t.numel() for _, t in entries) * 4
    if len(data) - pos != need:
        raise FormatError(f"checkpoint payload is {len(data) - pos} bytes, expected {need}")

    loaded = {}
    for name, tensor in entries:
        n = tensor.numel()
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=pos).reshape(tuple(tensor.shape))
        loaded[name] = torch.from_numpy(arr.astype(np.float32))
        pos += 4 * n
    with torch.no_grad():
        for name, p in net.named_parameters():
            p.copy_(loaded[name])
        for name, buf in net.named_buffers():
            if name in loaded:
                buf.copy_(loaded[name])
    if opt is not None and adam["step"] > 0:
        for name, p in net.named_parameters():
            opt.state[p] = {
                "step": torch.tensor(float(adam["step"])),
                "exp_avg": loaded[name + ".exp_avg"].clone(),
                "exp_avg_sq": loaded[name + ".exp_avg_sq"].clone(),
            }
    return QNetworkParams(net, opt, descriptor.get("meta") or {})


def save_checkpoint(params: QNetworkParams, path) -> None:
    data = encode_checkpoint(params)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(data)
        tmp.replace(path)
    except OSError as exc:
        raise IOFailure(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path, expected: Architecture | None = None) -> QNetworkParams:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IOFailure(f"cannot read checkpoint {path}: {exc}") from exc
    return decode_checkpoint(data, expected)
