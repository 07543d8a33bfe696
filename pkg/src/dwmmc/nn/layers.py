"""Layers, reference architectures and parameter snapshots."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import NoForwardState, ShapeMismatch
from . import tensor as T
from .tensor import Tensor

ANALOG = "analog"
DIGITAL = "digital"


class Parameter(Tensor):
    """A trainable leaf tagged as realised by device pairs (analog) or in float (digital)."""

    __slots__ = ("kind",)

    def __init__(self, data, kind: str, name: str | None = None):
        super().__init__(data, requires_grad=True, name=name)
        if kind not in (ANALOG, DIGITAL):
            raise ValueError(f"unknown parameter kind {kind!r}")
        self.kind = kind


class Module:
    training = True

    def children(self):
        return [v for v in vars(self).values() if isinstance(v, Module)] + [
            m for v in vars(self).values() if isinstance(v, (list, tuple))
            for m in v if isinstance(m, Module)
        ]

    def parameters(self) -> list[Parameter]:
        own = [v for v in vars(self).values() if isinstance(v, Parameter)]
        return own + [p for c in self.children() for p in c.parameters()]

    def buffers(self) -> list[np.ndarray]:
        return [b for c in self.children() for b in c.buffers()]

    def train(self, mode: bool = True):
        self.training = mode
        for c in self.children():
            c.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)


def _uniform(rng, shape):
    return rng.uniform(-1.0, 1.0, size=shape)


class Dense(Module):
    def __init__(self, n_in: int, n_out: int, rng, name: str = "dense"):
        self.W = Parameter(_uniform(rng, (n_in, n_out)), ANALOG, f"{name}.W")
        self.b = Parameter(_uniform(rng, (n_out,)), ANALOG, f"{name}.b")

    def forward(self, x):
        if x.data.ndim != 2 or x.shape[1] != self.W.shape[0]:
            raise ShapeMismatch(f"dense expects (N, {self.W.shape[0]}), got {x.shape}")
        return T.add(T.matmul(x, self.W), self.b)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, k: int, rng, stride: int = 1,
                 padding: int | None = None, name: str = "conv"):
        self.W = Parameter(_uniform(rng, (c_out, c_in, k, k)), ANALOG, f"{name}.W")
        self.stride = stride
        self.padding = k // 2 if padding is None else padding

    def forward(self, x):
        return T.conv2d(x, self.W, self.stride, self.padding)


class BatchNorm(Module):
    """Batch normalisation over channel axis 1 with digital affine terms."""

    def __init__(self, n: int, momentum: float = 0.1, eps: float = 1e-5, name: str = "bn"):
        self.gamma = Parameter(np.ones(n), DIGITAL, f"{name}.gamma")
        self.beta = Parameter(np.zeros(n), DIGITAL, f"{name}.beta")
        self.running_mean = np.zeros(n)
        self.running_var = np.ones(n)
        self.momentum = momentum
        self.eps = eps

    def buffers(self):
        return [self.running_mean, self.running_var]

    def forward(self, x):
        if x.shape[1] != self.gamma.shape[0]:
            raise ShapeMismatch(f"batch norm over {self.gamma.shape[0]} channels, got {x.shape}")
        if self.training:
            out, mu, var = T.batch_norm(x, self.gamma, self.beta, eps=self.eps)
            m = x.data.size // x.shape[1]
            unbiased = var * m / max(m - 1, 1)
            self.running_mean *= 1 - self.momentum
            self.running_mean += self.momentum * mu
            self.running_var *= 1 - self.momentum
            self.running_var += self.momentum * unbiased
            return out
        out, _, _ = T.batch_norm(x, self.gamma, self.beta, self.running_mean,
                                 self.running_var, self.eps)
        return out


class ReLU(Module):
    def forward(self, x):
        return T.relu(x)


class Flatten(Module):
    def forward(self, x):
        return T.flatten(x)


class GlobalAvgPool(Module):
    def forward(self, x):
        return T.global_avg_pool(x)


class AvgPool(Module):
    def __init__(self, k: int):
        self.k = k

    def forward(self, x):
        return T.avg_pool(x, self.k)


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


class ResidualBlock(Module):
    """conv-bn-relu-conv-bn plus identity (or 1x1 conv-bn) shortcut, then relu."""

    def __init__(self, c_in: int, c_out: int, stride: int, rng, name: str = "block"):
        self.conv1 = Conv2d(c_in, c_out, 3, rng, stride=stride, name=f"{name}.conv1")
        self.bn1 = BatchNorm(c_out, name=f"{name}.bn1")
        self.conv2 = Conv2d(c_out, c_out, 3, rng, name=f"{name}.conv2")
        self.bn2 = BatchNorm(c_out, name=f"{name}.bn2")
        if stride != 1 or c_in != c_out:
            self.short = Sequential(Conv2d(c_in, c_out, 1, rng, stride=stride, padding=0,
                                           name=f"{name}.short"),
                                    BatchNorm(c_out, name=f"{name}.short_bn"))
        else:
            self.short = None

    def children(self):
        kids = [self.conv1, self.bn1, self.conv2, self.bn2]
        return kids + ([self.short] if self.short is not None else [])

    def forward(self, x):
        h = T.relu(self.bn1(self.conv1(x)))
        h = self.bn2(self.conv2(h))
        s = x if self.short is None else self.short(x)
        return T.relu(T.add(h, s))


class Network:
    """A module tree with stable parameter ordering and forward-state tracking."""

    def __init__(self, arch_id: str, body: Module, input_shape: tuple[int, ...],
                 build_args: dict | None = None):
        self.arch_id = arch_id
        self.body = body
        self.input_shape = tuple(input_shape)
        self.build_args = dict(build_args or {})
        self.params: list[Parameter] = body.parameters()
        self.dtype = np.dtype(np.float64)
        self._last_logits: Tensor | None = None

    def astype(self, dtype) -> "Network":
        """Cast parameters and buffers; float32 roughly halves training time."""
        self.dtype = np.dtype(dtype)
        for p in self.params:
            p.data = p.data.astype(self.dtype)
            p.grad = None
        for m in _walk(self.body):
            if isinstance(m, BatchNorm):
                m.running_mean = m.running_mean.astype(self.dtype)
                m.running_var = m.running_var.astype(self.dtype)
        return self

    @property
    def analog_params(self):
        return [p for p in self.params if p.kind == ANALOG]

    @property
    def digital_params(self):
        return [p for p in self.params if p.kind == DIGITAL]

    @property
    def n_analog(self) -> int:
        return sum(p.data.size for p in self.analog_params)

    def train(self, mode=True):
        self.body.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def forward(self, x, training: bool | None = None) -> Tensor:
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != self.input_shape:
            raise ShapeMismatch(f"{self.arch_id} expects inputs {self.input_shape}, got {x.shape[1:]}")
        if training is not None:
            self.train(training)
        for p in self.params:
            p.zero_grad()
        logits = self.body(Tensor(x))
        self._last_logits = logits
        return logits

    def backward(self, logits: Tensor, labels) -> float:
        if logits is not self._last_logits or logits._backward is None:
            raise NoForwardState("backward() needs the logits of the latest forward pass")
        loss = T.cross_entropy(logits, labels)
        loss.backward()
        self._last_logits = None
        return float(loss.data)

    # -- flat views ---------------------------------------------------------

    def get_analog(self) -> np.ndarray:
        return np.concatenate([p.data.ravel() for p in self.analog_params])

    def set_analog(self, flat: np.ndarray) -> None:
        i = 0
        for p in self.analog_params:
            n = p.data.size
            p.data = np.array(flat[i:i + n], dtype=self.dtype).reshape(p.shape)
            i += n

    def analog_grad(self) -> np.ndarray:
        return np.concatenate([
            (p.grad if p.grad is not None else np.zeros_like(p.data)).ravel()
            for p in self.analog_params
        ])

    def state_vector(self) -> np.ndarray:
        """All parameters then all buffers, in layer order."""
        parts = [p.data.ravel() for p in self.params] + [b.ravel() for b in self.body.buffers()]
        return np.concatenate(parts)

    def load_state_vector(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=float)
        i = 0
        for p in self.params:
            n = p.data.size
            p.data = vec[i:i + n].reshape(p.shape).astype(self.dtype)
            i += n
        for b in self.body.buffers():
            n = b.size
            b[...] = vec[i:i + n].reshape(b.shape)
            i += n
        if i != len(vec):
            raise ShapeMismatch(f"state vector has {len(vec)} values, network needs {i}")

    def tags(self) -> list[dict]:
        out = [{"name": p.name, "shape": list(p.shape), "kind": p.kind} for p in self.params]
        for k, b in enumerate(self.body.buffers()):
            out.append({"name": f"buffer{k}", "shape": list(b.shape), "kind": "buffer"})
        return out


def _walk(m: Module):
    yield m
    for c in m.children():
        yield from _walk(c)


def forward(net: Network, batch, training: bool = True) -> Tensor:
    return net.forward(batch, training=training)


def backward(net: Network, logits: Tensor, labels) -> dict[str, np.ndarray]:
    """Backpropagate the summed cross-entropy; returns ``{param name: grad}``."""
    net.backward(logits, labels)
    return {p.name: p.grad for p in net.params}


def log_prior_gradient(value):
    """Gradient of log U(-1, 1): zero on the support; the boundary is enforced by clipping."""
    return np.zeros_like(np.asarray(value, dtype=float))


def project_to_prior(value):
    return np.clip(value, -1.0, 1.0)


# -- reference architectures -------------------------------------------------

def mlp(n_in: int, n_hidden: int, n_out: int, seed: int = 0, batchnorm: bool = True) -> Network:
    """dense - [bn] - relu - dense."""
    rng = np.random.default_rng(seed)
    layers = [Dense(n_in, n_hidden, rng, "fc1")]
    if batchnorm:
        layers.append(BatchNorm(n_hidden, name="bn1"))
    layers += [ReLU(), Dense(n_hidden, n_out, rng, "fc2")]
    return Network("mlp", Sequential(*layers), (n_in,),
                   dict(n_in=n_in, n_hidden=n_hidden, n_out=n_out, seed=seed, batchnorm=batchnorm))


def tiny_resnet(in_ch: int, n_classes: int, size: int, widths=(8, 16, 32), seed: int = 0) -> Network:
    """Eight weight layers: stem conv, three residual blocks, dense head.

    The second and third blocks halve the spatial size, as in the stage
    transitions of ResNet18.
    """
    rng = np.random.default_rng(seed)
    w1, w2, w3 = widths
    body = Sequential(
        Conv2d(in_ch, w1, 3, rng, name="stem"),
        BatchNorm(w1, name="stem_bn"),
        ReLU(),
        ResidualBlock(w1, w1, 1, rng, name="block1"),
        ResidualBlock(w1, w2, 2, rng, name="block2"),
        ResidualBlock(w2, w3, 2, rng, name="block3"),
        GlobalAvgPool(),
        Dense(w3, n_classes, rng, name="head"),
    )
    return Network("tiny_resnet", body, (in_ch, size, size),
                   dict(in_ch=in_ch, n_classes=n_classes, size=size, widths=list(widths), seed=seed))


ARCHS = {"mlp": mlp, "tiny_resnet": tiny_resnet}


def build(arch_id: str, **kwargs) -> Network:
    if "widths" in kwargs:
        kwargs["widths"] = tuple(kwargs["widths"])
    return ARCHS[arch_id](**kwargs)


# -- snapshots ---------------------------------------------------------------
# layout: uint32 LE header length, UTF-8 JSON header, float64 LE state vector

def save_snapshot(net: Network, path: str | Path, vec: np.ndarray | None = None) -> None:
    vec = net.state_vector() if vec is None else np.asarray(vec, dtype=float)
    header = {"arch_id": net.arch_id, "param_count": int(vec.size), "tags": net.tags(),
              "build_args": net.build_args}
    hb = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(hb)))
        fh.write(hb)
        fh.write(vec.astype("<f8").tobytes())


def load_snapshot(path: str | Path) -> tuple[dict, np.ndarray]:
    raw = Path(path).read_bytes()
    (n,) = struct.unpack("<I", raw[:4])
    header = json.loads(raw[4:4 + n].decode("utf-8"))
    vec = np.frombuffer(raw[4 + n:], dtype="<f8").astype(float)
    if vec.size != header["param_count"]:
        raise ShapeMismatch(f"snapshot holds {vec.size} values, header says {header['param_count']}")
    return header, vec
