"""BeamNet layer graphs, parameter storage and model files."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import functional as F

VARIANTS = ("baseline", "txb-small-512", "txb-tiny")
LAYER_KINDS = ("conv", "maxpool", "dense", "relu", "flatten", "softmax")

MODEL_MAGIC = b"BWNN"
MODEL_VERSION = 1


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    filters: int = 0
    height: int = 1
    width: int = 1
    padding: str = "same"
    units: int = 0
    pool: int = 2

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv" and min(self.filters, self.height, self.width) < 1:
            raise ValueError("conv layers need filters, height and width >= 1")
        if self.kind == "dense" and self.units < 1:
            raise ValueError("dense layers need units >= 1")


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple
    num_classes: int
    input_shape: tuple  # (L, K, 2)
    variant: str = "custom"
    target: str = "txb"
    normalize: bool = False  # trained on unit-power inputs; loaders must scale the same way

    def __post_init__(self):
        if not self.layers or self.layers[-1].kind != "softmax":
            raise ValueError("the last layer must be softmax")
        self.shapes()  # validates the chain

    def shapes(self) -> list:
        """Output shape (without batch) after every layer."""
        shape = tuple(self.input_shape)
        out = []
        for i, layer in enumerate(self.layers):
            if layer.kind == "conv":
                if len(shape) != 3:
                    raise ValueError(f"layer {i}: conv needs a 3-D input, got {shape}")
                h, w = F.conv_output_shape(shape[0], shape[1], layer.height, layer.width, layer.padding)
                if h < 1 or w < 1:
                    raise ValueError(f"layer {i}: filter {layer.height}x{layer.width} too large for {shape}")
                shape = (h, w, layer.filters)
            elif layer.kind == "maxpool":
                if len(shape) != 3 or shape[1] < layer.pool:
                    raise ValueError(f"layer {i}: cannot pool {shape} with window 1x{layer.pool}")
                shape = (shape[0], shape[1] // layer.pool, shape[2])
            elif layer.kind == "flatten":
                shape = (int(np.prod(shape)),)
            elif layer.kind == "dense":
                if len(shape) != 1:
                    raise ValueError(f"layer {i}: dense needs a flat input, got {shape}")
                shape = (layer.units,)
            elif layer.kind == "softmax":
                if shape != (self.num_classes,):
                    raise ValueError(f"softmax input {shape} does not match {self.num_classes} classes")
            out.append(shape)
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(tuple(LayerSpec(**l) for l in d["layers"]), int(d["num_classes"]),
                   tuple(d["input_shape"]), d.get("variant", "custom"), d.get("target", "txb"),
                   bool(d.get("normalize", False)))


def build_spec(variant: str, L: int = 1, K: int = 2048, num_classes: int = 12,
               target: str = "txb", filters: int = 16, width: int = 7, hidden: int = 128,
               normalize: bool = False) -> ModelSpec:
    """Layer graph of a named BeamNet variant over (L, K, 2) inputs."""
    conv = lambda n: LayerSpec("conv", filters=n, height=1, width=width, padding="same")
    if variant == "baseline":
        if K % 2 ** 7:
            raise ValueError(f"baseline needs K divisible by 128 for seven 1x2 pools, got K={K}")
        layers = []
        for _ in range(7):
            layers += [conv(filters), LayerSpec("relu"), LayerSpec("maxpool")]
        layers += [LayerSpec("flatten"), LayerSpec("dense", units=hidden), LayerSpec("relu"),
                   LayerSpec("dense", units=num_classes), LayerSpec("softmax")]
    elif variant == "txb-small-512":
        layers = [conv(16), LayerSpec("relu"), LayerSpec("maxpool"), LayerSpec("flatten"),
                  LayerSpec("dense", units=num_classes), LayerSpec("softmax")]
    elif variant == "txb-tiny":
        layers = [LayerSpec("conv", filters=12, height=1, width=7, padding="same"), LayerSpec("relu"),
                  LayerSpec("flatten"), LayerSpec("dense", units=num_classes), LayerSpec("softmax")]
    else:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    return ModelSpec(tuple(layers), num_classes, (L, K, 2), variant, target, normalize)


class Model:
    """Parameters plus forward/backward over a ModelSpec.

    Parameters are float64 and kept in ``self.params`` as a list of dicts,
    one per layer (empty for parameter-free layers).
    """

    def __init__(self, spec: ModelSpec, seed: int = 0):
        self.spec = spec
        self.params = self._init_params(np.random.default_rng(seed))
        self._cache = None

    def _init_params(self, rng: np.random.Generator) -> list:
        params = []
        shape = tuple(self.spec.input_shape)
        for layer, out_shape in zip(self.spec.layers, self.spec.shapes()):
            p = {}
            if layer.kind == "conv":
                fan_in = layer.height * layer.width * shape[2]
                bound = np.sqrt(6.0 / fan_in)
                p["W"] = rng.uniform(-bound, bound, (layer.filters, layer.height, layer.width, shape[2]))
                p["b"] = np.zeros(layer.filters)
            elif layer.kind == "dense":
                bound = np.sqrt(6.0 / shape[0])
                p["W"] = rng.uniform(-bound, bound, (shape[0], layer.units))
                p["b"] = np.zeros(layer.units)
            params.append(p)
            shape = out_shape
        return params

    def parameters(self):
        """(layer index, name, array) triples in declaration order."""
        for i, p in enumerate(self.params):
            for name in ("W", "b"):
                if name in p:
                    yield i, name, p[name]

    def num_parameters(self) -> int:
        return sum(a.size for _, _, a in self.parameters())

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1:] != tuple(self.spec.input_shape):
            raise ValueError(f"model expects inputs of shape {tuple(self.spec.input_shape)}, got {x.shape[1:]}")
        return x

    def forward(self, x: np.ndarray, upto: int | None = None, keep: bool = False) -> np.ndarray:
        """Logits for a batch; ``upto`` stops after that layer index."""
        h = self._check_input(x)
        cache = []
        stop = len(self.spec.layers) if upto is None else upto + 1
        for layer, p in zip(self.spec.layers[:stop], self.params[:stop]):
            inp = h
            aux = None
            if layer.kind == "conv":
                h = F.conv_forward(h, p["W"], p["b"], layer.padding)
            elif layer.kind == "relu":
                h = F.relu(h)
            elif layer.kind == "maxpool":
                h, aux = F.maxpool_forward(h, layer.pool)
            elif layer.kind == "flatten":
                h = h.reshape(h.shape[0], -1)
            elif layer.kind == "dense":
                h = F.dense_forward(h, p["W"], p["b"])
            elif layer.kind == "softmax":
                pass  # logits are returned; softmax is folded into the loss
            if keep:
                cache.append((inp, aux))
        self._cache = cache if keep else None
        return h

    def predict_proba(self, x, batch_size: int = 256) -> np.ndarray:
        """Class probabilities; ``x`` may be an array or any sliceable lazy view."""
        if isinstance(x, np.ndarray) and x.ndim == 3:
            x = x[None]
        out = [F.softmax(self.forward(x[i:i + batch_size])) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros((0, self.spec.num_classes))

    def predict(self, x, batch_size: int = 256) -> np.ndarray:
        return np.argmax(self.predict_proba(x, batch_size), axis=1)

    def backward(self, dlogits: np.ndarray) -> list:
        """Gradients for every parameter, given dloss/dlogits of the cached pass."""
        if self._cache is None:
            raise RuntimeError("backward needs a forward pass with keep=True")
        grads = [dict() for _ in self.params]
        g = dlogits
        for i in range(len(self._cache) - 1, -1, -1):
            layer, p = self.spec.layers[i], self.params[i]
            inp, aux = self._cache[i]
            if layer.kind == "conv":
                g, grads[i]["W"], grads[i]["b"] = F.conv_backward(g, inp, p["W"], layer.padding)
            elif layer.kind == "relu":
                g = F.relu_backward(g, inp)
            elif layer.kind == "maxpool":
                g = F.maxpool_backward(g, aux, inp.shape, layer.pool)
            elif layer.kind == "flatten":
                g = g.reshape(inp.shape)
            elif layer.kind == "dense":
                g, grads[i]["W"], grads[i]["b"] = F.dense_backward(g, inp, p["W"])
        return grads

    def loss_and_grads(self, x: np.ndarray, labels):
        logits = self.forward(x, keep=True)
        loss, dlogits = F.softmax_cross_entropy(logits, labels)
        grads = self.backward(dlogits)
        self._cache = None
        return loss, grads, logits

    def loss(self, x: np.ndarray, labels) -> float:
        return F.softmax_cross_entropy(self.forward(x), labels)[0]

    def copy(self) -> "Model":
        m = Model.__new__(Model)
        m.spec = self.spec
        m.params = [{k: v.copy() for k, v in p.items()} for p in self.params]
        m._cache = None
        return m


def build_model(variant: str, L: int = 1, K: int = 2048, num_classes: int = 12,
                target: str = "txb", seed: int = 0, **kwargs) -> Model:
    return Model(build_spec(variant, L, K, num_classes, target, **kwargs), seed)


def activation_map(model: Model, inputs: np.ndarray, layer_index: int = 0, batch_size: int = 256) -> np.ndarray:
    """Mean conv output per filter, over positions and inputs (pre-ReLU)."""
    if model.spec.layers[layer_index].kind != "conv":
        raise ValueError(f"layer {layer_index} is {model.spec.layers[layer_index].kind!r}, not conv")
    x = model._check_input(inputs)
    total = np.zeros(model.spec.layers[layer_index].filters)
    count = 0
    for i in range(0, len(x), batch_size):
        out = model.forward(x[i:i + batch_size], upto=layer_index)
        total += out.reshape(-1, out.shape[-1]).sum(axis=0)
        count += out.reshape(-1, out.shape[-1]).shape[0]
    return total / max(count, 1)


# --- model files -------------------------------------------------------------
#
# MAGIC(4) | version u16 | header length u32 | header JSON | parameters
#
# The header carries the ModelSpec, the storage dtype and every parameter
# shape; parameters follow as raw little-endian arrays in declaration order.

def save_model(model: Model, path, dtype: str = "<f8") -> None:
    shapes = [[i, name, list(a.shape)] for i, name, a in model.parameters()]
    header = json.dumps({"spec": model.spec.to_dict(), "dtype": dtype, "params": shapes},
                        sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<HI", MODEL_VERSION, len(header)))
        fh.write(header)
        for _, _, a in model.parameters():
            fh.write(np.ascontiguousarray(a, dtype=np.dtype(dtype)).tobytes())


def load_model(path) -> Model:
    blob = Path(path).read_bytes()
    if len(blob) < 10 or blob[:4] != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: not a model file")
    version, hlen = struct.unpack("<HI", blob[4:10])
    if version != MODEL_VERSION:
        raise ModelFormatError(f"{path}: model format version {version}, expected {MODEL_VERSION}")
    if len(blob) < 10 + hlen:
        raise ModelFormatError(f"{path}: truncated header")
    try:
        header = json.loads(blob[10:10 + hlen])
    except ValueError as exc:
        raise ModelFormatError(f"{path}: corrupt header") from exc
    spec = ModelSpec.from_dict(header["spec"])
    dtype = np.dtype(header["dtype"])
    model = Model.__new__(Model)
    model.spec = spec
    model._cache = None
    model.params = [dict() for _ in spec.layers]
    pos = 10 + hlen
    for i, name, shape in header["params"]:
        n = int(np.prod(shape)) * dtype.itemsize
        if pos + n > len(blob):
            raise ModelFormatError(f"{path}: truncated parameter data at byte offset {pos}")
        model.params[i][name] = np.frombuffer(blob, dtype=dtype, count=int(np.prod(shape)), offset=pos) \
            .reshape(shape).astype(np.float64)
        pos += n
    if pos != len(blob):
        raise ModelFormatError(f"{path}: {len(blob) - pos} trailing bytes after parameters")
    return model
