"""Tiny teacher/student classifiers with hand-written reverse mode.

Three fixed recipes are available:

``tiny_student``
    conv3x3(16w) - relu - maxpool2 - conv3x3(32w) - relu - maxpool2 - gap - fc(n_c)
``tiny_teacher``
    as the student with an extra conv block and twice the channel widths
``mlp_probe``
    flatten - fc(16) - relu - fc(n_c), small enough for finite-difference checks

The embedding returned by :func:`forward` is the penultimate vector: the
global-average-pool output for the conv nets, the hidden ReLU layer for the
probe.
"""

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _layers as L
from .errors import ConfigurationError, FormatError, InputError, NumericError, UsageError

ARCHS = ("tiny_teacher", "tiny_student", "mlp_probe")
PRECISIONS = {"float64": np.float64, "float32": np.float32}

CHECKPOINT_MAGIC = b"CDCK"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    arch_id: str
    n_classes: int
    width_multiplier: float = 1.0
    input_shape: tuple = (3, 32, 32)
    seed: int = 0
    precision: str = "float64"

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        if self.arch_id not in ARCHS:
            raise ConfigurationError(f"arch_id must be one of {ARCHS}, got {self.arch_id!r}")
        if int(self.n_classes) != self.n_classes or self.n_classes < 2:
            raise ConfigurationError(f"n_classes must be an integer >= 2, got {self.n_classes}")
        if not self.width_multiplier > 0:
            raise ConfigurationError(f"width_multiplier must be positive, got {self.width_multiplier}")
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ConfigurationError(f"input_shape must be three positive ints, got {self.input_shape}")
        if self.precision not in PRECISIONS:
            raise ConfigurationError(f"precision must be one of {tuple(PRECISIONS)}")

    @property
    def dtype(self):
        return PRECISIONS[self.precision]

    def to_json(self):
        """Canonical JSON text (sorted keys, no whitespace)."""
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d):
        return cls(**{**d, "input_shape": tuple(d["input_shape"])})


def _channels(base, width):
    return max(1, int(round(base * width)))


def layer_recipe(spec):
    """Ordered layer list for ``spec``: tuples of (kind, *dims)."""
    c, h, w = spec.input_shape
    if spec.arch_id == "mlp_probe":
        return [("flatten",), ("fc", c * h * w, 16), ("relu",), ("fc", 16, spec.n_classes)]
    bases = (16, 32) if spec.arch_id == "tiny_student" else (32, 64, 128)
    layers, cin = [], c
    for base in bases:
        cout = _channels(base, spec.width_multiplier)
        # relu(maxpool(x)) == maxpool(relu(x)) exactly; pooling first is 4x cheaper
        layers += [("conv", cin, cout), ("pool",), ("relu",)]
        cin = cout
    layers += [("gap",), ("fc", cin, spec.n_classes)]
    return layers


def _check_spatial(spec):
    if spec.arch_id == "mlp_probe":
        return
    n_pool = 2 if spec.arch_id == "tiny_student" else 3
    _, h, w = spec.input_shape
    if h >> n_pool < 1 or w >> n_pool < 1:
        raise ConfigurationError(
            f"input_shape {spec.input_shape} too small for {n_pool} pooling stages")


def parameter_shapes(spec):
    shapes = []
    for layer in layer_recipe(spec):
        if layer[0] == "conv":
            shapes += [(layer[2], layer[1], 3, 3), (layer[2],)]
        elif layer[0] == "fc":
            shapes += [(layer[2], layer[1]), (layer[2],)]
    return shapes


def parameter_count(spec):
    return int(sum(np.prod(s) for s in parameter_shapes(spec)))


@dataclass
class Model:
    spec: ModelSpec
    params: list
    mode: str = "train"
    # per-channel (mean, std) of the training images; travels with checkpoints
    normalization: tuple = None
    _version: int = field(default=0, repr=False)

    def train(self):
        self.mode = "train"
        return self

    def eval(self):
        self.mode = "eval"
        return self

    @property
    def n_parameters(self):
        return int(sum(p.size for p in self.params))

    def copy(self):
        return Model(self.spec, [p.copy() for p in self.params], self.mode,
                     self.normalization, self._version)

    def load_params(self, params):
        if len(params) != len(self.params):
            raise InputError("parameter list length mismatch")
        for dst, src in zip(self.params, params):
            if dst.shape != np.shape(src):
                raise InputError(f"parameter shape mismatch {dst.shape} vs {np.shape(src)}")
            dst[...] = src
        self.touch()

    def touch(self):
        """Mark parameters as modified, invalidating outstanding forward caches."""
        self._version += 1


@dataclass
class ForwardResult:
    logits: np.ndarray
    embedding: np.ndarray
    cache: object = None


def build_model(spec):
    """Initialize a model: weights uniform in +-sqrt(6 / fan_in), biases zero."""
    if not isinstance(spec, ModelSpec):
        raise ConfigurationError("build_model expects a ModelSpec")
    _check_spatial(spec)
    rng = np.random.default_rng(spec.seed)
    params = []
    for shape in parameter_shapes(spec):
        if len(shape) == 1:
            params.append(np.zeros(shape, dtype=spec.dtype))
            continue
        fan_in = int(np.prod(shape[1:]))
        bound = np.sqrt(6.0 / fan_in)
        params.append(rng.uniform(-bound, bound, size=shape).astype(spec.dtype))
    return Model(spec, params)


def _as_batch(model, x):
    x = np.asarray(x)
    if x.ndim != 4 or x.shape[1:] != model.spec.input_shape or x.shape[0] < 1:
        raise InputError(
            f"expected batch of shape (N>=1, {', '.join(map(str, model.spec.input_shape))}), "
            f"got {x.shape}")
    return x.astype(model.spec.dtype, copy=False)


def forward(model, x):
    """Logits and penultimate embedding for an N x C x H x W batch.

    In train mode the returned result carries the activations needed by
    :func:`backward`; in eval mode it does not.
    """
    x = _as_batch(model, x)
    keep = model.mode == "train"
    h = x.transpose(1, 0, 2, 3)
    records, embedding, k = [], None, 0
    layers = layer_recipe(model.spec)
    for idx, layer in enumerate(layers):
        kind = layer[0]
        if kind == "conv":
            w, b = model.params[k], model.params[k + 1]
            out, cols = L.conv3x3_forward(h, w, b)
            records.append((kind, k, cols if keep else None, h.shape))
            k += 2
        elif kind == "fc":
            w, b = model.params[k], model.params[k + 1]
            out = L.linear_forward(h, w, b)
            records.append((kind, k, h, None))
            k += 2
        elif kind == "relu":
            out = L.relu_forward(h)
            records.append((kind, None, out, None))
        elif kind == "pool":
            out, arg = L.maxpool2_forward(h)
            records.append((kind, None, arg, h.shape))
        elif kind == "gap":
            out = L.gap_forward(h)
            records.append((kind, None, None, h.shape))
        elif kind == "flatten":
            # back to sample-major so features follow C, H, W order
            out = h.transpose(1, 0, 2, 3).reshape(h.shape[1], -1)
            records.append((kind, None, None, h.shape))
        if idx == len(layers) - 2:
            embedding = out
        h = out
    logits = h
    if not (np.all(np.isfinite(logits)) and np.all(np.isfinite(embedding))):
        raise NumericError("non-finite activations in forward pass")
    cache = (model._version, records) if keep else None
    return ForwardResult(logits=logits, embedding=embedding, cache=cache)


def backward(model, result, logit_grad, embedding_grad=None):
    """Parameter gradients of sum(logit_grad * logits) [+ sum(embedding_grad * embedding)].

    No batch averaging happens here; losses carry their own 1/N.
    """
    if result.cache is None:
        raise UsageError("backward needs a forward result computed in train mode")
    version, records = result.cache
    if version != model._version:
        raise UsageError("forward cache is stale: parameters changed since the forward pass")
    g = np.asarray(logit_grad, dtype=model.spec.dtype)
    if g.shape != result.logits.shape:
        raise InputError(f"logit_grad shape {g.shape} != logits shape {result.logits.shape}")
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite logit gradient")
    grads = [None] * len(model.params)
    n_layers = len(records)
    for idx in range(n_layers - 1, -1, -1):
        kind, k, saved, shape = records[idx]
        if idx == n_layers - 2 and embedding_grad is not None:
            g = g + np.asarray(embedding_grad, dtype=g.dtype)
        if kind == "fc":
            g, grads[k], grads[k + 1] = L.linear_backward(g, saved, model.params[k], need_dx=idx > 0)
        elif kind == "conv":
            g, grads[k], grads[k + 1] = L.conv3x3_backward(
                g, saved, model.params[k], shape, need_dx=idx > 0)
        elif kind == "relu":
            g = L.relu_backward(g, saved)
        elif kind == "pool":
            g = L.maxpool2_backward(g, saved, shape)
        elif kind == "gap":
            g = L.gap_backward(g, shape)
        elif kind == "flatten":
            c, n, hh, ww = shape
            g = g.reshape(n, c, hh, ww).transpose(1, 0, 2, 3)
    return grads


def save_checkpoint(model, path):
    """Write ``model`` as a versioned little-endian binary checkpoint.

    Layout: magic ``CDCK``, u32 header length, canonical JSON header
    ``{format_version, model_spec, n_arrays, normalization}``, then per array a
    u64 element count followed by that many float64 values.
    """
    norm = None
    if model.normalization is not None:
        mean, std = model.normalization
        norm = {"mean": [float(v) for v in mean], "std": [float(v) for v in std]}
    header = {
        "format_version": CHECKPOINT_VERSION,
        "model_spec": json.loads(model.spec.to_json()),
        "n_arrays": len(model.params),
        "normalization": norm,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for p in model.params:
            flat = np.ascontiguousarray(p, dtype="<f8").ravel()
            f.write(struct.pack("<Q", flat.size))
            f.write(flat.tobytes())
    return path


def load_checkpoint(path):
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint file (bad magic)")
    try:
        (hlen,) = struct.unpack_from("<I", data, 4)
        header = json.loads(data[8:8 + hlen].decode("utf-8"))
    except (struct.error, ValueError) as exc:
        raise FormatError(f"{path}: corrupt checkpoint header") from exc
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported format_version {header.get('format_version')}")
    spec = ModelSpec.from_dict(header["model_spec"])
    shapes = parameter_shapes(spec)
    if header["n_arrays"] != len(shapes):
        raise FormatError(f"{path}: array count {header['n_arrays']} does not match spec")
    offset, params = 8 + hlen, []
    for shape in shapes:
        if offset + 8 > len(data):
            raise FormatError(f"{path}: truncated at byte {offset}")
        (n,) = struct.unpack_from("<Q", data, offset)
        offset += 8
        if n != int(np.prod(shape)) or offset + 8 * n > len(data):
            raise FormatError(f"{path}: bad array length at byte {offset - 8}")
        arr = np.frombuffer(data, dtype="<f8", count=n, offset=offset).reshape(shape)
        params.append(arr.astype(spec.dtype))
        offset += 8 * n
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes")
    norm = header.get("normalization")
    if norm is not None:
        norm = (np.asarray(norm["mean"]), np.asarray(norm["std"]))
    return Model(spec, params, mode="eval", normalization=norm)
