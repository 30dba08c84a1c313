"""Implicit-field MLPs over pixel-aligned features and normalized depth.

The network input is ``v0 = concat(feature, z)``. Hidden layers use leaky ReLU and
hidden layers listed in ``skip_layers`` see ``concat(h, v0)``. For multi-view input
the net is split after hidden layer ``embed_layer``: the front half runs per view,
the per-view embeddings (and raw inputs feeding later skips) are averaged, and the
back half maps the average to the output.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

LEAKY_SLOPE = 0.01
FULL_WIDTHS = (1024, 512, 256, 128)
DESK_WIDTHS = (128, 128, 128, 64)


class ShapeMismatch(ValueError):
    pass


@dataclass
class MlpSpec:
    input_dim: int
    hidden_widths: tuple = DESK_WIDTHS
    output_dim: int = 1
    output_activation: str = "sigmoid"  # sigmoid | tanh01 | linear
    leaky_slope: float = LEAKY_SLOPE
    skip_layers: frozenset = None
    embed_layer: int | None = None

    def __post_init__(self):
        self.hidden_widths = tuple(int(w) for w in self.hidden_widths)
        if self.input_dim < 1 or self.output_dim < 1 or any(w < 1 for w in self.hidden_widths):
            raise ValueError("layer widths must be positive")
        if self.skip_layers is None:
            self.skip_layers = frozenset(range(1, len(self.hidden_widths)))
        self.skip_layers = frozenset(int(s) for s in self.skip_layers)
        if not self.skip_layers <= set(range(1, len(self.hidden_widths))):
            raise ValueError("skip_layers must index hidden layers 1..H-1")
        if self.output_activation not in ("sigmoid", "tanh01", "linear"):
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        if self.embed_layer is not None and not 0 <= self.embed_layer < len(self.hidden_widths):
            raise ValueError("embed_layer must index a hidden layer")

    @property
    def n_hidden(self):
        return len(self.hidden_widths)

    def layer_shapes(self):
        """(out, in) for every hidden layer then the output layer."""
        shapes = []
        prev = self.input_dim
        for i, w in enumerate(self.hidden_widths):
            fan_in = prev + (self.input_dim if i in self.skip_layers else 0)
            shapes.append((w, fan_in))
            prev = w
        shapes.append((self.output_dim, prev))
        return shapes

    def to_dict(self):
        return {"input_dim": self.input_dim, "hidden_widths": list(self.hidden_widths),
                "output_dim": self.output_dim, "output_activation": self.output_activation,
                "leaky_slope": self.leaky_slope, "skip_layers": sorted(self.skip_layers),
                "embed_layer": self.embed_layer}

    @classmethod
    def from_dict(cls, d):
        return cls(**{**d, "hidden_widths": tuple(d["hidden_widths"]),
                      "skip_layers": frozenset(d["skip_layers"])})


def surface_spec(feature_dim, preset="desk", embed_layer=3, **kw):
    widths = FULL_WIDTHS if preset == "paper" else DESK_WIDTHS
    return MlpSpec(feature_dim + 1, widths, 1, "sigmoid", embed_layer=embed_layer, **kw)


def texture_spec(color_feature_dim, surface_feature_dim, preset="desk", embed_layer=3, **kw):
    widths = FULL_WIDTHS if preset == "paper" else DESK_WIDTHS
    return MlpSpec(color_feature_dim + surface_feature_dim + 1, widths, 3, "tanh01",
                   embed_layer=embed_layer, **kw)


def exact_mean(stack):
    """Mean over axis 0 that is exactly invariant to order and exact for equal entries.

    Computed as ``min + sum(sorted - min) / n`` so the summation order is canonical
    and identical inputs reduce to the input itself.
    """
    if stack.shape[0] == 1:
        return stack[0].copy()
    s = np.sort(stack, axis=0)
    base = s[0]
    return base + (s[1:] - base).sum(axis=0) / stack.shape[0]


class FieldNet:
    def __init__(self, spec, seed=0):
        self.spec = spec
        rng = np.random.default_rng(seed)
        self.weights, self.biases = [], []
        for out_dim, in_dim in spec.layer_shapes():
            limit = np.sqrt(6.0 / (in_dim + out_dim))
            self.weights.append(rng.uniform(-limit, limit, (out_dim, in_dim)))
            self.biases.append(np.zeros(out_dim))

    @property
    def params(self):
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    @property
    def embed_layer(self):
        return self.spec.embed_layer

    def zero_(self):
        for p in self.params:
            p[...] = 0.0
        return self

    def checksum(self):
        h = hashlib.sha256()
        for p in self.params:
            h.update(np.ascontiguousarray(p, dtype="<f8").tobytes())
        return h.hexdigest()

    def copy(self):
        other = FieldNet.__new__(FieldNet)
        other.spec = self.spec
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        return other

    # -- building blocks ----------------------------------------------------

    def _inputs(self, feature, z):
        feature = np.asarray(feature, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        if feature.ndim == 1:
            feature = feature[None]
            z = np.reshape(z, (1,))
        if feature.shape[-1] + 1 != self.spec.input_dim:
            raise ShapeMismatch(f"feature has {feature.shape[-1]} channels, net expects "
                                f"{self.spec.input_dim - 1}")
        return np.concatenate([feature, z.reshape(-1, 1)], axis=1)

    def _act(self, pre):
        return np.where(pre > 0, pre, self.spec.leaky_slope * pre)

    def _run(self, h, v0, first, last, cache):
        """Hidden layers ``first..last`` (inclusive) starting from activation ``h``."""
        for i in range(first, last + 1):
            inp = v0 if i == 0 else (np.concatenate([h, v0], axis=1)
                                     if i in self.spec.skip_layers else h)
            pre = inp @ self.weights[i].T + self.biases[i]
            h = self._act(pre)
            if cache is not None:
                cache.append((inp, pre))
        return h

    def _head(self, h, cache):
        pre = h @ self.weights[-1].T + self.biases[-1]
        if cache is not None:
            cache.append((h, pre))
        act = self.spec.output_activation
        if act == "sigmoid":
            return 1.0 / (1.0 + np.exp(-pre))
        if act == "tanh01":
            return 0.5 * (np.tanh(pre) + 1.0)
        return pre

    def _head_grad(self, out, upstream):
        act = self.spec.output_activation
        if act == "sigmoid":
            return upstream * out * (1.0 - out)
        if act == "tanh01":
            t = 2.0 * out - 1.0
            return upstream * 0.5 * (1.0 - t * t)
        return upstream

    def _split(self):
        e = self.spec.embed_layer
        return self.spec.n_hidden - 1 if e is None else e

    # -- public API -----------------------------------------------------------

    def forward(self, feature, z, cache=None):
        """Field value [n, output_dim] for features [n, F] and depths [n]."""
        v0 = self._inputs(feature, z)
        e = self._split()
        h = self._run(None, v0, 0, e, cache)
        h = self._run(h, v0, e + 1, self.spec.n_hidden - 1, cache)
        return self._head(h, cache)

    def embed(self, feature, z):
        if self.spec.embed_layer is None:
            raise ValueError("embed_layer is not set")
        v0 = self._inputs(feature, z)
        return self._run(None, v0, 0, self.spec.embed_layer, None)

    def fuse_forward(self, features, zs, cache=None):
        """Multi-view field value from per-view features [V, n, F] and depths [V, n]."""
        if self.spec.embed_layer is None:
            raise ValueError("embed_layer is not set")
        if len(features) == 0:
            raise ValueError("need at least one view")
        e = self.spec.embed_layer
        v0s, phis, front = [], [], []
        for feat, z in zip(features, zs):
            v0 = self._inputs(feat, z)
            c = [] if cache is not None else None
            phis.append(self._run(None, v0, 0, e, c))
            v0s.append(v0)
            front.append(c)
        phi = exact_mean(np.stack(phis))
        v0_mean = exact_mean(np.stack(v0s))
        back = [] if cache is not None else None
        h = self._run(phi, v0_mean, e + 1, self.spec.n_hidden - 1, back)
        out = self._head(h, back)
        if cache is not None:
            cache.append((front, back, len(v0s)))
        return out

    def _backward_layers(self, entries, first, grad_h, grads, grad_v0):
        """Reverse through hidden layers first..first+len(entries)-1."""
        for i in range(first + len(entries) - 1, first - 1, -1):
            inp, pre = entries[i - first]
            g_pre = grad_h * np.where(pre > 0, 1.0, self.spec.leaky_slope)
            grads[2 * i] += g_pre.T @ inp
            grads[2 * i + 1] += g_pre.sum(axis=0)
            g_inp = g_pre @ self.weights[i]
            if i == 0:
                grad_v0 += g_inp
                grad_h = None
            elif i in self.spec.skip_layers:
                width = self.spec.hidden_widths[i - 1]
                grad_v0 += g_inp[:, width:]
                grad_h = g_inp[:, :width]
            else:
                grad_h = g_inp
        return grad_h

    def backward(self, cache, out, upstream):
        """Parameter gradients (summed over the batch) and d/d(feature, z).

        ``cache`` comes from ``forward(..., cache=[])``; ``upstream`` is d loss / d out.
        Returns ``(grads, grad_input)`` with ``grad_input`` shaped [n, F + 1].
        """
        grads = [np.zeros_like(p) for p in self.params]
        nh = self.spec.n_hidden
        h_in, _ = cache[nh]
        g_pre = self._head_grad(out, np.asarray(upstream, dtype=np.float64).reshape(out.shape))
        grads[-2] += g_pre.T @ h_in
        grads[-1] += g_pre.sum(axis=0)
        grad_h = g_pre @ self.weights[-1]
        grad_v0 = np.zeros((out.shape[0], self.spec.input_dim))
        self._backward_layers(cache[:nh], 0, grad_h, grads, grad_v0)
        return grads, grad_v0

    def fuse_backward(self, cache, out, upstream):
        """Like ``backward`` for ``fuse_forward``; input gradients come back per view [V, n, F + 1]."""
        front, back, n_views = cache[-1]
        e = self.spec.embed_layer
        nh = self.spec.n_hidden
        grads = [np.zeros_like(p) for p in self.params]
        h_in, _ = back[-1]
        g_pre = self._head_grad(out, np.asarray(upstream, dtype=np.float64).reshape(out.shape))
        grads[-2] += g_pre.T @ h_in
        grads[-1] += g_pre.sum(axis=0)
        grad_h = g_pre @ self.weights[-1]
        grad_v0_mean = np.zeros((out.shape[0], self.spec.input_dim))
        grad_phi = self._backward_layers(back[:-1], e + 1, grad_h, grads, grad_v0_mean) \
            if e + 1 < nh else grad_h
        grad_inputs = []
        for c in front:
            g_v0 = grad_v0_mean / n_views
            self._backward_layers(c, 0, grad_phi / n_views, grads, g_v0)
            grad_inputs.append(g_v0)
        return grads, np.stack(grad_inputs)

    # -- serialization --------------------------------------------------------

    def header(self):
        return {"spec": self.spec.to_dict(),
                "layers": [list(w.shape) for w in self.weights]}

    def flat_params(self):
        return np.concatenate([p.ravel() for p in self.params])

    def load_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64).ravel()
        sizes = [p.size for p in self.params]
        if flat.size != sum(sizes):
            raise ShapeMismatch(f"expected {sum(sizes)} parameters, got {flat.size}")
        offset = 0
        for p in self.params:
            p[...] = flat[offset:offset + p.size].reshape(p.shape)
            offset += p.size
        return self

    @classmethod
    def from_header(cls, header, flat):
        spec = MlpSpec.from_dict(header["spec"])
        net = cls(spec)
        if [list(w.shape) for w in net.weights] != header["layers"]:
            raise ShapeMismatch("layer shapes in header disagree with the MlpSpec")
        return net.load_flat(flat)


def forward(net, feature, z):
    return net.forward(feature, z)


def embed(net, feature, z):
    return net.embed(feature, z)


def fuse_forward(net, views):
    """``views`` is a list of (feature [n, F], z [n]) pairs."""
    if not views:
        raise ValueError("need at least one view")
    return net.fuse_forward([f for f, _ in views], [z for _, z in views])
