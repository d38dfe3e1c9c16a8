"""Minimal dense neural-network engine.

Multilayer perceptrons with analytic reverse-mode gradients, Adam, and
running input normalization. Everything is float64 numpy; there is no
autodiff graph. Forward passes are safe to share across threads; updates
(Adam steps, normalizer updates) need exclusive access.
"""

from __future__ import annotations

import numpy as np

ACTIVATIONS = ("identity", "tanh")


def _as_batch(x, dim, what):
    """Coerce to a (n, dim) float64 batch, remembering if input was 1-D."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
        single = True
    elif arr.ndim == 2:
        single = False
    else:
        raise ValueError(f"{what} must be a vector or a batch of vectors, got shape {arr.shape}")
    if arr.shape[1] != dim:
        raise ValueError(f"{what} dimension mismatch: expected {dim}, got {arr.shape[1]}")
    return arr, single


class Mlp:
    """Fully connected network: ReLU hidden layers, identity or tanh output.

    Layer i holds a weight matrix of shape (out_i, in_i) and a bias of
    shape (out_i,); forward computes x @ W.T + b per layer. Parameters are
    initialized uniformly in +-1/sqrt(fan_in).
    """

    def __init__(self, layer_sizes, output_activation="identity", rng=None):
        sizes = tuple(int(s) for s in layer_sizes)
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ValueError(f"layer_sizes must be >=2 positive integers, got {layer_sizes}")
        if output_activation not in ACTIVATIONS:
            raise ValueError(f"output_activation must be one of {ACTIVATIONS}")
        if rng is None:
            rng = np.random.default_rng()
        self.layer_sizes = sizes
        self.output_activation = output_activation
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    @classmethod
    def from_parameters(cls, layer_sizes, output_activation, weights, biases):
        net = cls.__new__(cls)
        net.layer_sizes = tuple(int(s) for s in layer_sizes)
        net.output_activation = output_activation
        net.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        net.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            expect = (net.layer_sizes[i + 1], net.layer_sizes[i])
            if w.shape != expect or b.shape != (expect[0],):
                raise ValueError(f"layer {i} parameter shapes {w.shape}/{b.shape} do not match sizes {expect}")
        return net

    @property
    def in_dim(self):
        return self.layer_sizes[0]

    @property
    def out_dim(self):
        return self.layer_sizes[-1]

    def parameters(self):
        """Flat parameter list [W0, b0, W1, b1, ...]; arrays are live views."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def parameter_names(self, prefix=""):
        names = []
        for i in range(len(self.weights)):
            names.append(f"{prefix}W{i}")
            names.append(f"{prefix}b{i}")
        return names

    def copy(self):
        return Mlp.from_parameters(
            self.layer_sizes,
            self.output_activation,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def forward(self, x):
        y, _ = self.forward_cached(x)
        return y

    def forward_cached(self, x):
        """Forward pass keeping the per-layer inputs and pre-activations for backward."""
        a, single = _as_batch(x, self.in_dim, "input")
        inputs = [a]
        pre = []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            pre.append(z)
            if i < last:
                a = np.maximum(z, 0.0)
            elif self.output_activation == "tanh":
                a = np.tanh(z)
            else:
                a = z
            inputs.append(a)
        cache = {"inputs": inputs, "pre": pre, "single": single}
        out = inputs[-1]
        return (out[0] if single else out), cache

    def backward(self, cache, upstream):
        """Gradients of sum_rows <upstream, output> w.r.t. parameters and input.

        Returns (grads, input_grad) where grads matches parameters() order.
        For a batch, parameter gradients are summed over rows; callers bake
        any 1/N into upstream.
        """
        inputs, pre, single = cache["inputs"], cache["pre"], cache["single"]
        g, gsingle = _as_batch(upstream, self.out_dim, "upstream")
        if single != gsingle or g.shape[0] != inputs[0].shape[0]:
            raise ValueError("upstream shape does not match the cached forward pass")

        if self.output_activation == "tanh":
            delta = g * (1.0 - inputs[-1] ** 2)
        else:
            delta = g
        w_grads = [None] * len(self.weights)
        b_grads = [None] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            w_grads[i] = delta.T @ inputs[i]
            b_grads[i] = delta.sum(axis=0)
            delta = delta @ self.weights[i]
            if i > 0:
                np.multiply(delta, pre[i - 1] > 0.0, out=delta)
        grads = []
        for wg, bg in zip(w_grads, b_grads):
            grads.append(wg)
            grads.append(bg)
        input_grad = delta[0] if single else delta
        return grads, input_grad

    def gradients(self, x, upstream):
        """One-call forward+backward: gradients of <upstream, forward(x)>."""
        _, cache = self.forward_cached(x)
        return self.backward(cache, upstream)


class Adam:
    """Adam with bias correction; updates the given parameter arrays in place.

    Moment accumulators start at zero; the shared step counter increases by
    one per step() call. Update rule: p -= lr * mhat / (sqrt(vhat) + eps).
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, names=None):
        self.params = list(params)
        if names is None:
            names = [f"param{i}" for i in range(len(self.params))]
        if len(names) != len(self.params):
            raise ValueError("names and params length mismatch")
        self.names = list(names)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self._scratch = [np.empty_like(p) for p in self.params]

    def step(self, grads):
        if len(grads) != len(self.params):
            raise ValueError(f"expected {len(self.params)} gradients, got {len(grads)}")
        for name, p, g in zip(self.names, self.params, grads):
            g = np.asarray(g)
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} does not match {name} shape {p.shape}")
            if not np.all(np.isfinite(g)):
                raise ValueError(f"non-finite gradient for {name}")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        step_scale = self.lr / c1
        for p, g, m, v, buf in zip(
            self.params, (np.asarray(g, dtype=np.float64) for g in grads), self.m, self.v, self._scratch
        ):
            m *= self.beta1
            np.multiply(g, 1.0 - self.beta1, out=buf)
            m += buf
            v *= self.beta2
            np.multiply(g, g, out=buf)
            buf *= 1.0 - self.beta2
            v += buf
            np.divide(v, c2, out=buf)
            np.sqrt(buf, out=buf)
            buf += self.eps
            np.divide(m, buf, out=buf)
            buf *= step_scale
            p -= buf


class RunningNormalizer:
    """Per-dimension running mean/variance with clipped standardization.

    Fresh normalizers act as mean 0, variance 1. normalize() returns
    (x - mean) / sqrt(var + floor) clipped to +-clip_range. Counters
    rows_seen/update_calls exist so tests can prove what data went in.
    """

    def __init__(self, dim, clip_range=5.0, var_floor=1e-8):
        self.dim = int(dim)
        self.clip_range = float(clip_range)
        self.var_floor = float(var_floor)
        self._sum = np.zeros(self.dim)
        self._sumsq = np.zeros(self.dim)
        self._count = 0
        self.rows_seen = 0
        self.update_calls = 0

    @property
    def count(self):
        return self._count

    @property
    def mean(self):
        if self._count == 0:
            return np.zeros(self.dim)
        return self._sum / self._count

    @property
    def var(self):
        if self._count == 0:
            return np.ones(self.dim)
        raw = self._sumsq / self._count - (self._sum / self._count) ** 2
        return np.maximum(raw, self.var_floor)

    def update(self, rows):
        rows, _ = _as_batch(rows, self.dim, "normalizer update")
        self._sum += rows.sum(axis=0)
        self._sumsq += (rows * rows).sum(axis=0)
        self._count += rows.shape[0]
        self.rows_seen += rows.shape[0]
        self.update_calls += 1

    def normalize(self, x):
        arr, single = _as_batch(x, self.dim, "normalizer input")
        out = (arr - self.mean) / np.sqrt(self.var + self.var_floor)
        out = np.clip(out, -self.clip_range, self.clip_range)
        return out[0] if single else out

    def state_arrays(self):
        return {"sum": self._sum.copy(), "sumsq": self._sumsq.copy()}

    def load_state(self, total, total_sq, count):
        total = np.asarray(total, dtype=np.float64)
        total_sq = np.asarray(total_sq, dtype=np.float64)
        if total.shape != (self.dim,) or total_sq.shape != (self.dim,):
            raise ValueError("normalizer state shape mismatch")
        self._sum = total.copy()
        self._sumsq = total_sq.copy()
        self._count = int(count)


# --- parameter snapshots -----------------------------------------------------
#
# Portable text format, one tensor per block:
#
#   herlab-snapshot v1
#   mlp <name> <s0,s1,...> <activation>      followed by W0 rows, b0 row, W1 rows, ...
#   normalizer <name> <dim> <clip> <floor> <count>   followed by sum row, sumsq row
#   scalar <name> <value>
#   end
#
# Matrices are row-major, one row per line, %.17g (exact float64 round-trip).


def _fmt_row(row):
    return " ".join(f"{v:.17g}" for v in np.atleast_1d(row))


def save_snapshot(path, mlps=None, normalizers=None, scalars=None):
    mlps = mlps or {}
    normalizers = normalizers or {}
    scalars = scalars or {}
    lines = ["herlab-snapshot v1"]
    for name, net in mlps.items():
        sizes = ",".join(str(s) for s in net.layer_sizes)
        lines.append(f"mlp {name} {sizes} {net.output_activation}")
        for w, b in zip(net.weights, net.biases):
            for row in w:
                lines.append(_fmt_row(row))
            lines.append(_fmt_row(b))
    for name, norm in normalizers.items():
        state = norm.state_arrays()
        lines.append(f"normalizer {name} {norm.dim} {norm.clip_range:.17g} {norm.var_floor:.17g} {norm.count}")
        lines.append(_fmt_row(state["sum"]))
        lines.append(_fmt_row(state["sumsq"]))
    for name, value in scalars.items():
        lines.append(f"scalar {name} {float(value):.17g}")
    lines.append("end")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_row(line, width, context):
    row = np.array([float(v) for v in line.split()])
    if row.shape != (width,):
        raise ValueError(f"corrupt snapshot: bad row width in {context}")
    return row


def load_snapshot(path):
    """Parse a snapshot file; returns (mlps, normalizers, scalars) dicts."""
    with open(path) as fh:
        lines = [line.rstrip("\n") for line in fh]
    if not lines or lines[0] != "herlab-snapshot v1":
        raise ValueError(f"{path} is not a herlab snapshot")
    mlps = {}
    normalizers = {}
    scalars = {}
    i = 1
    saw_end = False
    while i < len(lines):
        line = lines[i]
        i += 1
        if line == "end":
            saw_end = True
            break
        kind, rest = line.split(" ", 1)
        if kind == "mlp":
            name, sizes_s, activation = rest.split(" ")
            sizes = [int(s) for s in sizes_s.split(",")]
            weights = []
            biases = []
            for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
                w = np.stack([_parse_row(lines[i + r], fan_in, f"mlp {name}") for r in range(fan_out)])
                i += fan_out
                biases.append(_parse_row(lines[i], fan_out, f"mlp {name}"))
                i += 1
                weights.append(w)
            mlps[name] = Mlp.from_parameters(sizes, activation, weights, biases)
        elif kind == "normalizer":
            name, dim_s, clip_s, floor_s, count_s = rest.split(" ")
            dim = int(dim_s)
            norm = RunningNormalizer(dim, clip_range=float(clip_s), var_floor=float(floor_s))
            total = _parse_row(lines[i], dim, f"normalizer {name}")
            total_sq = _parse_row(lines[i + 1], dim, f"normalizer {name}")
            norm.load_state(total, total_sq, int(count_s))
            normalizers[name] = norm
            i += 2
        elif kind == "scalar":
            name, value = rest.split(" ")
            scalars[name] = float(value)
        else:
            raise ValueError(f"corrupt snapshot: unknown block {kind!r}")
    if not saw_end:
        raise ValueError("snapshot missing end marker")
    return mlps, normalizers, scalars
