"""Small convolutional emulator of automaton dynamics.

Architecture: one 3x3 convolution with periodic padding and a rectifier,
then ``n_pointwise_layers`` 1x1 convolutions, rectified except the last,
which applies the output activation.  Forward and backward passes are
written out by hand in numpy; the 3x3 layer is an im2col over nine cyclic
shifts followed by one matrix product, so throughput is set by BLAS.

Arrays are ``(batch, channels, rows, cols)``.  The 3x3 layer computes a
cross-correlation: ``w[o, c, 1 + dr, 1 + dc]`` weights input pixel
``(r + dr, c + dc)`` for output pixel ``(r, c)``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NonFiniteLoss, ShapeError
from .frames import FrameSeries
from .rng import Xorshift

ACTIVATIONS = ("identity", "sigmoid")
OPTIMIZERS = ("sgd", "momentum", "adam")
LOSSES = ("mse", "bce")

# neighbour offsets in kernel order (row-major over the 3x3 window)
_OFFSETS = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1)]


@dataclass(frozen=True)
class EmulatorSpec:
    in_channels: int = 1
    hidden_channels: int = 16
    n_pointwise_layers: int = 2
    out_channels: int = 1
    output_activation: str = "identity"

    def __post_init__(self):
        for name in ("in_channels", "hidden_channels", "n_pointwise_layers", "out_channels"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"EmulatorSpec.{name} must be an integer >= 1 (got {v})")
        if self.output_activation not in ACTIVATIONS:
            raise ConfigError(f"output_activation must be one of {ACTIVATIONS} "
                              f"(got {self.output_activation!r})")

    def layer_shapes(self):
        """Weight shapes in declaration order (biases are ``shape[0]`` long)."""
        h = self.hidden_channels
        shapes = [(h, self.in_channels, 3, 3)]
        for i in range(self.n_pointwise_layers):
            last = i == self.n_pointwise_layers - 1
            shapes.append((self.out_channels if last else h, h, 1, 1))
        return shapes

    @property
    def n_layers(self):
        return 1 + self.n_pointwise_layers


@dataclass
class EmulatorParams:
    """Weights and biases per layer, validated against ``spec``."""

    spec: EmulatorSpec
    weights: list
    biases: list

    def __post_init__(self):
        shapes = self.spec.layer_shapes()
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ShapeError(f"expected {len(shapes)} layers, got {len(self.weights)} weights "
                             f"and {len(self.biases)} biases", len(shapes), len(self.weights))
        ws, bs = [], []
        for i, (w, b, s) in enumerate(zip(self.weights, self.biases, shapes)):
            w = np.asarray(w)
            b = np.asarray(b)
            if w.dtype.kind != "f":
                w = w.astype(np.float32)
            if b.dtype.kind != "f":
                b = b.astype(np.float32)
            if w.shape != s or b.shape != (s[0],):
                raise ShapeError(f"layer {i}: weight {w.shape} / bias {b.shape} do not match "
                                 f"{s} / {(s[0],)}", s, w.shape)
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {i} has non-finite parameters")
            ws.append(w)
            bs.append(b)
        self.weights, self.biases = ws, bs

    @property
    def dtype(self):
        return self.weights[0].dtype

    def astype(self, dtype):
        return EmulatorParams(self.spec, [w.astype(dtype) for w in self.weights],
                              [b.astype(dtype) for b in self.biases])

    def copy(self):
        return self.astype(self.dtype)

    def tensors(self):
        """All tensors in serialization order: w0, b0, w1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def n_params(self):
        return sum(t.size for t in self.tensors())

    def flat(self):
        return np.concatenate([t.ravel() for t in self.tensors()])

    def with_flat(self, vec):
        vec = np.asarray(vec)
        ts, k = [], 0
        for t in self.tensors():
            ts.append(vec[k:k + t.size].reshape(t.shape).astype(t.dtype))
            k += t.size
        return EmulatorParams(self.spec, ts[0::2], ts[1::2])

    def __eq__(self, other):
        if not isinstance(other, EmulatorParams):
            return NotImplemented
        return self.spec == other.spec and all(
            a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self.tensors(), other.tensors()))


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 32
    epochs: int = 10
    optimizer: str = "adam"
    loss: str = "mse"
    seed: int = 0
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0 (got {self.learning_rate})")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ConfigError(f"batch_size must be an integer >= 1 (got {self.batch_size})")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ConfigError(f"epochs must be an integer >= 1 (got {self.epochs})")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS} (got {self.optimizer!r})")
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES} (got {self.loss!r})")


def normal(rng, n):
    """Standard normals via Box-Muller on pairs of generator doubles."""
    m = (n + 1) // 2
    u = rng.random(2 * m)
    r = np.sqrt(-2.0 * np.log1p(-u[0::2]))   # 1 - u lies in (0, 1]
    t = 2.0 * np.pi * u[1::2]
    return np.concatenate([r * np.cos(t), r * np.sin(t)])[:n]


def init_params(spec, seed):
    """He-style initialisation.

    ``w ~ N(0, gain / fan_in)`` with ``fan_in = in_channels * kh * kw``,
    gain 2 for layers followed by the rectifier and 1 for the output layer.
    Biases start at zero.  Weights are filled layer by layer in C order from
    one generator seeded with ``seed``.
    """
    rng = Xorshift(seed)
    shapes = spec.layer_shapes()
    ws, bs = [], []
    for i, s in enumerate(shapes):
        fan_in = s[1] * s[2] * s[3]
        gain = 1.0 if i == len(shapes) - 1 else 2.0
        z = normal(rng, int(np.prod(s))) * np.sqrt(gain / fan_in)
        ws.append(z.reshape(s).astype(np.float32))
        bs.append(np.zeros(s[0], dtype=np.float32))
    return EmulatorParams(spec, ws, bs)


# --- forward / backward -----------------------------------------------------

def _as_batch(x, spec, dtype):
    x = np.asarray(x)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4:
        raise ShapeError(f"input must be (batch, channels, rows, cols), got shape {x.shape}",
                         spec.in_channels, None)
    if x.shape[1] != spec.in_channels:
        raise ShapeError(f"expected {spec.in_channels} input channels, got {x.shape[1]}",
                         spec.in_channels, x.shape[1])
    if x.shape[2] < 3 or x.shape[3] < 3:
        raise ShapeError(f"spatial dims must be >= 3, got {x.shape[2:]}", 3, x.shape[2:])
    return x.astype(dtype, copy=False)


def im2col(x):
    """``(n, c, r, s)`` -> ``(n, c * 9, r * s)`` of periodic 3x3 neighbourhoods."""
    n, c, r, s = x.shape
    cols = np.empty((n, c, 9, r, s), dtype=x.dtype)
    for k, (dr, dc) in enumerate(_OFFSETS):
        cols[:, :, k] = np.roll(x, (-dr, -dc), axis=(2, 3))
    return cols.reshape(n, c * 9, r * s)


def col2im(cols, shape):
    """Adjoint of :func:`im2col`: scatter-add neighbourhoods back onto pixels."""
    n, c, r, s = shape
    cols = cols.reshape(n, c, 9, r, s)
    out = np.zeros(shape, dtype=cols.dtype)
    for k, (dr, dc) in enumerate(_OFFSETS):
        out += np.roll(cols[:, :, k], (dr, dc), axis=(2, 3))
    return out


def _sigmoid(z, out=None):
    # the tanh form is one ufunc and cannot overflow
    out = np.multiply(z, 0.5, out=out)
    np.tanh(out, out=out)
    out += 1
    out *= 0.5
    return out


def _forward(params, x):
    spec = params.spec
    dt = params.dtype
    x = _as_batch(x, spec, dt)
    n, _, r, s = x.shape
    cols = im2col(x)
    w0 = params.weights[0].reshape(spec.hidden_channels, -1)
    z = np.matmul(w0, cols) + params.biases[0][:, None]
    acts = [cols]    # input of every layer, as (n, fan_in, pixels)
    a = np.maximum(z, 0)
    zs = [z]
    for i in range(1, spec.n_layers):
        acts.append(a)
        w = params.weights[i][:, :, 0, 0]
        z = np.matmul(w, a) + params.biases[i][:, None]
        zs.append(z)
        if i < spec.n_layers - 1:
            a = np.maximum(z, 0)
    out = _sigmoid(z) if spec.output_activation == "sigmoid" else z
    return out.reshape(n, spec.out_channels, r, s), (x.shape, acts, zs)


def forward(params, x):
    """Apply the network; ``x`` is ``(batch, in, rows, cols)`` or one stack.

    Inference only: samples go one at a time through preallocated buffers,
    with no intermediate kept for a backward pass.
    """
    x = np.asarray(x)
    single = x.ndim == 3
    spec = params.spec
    dt = params.dtype
    x = _as_batch(x, spec, dt)
    n, c, r, s = x.shape
    out = np.empty((n, spec.out_channels, r * s), dtype=dt)
    cols = np.empty((c, 9, r, s), dtype=dt)
    w0 = params.weights[0].reshape(spec.hidden_channels, -1)
    for b in range(n):
        xp = np.pad(x[b], ((0, 0), (1, 1), (1, 1)), mode="wrap")
        for k, (dr, dc) in enumerate(_OFFSETS):
            cols[:, k] = xp[:, 1 + dr:1 + dr + r, 1 + dc:1 + dc + s]
        a = w0 @ cols.reshape(c * 9, r * s)
        a += params.biases[0][:, None]
        np.maximum(a, 0, out=a)
        for i in range(1, spec.n_layers):
            a = params.weights[i][:, :, 0, 0] @ a
            a += params.biases[i][:, None]
            if i < spec.n_layers - 1:
                np.maximum(a, 0, out=a)
        if spec.output_activation == "sigmoid":
            _sigmoid(a, out=a)
        out[b] = a
    out = out.reshape(n, spec.out_channels, r, s)
    return out[0] if single else out


def _per_sample_loss(kind, out, z, t):
    n = out.shape[0]
    if kind == "mse":
        d = out - t
        return (d * d).reshape(n, -1).mean(axis=1)
    # numerically stable cross-entropy on the logits
    z = z.reshape(out.shape)
    sp = np.maximum(z, 0) + np.log1p(np.exp(-np.abs(z)))
    return (sp - t * z).reshape(n, -1).mean(axis=1)


def loss_and_gradient(params, inputs, targets, config):
    """Batch-mean loss and its gradient with respect to every parameter.

    The mean runs over samples, output channels and pixels.  Raises
    :class:`NonFiniteLoss` with the index (within the batch) of the first
    sample whose loss is not finite.
    """
    spec = params.spec
    if config.loss == "bce" and spec.output_activation != "sigmoid":
        raise ConfigError("binary cross-entropy needs output_activation='sigmoid'")
    out, (shape, acts, zs) = _forward(params, inputs)
    t = np.asarray(targets).astype(out.dtype, copy=False)
    if t.shape != out.shape:
        raise ShapeError(f"targets shape {t.shape} != output shape {out.shape}",
                         out.shape, t.shape)
    if out.shape[0] == 0:
        raise ConfigError("empty batch")
    with np.errstate(over="ignore", invalid="ignore"):
        per = _per_sample_loss(config.loss, out, zs[-1], t)
    bad = np.flatnonzero(~np.isfinite(per))
    if bad.size:
        raise NonFiniteLoss(f"non-finite loss at batch sample {int(bad[0])}", int(bad[0]))
    loss = float(per.mean())

    n = out.shape[0]
    m = out.size
    o = out.reshape(n, spec.out_channels, -1)
    tt = t.reshape(o.shape)
    if config.loss == "mse":
        g = 2.0 * (o - tt) / m
        if spec.output_activation == "sigmoid":
            g = g * o * (1 - o)
    else:
        g = (o - tt) / m
    g = g.astype(out.dtype, copy=False)

    gw = [None] * spec.n_layers
    gb = [None] * spec.n_layers
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(spec.n_layers - 1, -1, -1):
            a = acts[i]
            gb[i] = g.sum(axis=(0, 2))
            gw_i = np.einsum("nop,nip->oi", g, a, optimize=True)
            gw[i] = gw_i.reshape(params.weights[i].shape)
            if i == 0:
                break
            w = params.weights[i][:, :, 0, 0]
            g = np.matmul(w.T, g) * (zs[i - 1] > 0)
    if not all(np.isfinite(t).all() for t in gw + gb):
        # the loss overflowed in the backward pass; blame the worst sample
        raise NonFiniteLoss("non-finite gradient", int(np.argmax(per)))
    return loss, EmulatorParams(spec, gw, gb)


def input_gradient(params, inputs, out_grad):
    """Vector-Jacobian product of :func:`forward` with respect to its input."""
    spec = params.spec
    out, (shape, acts, zs) = _forward(params, inputs)
    n = out.shape[0]
    g = np.asarray(out_grad, dtype=out.dtype).reshape(n, spec.out_channels, -1)
    if spec.output_activation == "sigmoid":
        o = out.reshape(g.shape)
        g = g * o * (1 - o)
    for i in range(spec.n_layers - 1, 0, -1):
        g = np.matmul(params.weights[i][:, :, 0, 0].T, g) * (zs[i - 1] > 0)
    w0 = params.weights[0].reshape(spec.hidden_channels, -1)
    return col2im(np.matmul(w0.T, g), shape)


# --- training ---------------------------------------------------------------

class _Optimizer:
    def __init__(self, config, params):
        self.c = config
        self.t = 0
        self.m = [np.zeros_like(p) for p in params.tensors()]
        self.v = [np.zeros_like(p) for p in params.tensors()]

    def update(self, params, grad):
        c = self.c
        self.t += 1
        new = []
        for k, (p, g) in enumerate(zip(params.tensors(), grad.tensors())):
            if c.optimizer == "sgd":
                step = c.learning_rate * g
            elif c.optimizer == "momentum":
                self.m[k] = c.momentum * self.m[k] + g
                step = c.learning_rate * self.m[k]
            else:
                self.m[k] = c.beta1 * self.m[k] + (1 - c.beta1) * g
                self.v[k] = c.beta2 * self.v[k] + (1 - c.beta2) * g * g
                mh = self.m[k] / (1 - c.beta1 ** self.t)
                vh = self.v[k] / (1 - c.beta2 ** self.t)
                step = c.learning_rate * mh / (np.sqrt(vh) + c.eps)
            new.append((p - step).astype(p.dtype))
        return EmulatorParams(params.spec, new[0::2], new[1::2])


def _training_arrays(dataset, targets):
    if targets is None:
        return dataset.inputs, dataset.targets
    return np.asarray(dataset), np.asarray(targets)


def train(dataset, spec, config, targets=None, init=None, callback=None):
    """Minibatch training; returns ``(params, per-epoch mean loss)``.

    ``dataset`` is a :class:`~dunes.frames.TileSet`, or an input array with
    ``targets`` given separately.  Each epoch visits samples in an order drawn
    from one generator seeded with ``config.seed`` (initial weights use the
    same seed through :func:`init_params` unless ``init`` is supplied).  The
    recorded epoch loss is the sample-weighted mean of the minibatch losses
    seen during that epoch.  A non-finite loss aborts with
    :class:`NonFiniteLoss` carrying the dataset index and the history so far.
    """
    x, y = _training_arrays(dataset, targets)
    n = x.shape[0]
    if n == 0:
        raise ConfigError("cannot train on an empty dataset")
    params = init if init is not None else init_params(spec, config.seed)
    if params.spec != spec:
        raise ShapeError("initial params were built for a different spec", spec, params.spec)
    rng = Xorshift(config.seed ^ 0x5A5A5A5A)
    opt = _Optimizer(config, params)
    history = []
    bs = int(config.batch_size)
    for epoch in range(int(config.epochs)):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            try:
                loss, grad = loss_and_gradient(params, x[idx], y[idx], config)
            except NonFiniteLoss as exc:
                raise NonFiniteLoss(
                    f"non-finite loss or gradient in epoch {epoch} at dataset sample "
                    f"{int(idx[exc.sample_index])}", int(idx[exc.sample_index]), history) from None
            total += loss * len(idx)
            try:
                params = opt.update(params, grad)
            except ValueError:
                i = int(idx[0])
                raise NonFiniteLoss(f"parameters became non-finite in epoch {epoch} "
                                    f"(batch starting at dataset sample {i})", i, history) from None
        history.append(total / n)
        if callback is not None:
            callback(epoch, history[-1], params)
    return params, history


# --- rollout ----------------------------------------------------------------

def rollout(params, initial, n_steps, cell_size=1.0, frame_interval_days=1.0, scale=1.0):
    """Feed predictions back autoregressively and return the ``n_steps`` new frames.

    ``initial`` holds the history window ``(in_channels, rows, cols)``,
    oldest first.  Output channel 0 becomes the newest frame and the oldest
    one drops out.  With ``scale`` the network sees ``frames / scale`` and its
    outputs are multiplied back, for models trained on normalised heights.
    """
    if n_steps < 1:
        raise ConfigError(f"n_steps must be >= 1 (got {n_steps})")
    spec = params.spec
    win = _as_batch(np.asarray(initial) / scale, spec, params.dtype)[0].copy()
    out = np.empty((n_steps,) + win.shape[1:], dtype=np.float32)
    for k in range(n_steps):
        nxt = forward(params, win[None])[0, 0]
        if not np.isfinite(nxt).all():
            raise FloatingPointError(f"rollout produced non-finite values at step {k + 1}")
        out[k] = nxt * scale
        win = np.concatenate([win[1:], nxt[None]]) if spec.in_channels > 1 else nxt[None]
    manifest = {"generator": "cnn-emulator", "n_frames": str(n_steps),
                "height_scale": repr(float(scale))}
    return FrameSeries(out, cell_size, frame_interval_days, manifest)


# --- exact Game of Life -------------------------------------------------------

def life_exact_params():
    """Weights that make :func:`forward` compute one B3/S23 Life step exactly.

    The 3x3 layer forms ``s = 2 * neighbours + centre`` in four hidden
    channels, offset by biases -4, -5, -7, -8 and rectified.  A cell lives
    next step iff ``s`` is 5 (alive, two neighbours), 6 (dead, three) or 7
    (alive, three): that is ``4 < s < 8`` over the integers.  The 1x1 output
    layer takes

        relu(s - 4) - relu(s - 5) - relu(s - 7) + relu(s - 8)

    which is 0 for ``s <= 4``, 1 for ``5 <= s <= 7`` and 0 for ``s >= 8``.
    Every intermediate value is a small integer, so float arithmetic is exact.
    """
    spec = EmulatorSpec(in_channels=1, hidden_channels=4, n_pointwise_layers=1,
                        out_channels=1, output_activation="identity")
    k = np.full((3, 3), 2.0, dtype=np.float32)
    k[1, 1] = 1.0
    w0 = np.broadcast_to(k, (4, 1, 3, 3)).copy()
    b0 = np.array([-4, -5, -7, -8], dtype=np.float32)
    w1 = np.array([1, -1, -1, 1], dtype=np.float32).reshape(1, 4, 1, 1)
    b1 = np.zeros(1, dtype=np.float32)
    return EmulatorParams(spec, [w0, w1], [b0, b1])


def life_training_defaults():
    """Spec and config that learn B3/S23 from random boards.

    Sigmoid output with cross-entropy: ``1e4`` random 16x16 boards (live
    fractions spread over 0.1-0.9) reach full held-out accuracy within two
    epochs.
    """
    spec = EmulatorSpec(in_channels=1, hidden_channels=16, n_pointwise_layers=2,
                        out_channels=1, output_activation="sigmoid")
    config = TrainConfig(learning_rate=0.01, batch_size=32, epochs=2, optimizer="adam",
                         loss="bce", seed=0)
    return spec, config
