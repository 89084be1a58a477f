"""Minimal dense-network engine.

Hand-rolled forward/backward passes for the fixed encoder/decoder/classifier
stack, Xavier initialization, Adam with exponential learning-rate decay, an
analytic encoder-Jacobian Frobenius penalty, and a versioned binary model
container.  Everything is float64 numpy and deterministic for a fixed seed.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptModelError, ModelVersionError

ACTIVATIONS = ("relu", "sigmoid", "scaled_tanh_1_5", "linear")

REGIMES = ("proposed", "baseline1", "baseline2", "invalid_only")

# log arguments are clamped away from 0/1 to avoid infinities at saturation
LOG_EPS = 1e-12

MODEL_MAGIC = b"SILM"
MODEL_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError(f"layer dims must be >= 1, got {self.in_dim}->{self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class Layer:
    """Dense layer: y = act(x @ W.T + b), with W of shape (out_dim, in_dim)."""

    W: np.ndarray
    b: np.ndarray
    activation: str

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    def spec(self) -> LayerSpec:
        return LayerSpec(self.in_dim, self.out_dim, self.activation)


@dataclass
class ModelBundle:
    """Encoder/decoder/classifier parameter sets plus training-regime metadata.

    The classifier list may be empty for regimes that never use one.
    """

    encoder: list[Layer]
    decoder: list[Layer]
    classifier: list[Layer]
    latent_dim: int
    regime: str
    training_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.encoder[-1].out_dim != self.latent_dim:
            raise ValueError("encoder output dim must equal latent_dim")
        if self.decoder[0].in_dim != self.latent_dim:
            raise ValueError("decoder input dim must equal latent_dim")
        if self.decoder[-1].out_dim != self.encoder[0].in_dim:
            raise ValueError("decoder output dim must equal encoder input dim")
        if self.classifier and self.classifier[0].in_dim != self.latent_dim:
            raise ValueError("classifier input dim must equal latent_dim")

    @property
    def input_dim(self) -> int:
        return self.encoder[0].in_dim

    def parameters(self) -> list[np.ndarray]:
        """All parameter arrays in a fixed order (encoder, decoder, classifier; W then b)."""
        params = []
        for net in (self.encoder, self.decoder, self.classifier):
            for layer in net:
                params.append(layer.W)
                params.append(layer.b)
        return params


def standard_specs(input_dim: int = 100, latent_dim: int = 11):
    """The fixed production architecture: 100-512-256-128-64-11 ReLU encoder,
    mirrored decoder ending in 1.5*tanh, and a single sigmoid classifier unit."""
    widths = [input_dim, 512, 256, 128, 64, latent_dim]
    enc = [LayerSpec(widths[i], widths[i + 1], "relu") for i in range(5)]
    dec_widths = widths[::-1]
    dec = [
        LayerSpec(dec_widths[i], dec_widths[i + 1],
                  "scaled_tanh_1_5" if i == 4 else "relu")
        for i in range(5)
    ]
    cls = [LayerSpec(latent_dim, 1, "sigmoid")]
    return enc, dec, cls


def xavier_init(specs: list[LayerSpec], rng_seed: int) -> list[Layer]:
    """Xavier-uniform weights in +-sqrt(6/(in+out)); biases exactly zero."""
    rng = np.random.default_rng(rng_seed)
    layers = []
    for spec in specs:
        bound = math.sqrt(6.0 / (spec.in_dim + spec.out_dim))
        W = rng.uniform(-bound, bound, size=(spec.out_dim, spec.in_dim))
        b = np.zeros(spec.out_dim)
        layers.append(Layer(W, b, spec.activation))
    return layers


def build_bundle(regime: str, rng_seed: int, input_dim: int = 100,
                 latent_dim: int = 11) -> ModelBundle:
    """Freshly initialized production bundle.  The encoder and decoder draws
    are identical across regimes for the same seed; baseline1 simply skips
    the classifier."""
    enc_specs, dec_specs, cls_specs = standard_specs(input_dim, latent_dim)
    encoder = xavier_init(enc_specs, rng_seed)
    decoder = xavier_init(dec_specs, rng_seed + 1)
    classifier = [] if regime == "baseline1" else xavier_init(cls_specs, rng_seed + 2)
    return ModelBundle(encoder, decoder, classifier, latent_dim, regime)


# ---------------------------------------------------------------------------
# activations


def _act(a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(a, 0.0)
    if kind == "sigmoid":
        # clip the pre-activation so exp never overflows
        return 1.0 / (1.0 + np.exp(-np.clip(a, -500.0, 500.0)))
    if kind == "scaled_tanh_1_5":
        return 1.5 * np.tanh(a)
    if kind == "linear":
        return a
    raise ValueError(f"unknown activation {kind!r}")


def _act_deriv(a: np.ndarray, h: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (a > 0.0).astype(np.float64)
    if kind == "sigmoid":
        return h * (1.0 - h)
    if kind == "scaled_tanh_1_5":
        return 1.5 - h * h / 1.5
    if kind == "linear":
        return np.ones_like(a)
    raise ValueError(f"unknown activation {kind!r}")


# ---------------------------------------------------------------------------
# forward


def _chain_forward(layers: list[Layer], x: np.ndarray):
    """Returns (pre-activation list, post-activation list); acts[-1] is the output."""
    pres, acts = [], []
    h = x
    for layer in layers:
        a = h @ layer.W.T + layer.b
        h = _act(a, layer.activation)
        pres.append(a)
        acts.append(h)
    return pres, acts


def encode(bundle: ModelBundle, x: np.ndarray) -> np.ndarray:
    """Latent codes for x of shape (..., input_dim)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    _, acts = _chain_forward(bundle.encoder, x)
    return acts[-1]


def decode(bundle: ModelBundle, z: np.ndarray) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    _, acts = _chain_forward(bundle.decoder, z)
    return acts[-1]


def forward(bundle: ModelBundle, x: np.ndarray):
    """(z, x_hat, y_hat) for a single input or a batch.

    y_hat is None when the bundle carries no classifier.  Single-vector
    inputs yield single-vector outputs (y_hat a scalar).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    if xb.shape[1] != bundle.input_dim:
        raise ValueError(
            f"input dim {xb.shape[1]} does not match model input dim {bundle.input_dim}")
    z = encode(bundle, xb)
    x_hat = decode(bundle, z)
    y_hat = None
    if bundle.classifier:
        _, cls_acts = _chain_forward(bundle.classifier, z)
        y_hat = cls_acts[-1][:, 0]
    if single:
        return z[0], x_hat[0], (None if y_hat is None else float(y_hat[0]))
    return z, x_hat, y_hat


# ---------------------------------------------------------------------------
# losses (per-sample values; batch reduction is the mean)


def reconstruction_loss(x: np.ndarray, x_hat: np.ndarray) -> np.ndarray:
    """Summed squared error over the signal components, per sample."""
    d = np.atleast_2d(x) - np.atleast_2d(x_hat)
    return np.einsum("ij,ij->i", d, d)


def _clamped_log(p: np.ndarray) -> np.ndarray:
    return np.log(np.clip(p, LOG_EPS, 1.0 - LOG_EPS))


def classifier_term(y: np.ndarray, y_hat: np.ndarray, regime: str) -> np.ndarray:
    """Per-sample classifier loss contribution for the given training regime."""
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    y_hat = np.atleast_1d(np.asarray(y_hat, dtype=np.float64))
    if regime == "proposed":
        return -y * _clamped_log(y_hat)
    if regime == "baseline2":
        return -y * _clamped_log(y_hat) - (1.0 - y) * _clamped_log(1.0 - y_hat)
    if regime == "invalid_only":
        return -(1.0 - y) * _clamped_log(1.0 - y_hat)
    if regime == "baseline1":
        return np.zeros_like(y)
    raise ValueError(f"unknown regime {regime!r}")


def _classifier_preact_grad(y: np.ndarray, y_hat: np.ndarray, regime: str) -> np.ndarray:
    """d(classifier term)/d(pre-sigmoid activation), per sample."""
    if regime == "proposed":
        return y * (y_hat - 1.0)
    if regime == "baseline2":
        return y_hat - y
    if regime == "invalid_only":
        return (1.0 - y) * y_hat
    raise ValueError(f"regime {regime!r} has no classifier gradient")


# ---------------------------------------------------------------------------
# backward


def _chain_backward(layers, pres, acts, x0, grad_out):
    """Standard reverse pass.  Returns ([(dW, db)...], grad wrt x0)."""
    grads = [None] * len(layers)
    g = grad_out
    for k in range(len(layers) - 1, -1, -1):
        ga = g * _act_deriv(pres[k], acts[k], layers[k].activation)
        below = acts[k - 1] if k > 0 else x0
        grads[k] = (ga.T @ below, ga.sum(axis=0))
        g = ga @ layers[k].W
    return grads, g


def _jacobian_chain(encoder: list[Layer], masks: list[np.ndarray]):
    """Per-sample encoder Jacobians via masked weight products.

    masks[k] has shape (B, out_k) holding the ReLU derivative of layer k.
    Returns (J, M_list, C_list) where J is (B, l, n_x), M_list[k] is the
    top-down partial product (B, l, out_k) already multiplied by mask k, and
    C_list[k] = J @ R_k^T with R_k the Jacobian below layer k, shape (B, l, in_k).
    """
    n_layers = len(encoder)
    batch = masks[0].shape[0]
    l = encoder[-1].out_dim

    # top-down: T_k = product of masked weights above layer k (inclusive mask)
    m_list = [None] * n_layers
    t = np.broadcast_to(np.eye(l), (batch, l, l))
    for k in range(n_layers - 1, -1, -1):
        m = t * masks[k][:, None, :]
        m_list[k] = m
        t = m @ encoder[k].W  # (B, l, in_k)
    jac = t

    # bottom-up: C_k = J @ R_k^T
    c_list = [None] * n_layers
    c = jac
    for k in range(n_layers):
        c_list[k] = c
        if k + 1 < n_layers:
            c = (c @ encoder[k].W.T) * masks[k][:, None, :]
    return jac, m_list, c_list


def encoder_jacobian_frobenius_sq(bundle: ModelBundle, x: np.ndarray):
    """Exact squared Frobenius norm of dz/dx, per sample.

    Only defined for encoders whose activations are relu or linear (piecewise
    linear, so the Jacobian is an exact masked weight product).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    pres, _ = _chain_forward(bundle.encoder, xb)
    masks = []
    for layer, a in zip(bundle.encoder, pres):
        if layer.activation == "relu":
            masks.append((a > 0.0).astype(np.float64))
        elif layer.activation == "linear":
            masks.append(np.ones_like(a))
        else:
            raise ValueError(
                f"Jacobian penalty requires piecewise-linear activations, got {layer.activation!r}")
    jac, _, _ = _jacobian_chain(bundle.encoder, masks)
    out = np.einsum("bij,bij->b", jac, jac)
    return float(out[0]) if single else out


def backward(bundle: ModelBundle, x: np.ndarray, y: np.ndarray, loss_spec):
    """Gradients of the batch-mean loss for one of the four training regimes.

    loss_spec is the regime name, or ("baseline1", lambda) to set the
    contractive penalty weight.  Returns (grads, stats) where grads mirrors
    the bundle structure: {"encoder": [(dW, db), ...], "decoder": ...,
    "classifier": ...} and stats carries per-batch mean loss components.
    """
    if isinstance(loss_spec, tuple):
        regime, lam = loss_spec
    else:
        regime, lam = loss_spec, 1e-4
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}")

    xb = np.atleast_2d(np.asarray(x, dtype=np.float64))
    yb = np.atleast_1d(np.asarray(y, dtype=np.float64))
    batch = xb.shape[0]

    enc_pres, enc_acts = _chain_forward(bundle.encoder, xb)
    z = enc_acts[-1]
    dec_pres, dec_acts = _chain_forward(bundle.decoder, z)
    x_hat = dec_acts[-1]

    recon = reconstruction_loss(xb, x_hat)
    grad_xhat = (2.0 / batch) * (x_hat - xb)
    dec_grads, dz = _chain_backward(bundle.decoder, dec_pres, dec_acts, z, grad_xhat)

    cls_grads = []
    cls_vals = np.zeros(batch)
    if regime != "baseline1" and bundle.classifier:
        cls_pres, cls_acts = _chain_forward(bundle.classifier, z)
        y_hat = cls_acts[-1][:, 0]
        cls_vals = classifier_term(yb, y_hat, regime)
        ga = (_classifier_preact_grad(yb, y_hat, regime) / batch)[:, None]
        # single sigmoid layer: the pre-activation gradient is formed directly,
        # so walk only the layers below it (none) and accumulate dz
        layer = bundle.classifier[0]
        cls_grads = [(ga.T @ z, ga.sum(axis=0))]
        dz = dz + ga @ layer.W

    enc_grads, _ = _chain_backward(bundle.encoder, enc_pres, enc_acts, xb, dz)

    penalty = 0.0
    if regime == "baseline1":
        masks = [(a > 0.0).astype(np.float64) for a in enc_pres]
        jac, m_list, c_list = _jacobian_chain(bundle.encoder, masks)
        penalty = float(np.einsum("bij,bij->b", jac, jac).mean())
        scale = 2.0 * lam / batch
        for k in range(len(bundle.encoder)):
            m = m_list[k]
            c = c_list[k]
            # sum_b M_k[b]^T C_k[b] as one GEMM over the stacked (batch, latent) axis
            dw = scale * (m.reshape(-1, m.shape[2]).T @ c.reshape(-1, c.shape[2]))
            dW, db = enc_grads[k]
            enc_grads[k] = (dW + dw, db)

    total = recon.mean() + cls_vals.mean() + lam * penalty if regime == "baseline1" \
        else recon.mean() + cls_vals.mean()
    stats = {
        "mean_total_loss": float(total),
        "mean_recon_loss": float(recon.mean()),
        "mean_cls_loss": float(cls_vals.mean()),
    }
    return {"encoder": enc_grads, "decoder": dec_grads, "classifier": cls_grads}, stats


def loss_value(bundle: ModelBundle, x: np.ndarray, y: np.ndarray, loss_spec) -> float:
    """Batch-mean loss value (used by finite-difference checks)."""
    if isinstance(loss_spec, tuple):
        regime, lam = loss_spec
    else:
        regime, lam = loss_spec, 1e-4
    xb = np.atleast_2d(np.asarray(x, dtype=np.float64))
    yb = np.atleast_1d(np.asarray(y, dtype=np.float64))
    z, x_hat, y_hat = forward(bundle, xb)
    total = reconstruction_loss(xb, x_hat)
    if regime == "baseline1":
        total = total + lam * encoder_jacobian_frobenius_sq(bundle, xb)
    elif bundle.classifier:
        total = total + classifier_term(yb, y_hat, regime)
    return float(np.mean(total))


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[np.ndarray], beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params],
                   step=0, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(state: AdamState, params: list[np.ndarray],
              grads: list[np.ndarray], lr: float) -> AdamState:
    """In-place bias-corrected Adam update; returns the mutated state."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameter/gradient/state length mismatch")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


def flatten_grads(bundle: ModelBundle, grads: dict) -> list[np.ndarray]:
    """Gradient arrays in the same order as bundle.parameters()."""
    out = []
    for key, net in (("encoder", bundle.encoder), ("decoder", bundle.decoder),
                     ("classifier", bundle.classifier)):
        gs = grads[key]
        if not gs:
            gs = [(np.zeros_like(l.W), np.zeros_like(l.b)) for l in net]
        for dW, db in gs:
            out.append(dW)
            out.append(db)
    return out


def lr_schedule(epoch: int, lr0: float = 0.05, decay: float = 0.75) -> float:
    """Per-epoch exponential decay: lr0 * decay**epoch."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return lr0 * decay ** epoch


# ---------------------------------------------------------------------------
# serialization

_ACT_CODES = {name: i for i, name in enumerate(ACTIVATIONS)}
_ACT_NAMES = {i: name for name, i in _ACT_CODES.items()}
_REGIME_CODES = {name: i for i, name in enumerate(REGIMES)}
_REGIME_NAMES = {i: name for name, i in _REGIME_CODES.items()}


def save_model(bundle: ModelBundle, path) -> None:
    """Versioned binary container plus a sidecar JSON of training metadata."""
    path = Path(path)
    blob = bytearray()
    blob += MODEL_MAGIC
    blob += struct.pack("<III", MODEL_VERSION, _REGIME_CODES[bundle.regime],
                        bundle.latent_dim)
    nets = (bundle.encoder, bundle.decoder, bundle.classifier)
    blob += struct.pack("<III", *(len(n) for n in nets))
    payload = bytearray()
    for net in nets:
        for layer in net:
            blob += struct.pack("<III", layer.in_dim, layer.out_dim,
                                _ACT_CODES[layer.activation])
            payload += layer.W.astype("<f8").tobytes()
            payload += layer.b.astype("<f8").tobytes()
    path.write_bytes(bytes(blob) + bytes(payload))
    sidecar = path.with_suffix(path.suffix + ".meta.json")
    sidecar.write_text(json.dumps(bundle.training_meta, sort_keys=True, indent=2) + "\n")


def load_model(path) -> ModelBundle:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 4 or raw[:4] != MODEL_MAGIC:
        raise CorruptModelError(f"{path}: bad magic bytes")
    off = 4
    try:
        version, regime_code, latent_dim = struct.unpack_from("<III", raw, off)
    except struct.error as e:
        raise CorruptModelError(f"{path}: truncated header") from e
    if version != MODEL_VERSION:
        raise ModelVersionError(
            f"{path}: format version {version} not supported (expected {MODEL_VERSION})")
    off += 12
    try:
        counts = struct.unpack_from("<III", raw, off)
        off += 12
        specs = []
        for n in counts:
            net_specs = []
            for _ in range(n):
                in_dim, out_dim, act_code = struct.unpack_from("<III", raw, off)
                off += 12
                if act_code not in _ACT_NAMES:
                    raise CorruptModelError(f"{path}: unknown activation code {act_code}")
                net_specs.append((in_dim, out_dim, _ACT_NAMES[act_code]))
            specs.append(net_specs)
    except struct.error as e:
        raise CorruptModelError(f"{path}: truncated layer table") from e

    nets = []
    for net_specs in specs:
        layers = []
        for in_dim, out_dim, act in net_specs:
            n_w = in_dim * out_dim * 8
            if off + n_w + out_dim * 8 > len(raw):
                raise CorruptModelError(f"{path}: truncated parameter payload")
            W = np.frombuffer(raw, dtype="<f8", count=in_dim * out_dim,
                              offset=off).reshape(out_dim, in_dim).copy()
            off += n_w
            b = np.frombuffer(raw, dtype="<f8", count=out_dim, offset=off).copy()
            off += out_dim * 8
            layers.append(Layer(W, b, act))
        nets.append(layers)
    if off != len(raw):
        raise CorruptModelError(f"{path}: {len(raw) - off} trailing bytes")
    if regime_code not in _REGIME_NAMES:
        raise CorruptModelError(f"{path}: unknown regime code {regime_code}")

    sidecar = path.with_suffix(path.suffix + ".meta.json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return ModelBundle(nets[0], nets[1], nets[2], latent_dim,
                       _REGIME_NAMES[regime_code], meta)
