"""Speech encoder: conv subsampling -> 4 bidirectional GRU layers ->
attention pooling -> projection onto the target embedding space.

The convolution and the GRU recurrence are registered on the autograd tape
as fused operations with hand-derived adjoints (a per-timestep composition
of primitive ops would dominate runtime); their gradients are validated
against finite differences in the test suite. The convolution has no
nonlinearity and acts purely as a learned temporal downsampler. The final
encoding is L2-normalized, so cosine similarity against unit targets
reduces to a dot product.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from . import autograd as ag
from .autograd import Tensor, apply_op


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int = 39
    conv_channels: int = 64
    conv_kernel: int = 6
    conv_stride: int = 2
    gru_hidden: int = 256  # per direction
    gru_layers: int = 4
    embed_dim: int = 768
    attention_dim: int = 128
    init_seed: int = 0


def _glorot(rng, shape):
    fan_in, fan_out = shape[0] if len(shape) > 1 else 1, shape[-1]
    if len(shape) == 3:  # conv kernel (K, D, C)
        fan_in = shape[0] * shape[1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def conv1d(x, w, b, stride):
    """Strided 1-D convolution over time, no padding: (T, D) -> (T', C)."""
    xv, wv, bv = x.values, w.values, b.values
    t, d = xv.shape
    k, dk, c = wv.shape
    if d != dk:
        raise ag.ShapeMismatchError(f"conv1d: input dim {xv.shape} vs kernel {wv.shape}")
    if t < k:
        raise ag.ShapeMismatchError(f"conv1d: {t} frames shorter than kernel {k}")
    t_out = (t - k) // stride + 1
    idx = np.arange(k)[None, :] + stride * np.arange(t_out)[:, None]
    frames = xv[idx].reshape(t_out, k * d)
    wmat = wv.reshape(k * d, c)
    out = frames @ wmat + bv

    def backward(g):
        gw = (frames.T @ g).reshape(k, d, c)
        gb = g.sum(axis=0)
        gframes = (g @ wmat.T).reshape(t_out, k, d)
        gx = np.zeros_like(xv)
        np.add.at(gx, idx, gframes)
        return gx, gw, gb

    return apply_op("conv1d", out, (x, w, b), backward)


def gru_sequence(x, wz, wr, wh, uz, ur, uh, bz, br, bh):
    """Unidirectional GRU over a (T, D) sequence, h_0 = 0, returning (T, H).

    Cell: z = sig(W_z x + U_z h + b_z), r = sig(W_r x + U_r h + b_r),
    hcand = tanh(W_h x + U_h (r*h) + b_h), h' = (1-z)*h + z*hcand.
    Backward is classic BPTT with stored per-step gate activations.
    """
    xv = x.values
    wzv, wrv, whv = wz.values, wr.values, wh.values
    uzv, urv, uhv = uz.values, ur.values, uh.values
    t_len, _ = xv.shape
    h_dim = wzv.shape[1]

    ax_z = xv @ wzv + bz.values
    ax_r = xv @ wrv + br.values
    ax_h = xv @ whv + bh.values

    h = np.zeros(h_dim, dtype=xv.dtype)
    h_prev = np.empty((t_len, h_dim), dtype=xv.dtype)
    zs = np.empty_like(h_prev)
    rs = np.empty_like(h_prev)
    hcands = np.empty_like(h_prev)
    outs = np.empty_like(h_prev)
    for t in range(t_len):
        h_prev[t] = h
        z = 1.0 / (1.0 + np.exp(-(ax_z[t] + h @ uzv)))
        r = 1.0 / (1.0 + np.exp(-(ax_r[t] + h @ urv)))
        hcand = np.tanh(ax_h[t] + (r * h) @ uhv)
        h = (1.0 - z) * h + z * hcand
        zs[t], rs[t], hcands[t] = z, r, hcand
        outs[t] = h

    def backward(g):
        da_z = np.empty_like(h_prev)
        da_r = np.empty_like(h_prev)
        da_h = np.empty_like(h_prev)
        carry = np.zeros(h_dim, dtype=xv.dtype)
        for t in range(t_len - 1, -1, -1):
            dh = g[t] + carry
            z, r, hcand, hp = zs[t], rs[t], hcands[t], h_prev[t]
            dz = dh * (hcand - hp)
            dhc = dh * z
            dhp = dh * (1.0 - z)
            dah = dhc * (1.0 - hcand * hcand)
            drh = dah @ uhv.T
            dr = drh * hp
            dhp = dhp + drh * r
            daz = dz * z * (1.0 - z)
            dar = dr * r * (1.0 - r)
            dhp = dhp + daz @ uzv.T + dar @ urv.T
            da_z[t], da_r[t], da_h[t] = daz, dar, dah
            carry = dhp
        gx = da_z @ wzv.T + da_r @ wrv.T + da_h @ whv.T
        rh = rs * h_prev
        return (
            gx,
            xv.T @ da_z, xv.T @ da_r, xv.T @ da_h,
            h_prev.T @ da_z, h_prev.T @ da_r, rh.T @ da_h,
            da_z.sum(axis=0), da_r.sum(axis=0), da_h.sum(axis=0),
        )

    return apply_op("gru", outs, (x, wz, wr, wh, uz, ur, uh, bz, br, bh), backward)


class SpeechEncoder:
    """Parameter collection plus the forward pass built on the autograd tape."""

    def __init__(self, config: EncoderConfig, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        cfg = config
        rng = np.random.default_rng(cfg.init_seed)

        def param(name, shape, zero=False):
            values = np.zeros(shape) if zero else _glorot(rng, shape)
            self.params[name] = Tensor(values.astype(self.dtype), requires_grad=True)

        param("conv.w", (cfg.conv_kernel, cfg.input_dim, cfg.conv_channels))
        param("conv.b", (cfg.conv_channels,), zero=True)
        in_dim = cfg.conv_channels
        for layer in range(1, cfg.gru_layers + 1):
            for direction in ("fwd", "bwd"):
                prefix = f"gru{layer}.{direction}"
                for gate in ("z", "r", "h"):
                    param(f"{prefix}.W{gate}", (in_dim, cfg.gru_hidden))
                    param(f"{prefix}.U{gate}", (cfg.gru_hidden, cfg.gru_hidden))
                    param(f"{prefix}.b{gate}", (cfg.gru_hidden,), zero=True)
            in_dim = 2 * cfg.gru_hidden
        param("att.W", (2 * cfg.gru_hidden, cfg.attention_dim))
        param("att.u", (cfg.attention_dim,))
        param("proj.W", (2 * cfg.gru_hidden, cfg.embed_dim))
        param("proj.b", (cfg.embed_dim,), zero=True)

    def parameter_count(self) -> int:
        return sum(p.values.size for p in self.params.values())

    @staticmethod
    def expected_parameter_count(cfg: EncoderConfig) -> int:
        """Closed-form parameter count for a given configuration."""
        h, two_h = cfg.gru_hidden, 2 * cfg.gru_hidden
        total = cfg.conv_kernel * cfg.input_dim * cfg.conv_channels + cfg.conv_channels
        in_dim = cfg.conv_channels
        for _ in range(cfg.gru_layers):
            total += 2 * 3 * (in_dim * h + h * h + h)
            in_dim = two_h
        total += two_h * cfg.attention_dim + cfg.attention_dim
        total += two_h * cfg.embed_dim + cfg.embed_dim
        return total

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def conv_subsample(self, x: Tensor) -> Tensor:
        return conv1d(x, self.params["conv.w"], self.params["conv.b"], self.config.conv_stride)

    def bigru_stack(self, x: Tensor) -> Tensor:
        out = x
        for layer in range(1, self.config.gru_layers + 1):
            halves = []
            for direction in ("fwd", "bwd"):
                p = self.params
                prefix = f"gru{layer}.{direction}"
                seq = out if direction == "fwd" else out[::-1]
                h = gru_sequence(
                    seq,
                    p[f"{prefix}.Wz"], p[f"{prefix}.Wr"], p[f"{prefix}.Wh"],
                    p[f"{prefix}.Uz"], p[f"{prefix}.Ur"], p[f"{prefix}.Uh"],
                    p[f"{prefix}.bz"], p[f"{prefix}.br"], p[f"{prefix}.bh"],
                )
                halves.append(h if direction == "fwd" else h[::-1])
            out = ag.concat(halves, axis=1)
        return out

    def attention_pool(self, h: Tensor):
        """Learned-query attention over time; returns (pooled, weights)."""
        scores = ag.matmul(ag.tanh(ag.matmul(h, self.params["att.W"])), self.params["att.u"])
        alpha = ag.softmax(scores, axis=0)
        pooled = ag.sum_(ag.mul(ag.reshape(alpha, (-1, 1)), h), axis=0)
        return pooled, alpha

    def encode(self, features) -> Tensor:
        """Encode one utterance's T x D feature matrix to a unit vector."""
        frames = getattr(features, "frames", features)
        if isinstance(frames, Tensor):
            x = frames
        else:
            x = Tensor(np.asarray(frames, dtype=self.dtype))
        if x.values.ndim != 2 or x.values.shape[1] != self.config.input_dim:
            raise ag.ShapeMismatchError(
                f"encode: features {x.values.shape} do not match input_dim "
                f"({self.config.input_dim},)"
            )
        pooled, _ = self.attention_pool(self.bigru_stack(self.conv_subsample(x)))
        projected = ag.add(ag.matmul(pooled, self.params["proj.W"]), self.params["proj.b"])
        return ag.l2_normalize(projected, axis=-1)

    def encode_values(self, features) -> np.ndarray:
        """Tape-free encoding for evaluation."""
        with ag.no_grad():
            return self.encode(features).values


# checkpoint layout (little-endian): magic "SGCK", u32 version,
# u32 config-JSON length + bytes, u32 n_params, per parameter:
# u16 name length, name, u32 rank, u32 dims..., float32 data;
# then u64 training-step counter, u32 optimizer blob length + blob
_MAGIC = b"SGCK"
_VERSION = 1


def save_checkpoint(encoder: SpeechEncoder, path, step=0, optimizer_blob=b""):
    cfg_json = json.dumps(asdict(encoder.config), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<I", len(cfg_json)))
        fh.write(cfg_json)
        fh.write(struct.pack("<I", len(encoder.params)))
        for name, p in encoder.params.items():
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            dims = p.values.shape
            fh.write(struct.pack(f"<I{len(dims)}I", len(dims), *dims))
            fh.write(np.ascontiguousarray(p.values, dtype="<f4").tobytes())
        fh.write(struct.pack("<Q", step))
        fh.write(struct.pack("<I", len(optimizer_blob)))
        fh.write(optimizer_blob)


def load_checkpoint(path, dtype=np.float32):
    """Returns (encoder, step, optimizer_blob)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise CheckpointError(f"{path}: bad checkpoint magic")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (cfg_len,) = struct.unpack_from("<I", blob, 8)
    offset = 12
    cfg = EncoderConfig(**json.loads(blob[offset : offset + cfg_len]))
    offset += cfg_len
    (n_params,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    encoder = SpeechEncoder(cfg, dtype=dtype)
    try:
        for _ in range(n_params):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            dims = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += 4 * rank
            size = int(np.prod(dims)) if dims else 1
            values = np.frombuffer(blob, dtype="<f4", count=size, offset=offset)
            offset += 4 * size
            if name not in encoder.params or encoder.params[name].values.shape != tuple(dims):
                raise CheckpointError(f"{path}: unexpected parameter {name} {dims}")
            encoder.params[name] = Tensor(
                values.reshape(dims).astype(dtype), requires_grad=True
            )
        (step,) = struct.unpack_from("<Q", blob, offset)
        offset += 8
        (blob_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        optimizer_blob = blob[offset : offset + blob_len]
        if len(optimizer_blob) != blob_len:
            raise CheckpointError(f"{path}: truncated checkpoint")
    except CheckpointError:
        raise
    except (struct.error, ValueError):
        raise CheckpointError(f"{path}: truncated checkpoint") from None
    return encoder, step, optimizer_blob
