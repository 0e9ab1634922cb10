"""Invertible two-stream coupling network over wavelet coefficients.

The network wraps a stack of affine coupling blocks between a forward wavelet
transform and its inverse. Each block updates the clean-video stream from the
target stream (multiplicative gate plus shift), then updates the target stream
conditioned on the freshly updated clean stream; both steps invert in closed
form, so the whole map is exactly invertible. Subnets are densely connected
3D-conv stacks with a zero-initialised last layer, which makes a fresh network
act as a pure global scaling of both streams.
"""

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn

from .checkpoint import load_module_checkpoint, save_module_checkpoint
from .wavelet3d import dwt2d_forward, dwt2d_inverse, dwt3d_forward, dwt3d_inverse


class NumericOverflowError(RuntimeError):
    """A coupling block produced non-finite values."""


@dataclass
class StinConfig:
    """Hyperparameters of the coupling stack.

    ``alpha_scale`` bounds the multiplicative gate in ``[1, e^alpha_scale]``
    per block; small values keep a zero-initialised network close to the
    identity so the attack optimiser starts from a benign map. ``dims="2d"``
    switches to the framewise wavelet transform and depth-1 (spatially 2D)
    conv kernels for the dimensionality ablation.
    """

    num_blocks: int = 4
    subnet_hidden_channels: int = 8
    subnet_dense_layers: int = 5
    alpha_scale: float = 0.02
    kernel: tuple = (3, 3, 3)
    padding: tuple = (1, 1, 1)
    init_seed: int = 0
    dims: str = "3d"

    def __post_init__(self):
        if self.num_blocks < 1:
            raise ValueError("num_blocks must be >= 1")
        if self.alpha_scale <= 0:
            raise ValueError("alpha_scale must be positive")
        if tuple(self.kernel) != (3, 3, 3) or tuple(self.padding) != (1, 1, 1):
            raise ValueError("kernel/padding are fixed to (3,3,3)/(1,1,1)")
        if self.subnet_dense_layers < 2:
            raise ValueError("dense subnets need at least a hidden and a final layer")
        if self.dims not in ("3d", "2d"):
            raise ValueError(f"dims must be '3d' or '2d', got {self.dims!r}")

    @property
    def conv_kernel(self) -> tuple:
        return self.kernel if self.dims == "3d" else (1, 3, 3)

    @property
    def conv_padding(self) -> tuple:
        return self.padding if self.dims == "3d" else (0, 1, 1)


def scaled_sigmoid(u: torch.Tensor, scale: float) -> torch.Tensor:
    """Gate activation: elementwise ``scale * sigmoid(u)``, range ``(0, scale)``."""
    return scale * torch.sigmoid(u)


def affine_couple(w_c, w_t, clean_scale, clean_shift, target_scale, target_shift, gate_scale):
    """One coupling step: clean stream updated first, target stream sees the result."""
    w_c = w_c * torch.exp(scaled_sigmoid(clean_scale(w_t), gate_scale)) + clean_shift(w_t)
    w_t = w_t * torch.exp(scaled_sigmoid(target_scale(w_c), gate_scale)) + target_shift(w_c)
    return w_c, w_t


def affine_decouple(w_c, w_t, clean_scale, clean_shift, target_scale, target_shift, gate_scale):
    """Exact inverse of :func:`affine_couple` given the same subnets."""
    w_t = (w_t - target_shift(w_c)) * torch.exp(-scaled_sigmoid(target_scale(w_c), gate_scale))
    w_c = (w_c - clean_shift(w_t)) * torch.exp(-scaled_sigmoid(clean_scale(w_t), gate_scale))
    return w_c, w_t


class DenseSubnet3d(nn.Module):
    """Densely connected conv stack; every layer sees all previous feature maps.

    The final conv is zero-initialised so a fresh subnet outputs zeros.
    """

    def __init__(self, channels: int, cfg: StinConfig):
        super().__init__()
        hidden = cfg.subnet_hidden_channels
        self.convs = nn.ModuleList()
        for j in range(cfg.subnet_dense_layers - 1):
            self.convs.append(
                nn.Conv3d(channels + j * hidden, hidden, cfg.conv_kernel, padding=cfg.conv_padding)
            )
        self.final = nn.Conv3d(
            channels + (cfg.subnet_dense_layers - 1) * hidden,
            channels,
            cfg.conv_kernel,
            padding=cfg.conv_padding,
        )
        nn.init.zeros_(self.final.weight)
        nn.init.zeros_(self.final.bias)
        self.act = nn.LeakyReLU(0.2)

    def forward(self, x):
        ch = 0 if x.ndim == 4 else 1  # unbatched (C,T,W,H) vs batched input
        feats = [x]
        for conv in self.convs:
            feats.append(self.act(conv(torch.cat(feats, dim=ch))))
        return self.final(torch.cat(feats, dim=ch))


class CouplingBlock(nn.Module):
    """Invertible affine exchange between the clean and target coefficient streams."""

    def __init__(self, channels: int, cfg: StinConfig, index: int = 0):
        super().__init__()
        self.clean_scale = DenseSubnet3d(channels, cfg)
        self.clean_shift = DenseSubnet3d(channels, cfg)
        self.target_scale = DenseSubnet3d(channels, cfg)
        self.target_shift = DenseSubnet3d(channels, cfg)
        self.gate_scale = cfg.alpha_scale
        self.index = index

    def _nets(self):
        return self.clean_scale, self.clean_shift, self.target_scale, self.target_shift

    def _check(self, w_c, w_t):
        if not (torch.isfinite(w_c).all() and torch.isfinite(w_t).all()):
            raise NumericOverflowError(f"non-finite values in coupling block {self.index}")
        return w_c, w_t

    def forward(self, w_c, w_t):
        return self._check(*affine_couple(w_c, w_t, *self._nets(), self.gate_scale))

    def inverse(self, w_c, w_t):
        return self._check(*affine_decouple(w_c, w_t, *self._nets(), self.gate_scale))


class Stin(nn.Module):
    """Wavelet transform -> coupling blocks -> inverse transform, on both streams.

    ``forward`` maps a clean video and a target tensor (both ``(C, T, W, H)``)
    to the raw adversarial video and the residual video; ``inverse`` recovers
    the inputs exactly up to floating-point rounding. Construction is
    deterministic in ``cfg.init_seed``.
    """

    def __init__(self, video_channels: int, cfg: StinConfig):
        super().__init__()
        self.cfg = cfg
        self.video_channels = video_channels
        bands = 8 if cfg.dims == "3d" else 4
        coeff_channels = bands * video_channels
        with torch.random.fork_rng():
            torch.manual_seed(cfg.init_seed)
            self.blocks = nn.ModuleList(
                CouplingBlock(coeff_channels, cfg, index=i) for i in range(cfg.num_blocks)
            )

    def _analyze(self, x):
        return dwt3d_forward(x) if self.cfg.dims == "3d" else dwt2d_forward(x)

    def _synthesize(self, c):
        return dwt3d_inverse(c) if self.cfg.dims == "3d" else dwt2d_inverse(c)

    def forward(self, x_c: torch.Tensor, x_t: torch.Tensor):
        if x_c.shape != x_t.shape:
            raise ValueError(f"stream shapes differ: {tuple(x_c.shape)} vs {tuple(x_t.shape)}")
        w_c, w_t = self._analyze(x_c), self._analyze(x_t)
        for block in self.blocks:
            w_c, w_t = block(w_c, w_t)
        return self._synthesize(w_c), self._synthesize(w_t)

    def inverse(self, x_a: torch.Tensor, x_r: torch.Tensor):
        if x_a.shape != x_r.shape:
            raise ValueError(f"stream shapes differ: {tuple(x_a.shape)} vs {tuple(x_r.shape)}")
        w_c, w_t = self._analyze(x_a), self._analyze(x_r)
        for block in reversed(self.blocks):
            w_c, w_t = block.inverse(w_c, w_t)
        return self._synthesize(w_c), self._synthesize(w_t)


def param_count(net) -> int:
    """Number of learnable scalars in a module or an iterable of modules."""
    if isinstance(net, nn.Module):
        return sum(p.numel() for p in net.parameters() if p.requires_grad)
    return sum(param_count(m) for m in net)


def save_stin(path, stin: Stin) -> None:
    """Write a flat named-tensor checkpoint (little-endian float32 + JSON header)."""
    meta = {"video_channels": stin.video_channels, "config": asdict(stin.cfg)}
    save_module_checkpoint(path, stin, meta)


def load_stin(path) -> Stin:
    """Rebuild a network from :func:`save_stin` output."""
    state, meta = load_module_checkpoint(path)
    cfg = meta["config"]
    cfg["kernel"] = tuple(cfg["kernel"])
    cfg["padding"] = tuple(cfg["padding"])
    stin = Stin(meta["video_channels"], StinConfig(**cfg))
    stin.load_state_dict(state)
    return stin
