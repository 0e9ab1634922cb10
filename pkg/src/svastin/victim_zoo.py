"""Synthetic motion-classification videos and a small trainable 3D-CNN victim.

Clips are random Gaussian blobs on a flat background, animated by one of eight
motions: translate up/down/left/right, rotate cw/ccw, scale grow/shrink. Class
identity lives purely in the direction of change: every clip randomises its
initial offset, angle and log-scale, frames are rendered analytically (no
resampling), and translation wraps around the canvas, so a single frame is
uninformative about the class and temporal modelling is required.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .checkpoint import load_module_checkpoint, save_module_checkpoint

MOTION_CLASSES = (
    "translate_up",
    "translate_down",
    "translate_left",
    "translate_right",
    "rotate_cw",
    "rotate_ccw",
    "scale_grow",
    "scale_shrink",
)

_LOG_SCALE_ENVELOPE = 0.25  # blob log-scale stays within +/- this over a clip


@dataclass
class SyntheticVideoSpec:
    num_classes: int = 8
    clip_shape: tuple = (3, 8, 32, 32)  # (C, T, W, H)
    clips_per_class: int = 20
    noise_level: float = 0.02
    seed: int = 0
    velocity: int = 2  # px/frame for translate classes
    spin: float = 0.18  # rad/frame for rotate classes
    zoom_rate: float = 0.045  # log-scale/frame for scale classes

    def __post_init__(self):
        c, t, w, h = self.clip_shape
        if not 2 <= self.num_classes <= len(MOTION_CLASSES):
            raise ValueError(f"num_classes must be in [2, {len(MOTION_CLASSES)}]")
        if c < 1 or t < 2 or w < 16 or h < 16:
            raise ValueError(f"clip_shape {self.clip_shape} too small for visible motion")
        if self.velocity < 1 or self.velocity * (t - 1) > w:
            raise ValueError("translate motion would lap the canvas; reduce velocity or T")
        if self.zoom_rate * (t - 1) >= 2 * _LOG_SCALE_ENVELOPE:
            raise ValueError("zoom motion exceeds the blob scale envelope")
        if self.clips_per_class < 1:
            raise ValueError("clips_per_class must be >= 1")


@dataclass
class VideoDataset:
    videos: torch.Tensor  # (n, C, T, W, H) in [0, 1]
    labels: torch.Tensor  # (n,) int64
    train_indices: list
    val_indices: list
    spec: SyntheticVideoSpec
    class_names: tuple

    def __len__(self):
        return len(self.labels)


def _wrapped_sq_dist(qx, qy, px, py, w, h):
    dx = np.mod(qx - px + w / 2.0, w) - w / 2.0
    dy = np.mod(qy - py + h / 2.0, h) - h / 2.0
    return dx * dx + dy * dy


def _render_clip(rng: np.random.Generator, spec: SyntheticVideoSpec, label: int) -> np.ndarray:
    c, t, w, h = spec.clip_shape
    motion = MOTION_CLASSES[label]

    n_blobs = int(rng.integers(3, 7))
    bx = rng.uniform(0, w, n_blobs)
    by = rng.uniform(0, h, n_blobs)
    sigma = rng.uniform(2.5, 5.5, n_blobs)
    amps = rng.uniform(0.2, 0.9, (n_blobs, c))
    background = rng.uniform(0.05, 0.35, c)

    # per-clip random initial state; the class only fixes which component drifts
    offset0 = rng.uniform(0, (w, h))
    angle0 = rng.uniform(0, 2 * math.pi)
    d_offset = np.zeros(2)
    d_angle = 0.0
    d_log_scale = 0.0
    if motion == "translate_up":
        d_offset = np.array([0.0, -float(spec.velocity)])
    elif motion == "translate_down":
        d_offset = np.array([0.0, float(spec.velocity)])
    elif motion == "translate_left":
        d_offset = np.array([-float(spec.velocity), 0.0])
    elif motion == "translate_right":
        d_offset = np.array([float(spec.velocity), 0.0])
    elif motion == "rotate_cw":
        d_angle = -spec.spin
    elif motion == "rotate_ccw":
        d_angle = spec.spin
    elif motion == "scale_grow":
        d_log_scale = spec.zoom_rate
    elif motion == "scale_shrink":
        d_log_scale = -spec.zoom_rate
    drift = d_log_scale * (t - 1)
    lo = -_LOG_SCALE_ENVELOPE - min(drift, 0.0)
    hi = _LOG_SCALE_ENVELOPE - max(drift, 0.0)
    log_scale0 = rng.uniform(lo, hi)

    qx, qy = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float), indexing="ij")
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    clip = np.empty((c, t, w, h))
    for frame in range(t):
        angle = angle0 + frame * d_angle
        scale = math.exp(log_scale0 + frame * d_log_scale)
        ox, oy = offset0 + frame * d_offset
        cos_a, sin_a = math.cos(angle), math.sin(angle)
        rel_x, rel_y = bx - cx, by - cy
        px = cx + scale * (cos_a * rel_x - sin_a * rel_y) + ox
        py = cy + scale * (sin_a * rel_x + cos_a * rel_y) + oy
        img = np.broadcast_to(background[:, None, None], (c, w, h)).copy()
        for i in range(n_blobs):
            d2 = _wrapped_sq_dist(qx, qy, px[i], py[i], w, h)
            bump = np.exp(-d2 / (2.0 * (scale * sigma[i]) ** 2))
            img += amps[i][:, None, None] * bump[None]
        clip[:, frame] = img
    if spec.noise_level > 0:
        clip = clip + spec.noise_level * rng.standard_normal(clip.shape)
    return np.clip(clip, 0.0, 1.0)


def generate_dataset(spec: SyntheticVideoSpec) -> VideoDataset:
    """Render the full dataset; bit-identical for a fixed spec (seed included)."""
    rng = np.random.default_rng(spec.seed)
    videos, labels = [], []
    for label in range(spec.num_classes):
        for _ in range(spec.clips_per_class):
            videos.append(_render_clip(rng, spec, label))
            labels.append(label)
    videos = torch.from_numpy(np.stack(videos)).float()
    labels = torch.tensor(labels, dtype=torch.int64)

    # class-balanced 80/20 split, order fixed by the same seeded stream
    train_idx, val_idx = [], []
    for label in range(spec.num_classes):
        members = list(range(label * spec.clips_per_class, (label + 1) * spec.clips_per_class))
        perm = rng.permutation(len(members))
        cut = max(1, int(round(0.8 * len(members))))
        train_idx.extend(members[i] for i in perm[:cut])
        val_idx.extend(members[i] for i in perm[cut:])
    return VideoDataset(
        videos=videos,
        labels=labels,
        train_indices=sorted(train_idx),
        val_indices=sorted(val_idx),
        spec=spec,
        class_names=MOTION_CLASSES[: spec.num_classes],
    )


def framewise_dataset(ds: VideoDataset) -> VideoDataset:
    """Explode clips into single-frame (T=1) clips: the temporal-leak control."""
    n, c, t, w, h = ds.videos.shape
    frames = ds.videos.permute(0, 2, 1, 3, 4).reshape(n * t, c, 1, w, h)
    labels = ds.labels.repeat_interleave(t)
    expand = lambda idx: [i * t + k for i in idx for k in range(t)]
    return VideoDataset(
        videos=frames,
        labels=labels,
        train_indices=expand(ds.train_indices),
        val_indices=expand(ds.val_indices),
        spec=ds.spec,
        class_names=ds.class_names,
    )


class MotionCnn3d(nn.Module):
    """Four 3D-conv blocks, a position-preserving pooled head, linear classifier.

    Pooling is spatial-only so the net accepts any T >= 1 (single frames
    included); temporal context comes from the depth-3 conv kernels. The head
    pools to a 4x4 spatial grid rather than a single cell: telling rotation
    direction apart needs to know WHERE local motion points, which a global
    average would erase.
    """

    def __init__(self, num_classes: int, in_channels: int = 3, width: int = 16,
                 embed_dim: int = 128):
        super().__init__()
        w = width
        chans = [in_channels, w, 2 * w, 4 * w, 4 * w]
        blocks = []
        for i in range(4):
            blocks += [
                nn.Conv3d(chans[i], chans[i + 1], 3, padding=1),
                nn.BatchNorm3d(chans[i + 1]),
                nn.ReLU(inplace=True),
            ]
            if i < 3:
                blocks.append(nn.MaxPool3d((1, 2, 2)))
        self.body = nn.Sequential(*blocks)
        self.pool = nn.AdaptiveAvgPool3d((1, 4, 4))
        self.embedder = nn.Sequential(
            nn.Linear(chans[-1] * 16, embed_dim),
            nn.ReLU(inplace=True),
        )
        self.head = nn.Linear(embed_dim, num_classes)
        self.feature_dim = embed_dim

    def embed(self, x):
        z = self.pool(self.body(x)).flatten(start_dim=1)
        return self.embedder(z)

    def forward(self, x):
        return self.head(self.embed(x))


class TorchClassifier:
    """Victim handle over an eval-mode torch module; accepts (C, T, W, H) videos."""

    def __init__(self, model: nn.Module, num_classes: int, differentiable: bool = True,
                 val_accuracy: float = float("nan"), meta: dict | None = None):
        self.model = model.eval()
        self.num_classes = num_classes
        self.differentiable = differentiable
        self.val_accuracy = val_accuracy
        self.meta = meta or {}

    def logits(self, video: torch.Tensor) -> torch.Tensor:
        return self.model(video.unsqueeze(0)).squeeze(0)

    def features(self, video: torch.Tensor) -> torch.Tensor:
        return self.model.embed(video.unsqueeze(0)).squeeze(0)

    def predict(self, video: torch.Tensor) -> int:
        with torch.no_grad():
            return int(self.logits(video).argmax())

    def confidence(self, video: torch.Tensor, label: int) -> float:
        with torch.no_grad():
            return float(torch.softmax(self.logits(video), dim=0)[label])


def _accuracy(model, videos, labels, indices, batch=32):
    hits = 0
    with torch.no_grad():
        for start in range(0, len(indices), batch):
            chunk = indices[start : start + batch]
            out = model(videos[chunk])
            hits += int((out.argmax(dim=1) == labels[chunk]).sum())
    return hits / max(1, len(indices))


def train_victim(dataset: VideoDataset, epochs: int = 30, lr: float = 1e-3, seed: int = 0,
                 width: int = 16, batch_size: int = 16,
                 resume: TorchClassifier | None = None) -> TorchClassifier:
    """Train the toy 3D-CNN with cross entropy; returns the best-val-accuracy handle."""
    num_classes = len(dataset.class_names)
    in_channels = dataset.videos.shape[1]
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        model = MotionCnn3d(num_classes, in_channels, width)
        if resume is not None:
            model.load_state_dict(resume.model.state_dict())
            width = resume.meta.get("width", width)
        opt = torch.optim.Adam(model.parameters(), lr=lr)
        loss_fn = nn.CrossEntropyLoss()
        videos, labels = dataset.videos, dataset.labels
        train_idx = torch.tensor(dataset.train_indices)
        best_acc, best_state = -1.0, None
        for _ in range(epochs):
            model.train()
            order = train_idx[torch.randperm(len(train_idx))]
            for start in range(0, len(order), batch_size):
                chunk = order[start : start + batch_size]
                loss = loss_fn(model(videos[chunk]), labels[chunk])
                if not torch.isfinite(loss):
                    raise RuntimeError("victim training diverged (non-finite loss)")
                opt.zero_grad()
                loss.backward()
                opt.step()
            model.eval()
            acc = _accuracy(model, videos, labels, dataset.val_indices)
            if acc > best_acc:
                best_acc = acc
                best_state = {k: v.clone() for k, v in model.state_dict().items()}
        if best_state is not None:
            model.load_state_dict(best_state)
    model.eval()
    meta = {"num_classes": num_classes, "in_channels": in_channels, "width": width,
            "val_accuracy": best_acc}
    return TorchClassifier(model, num_classes, val_accuracy=best_acc, meta=meta)


def save_victim(path, handle: TorchClassifier) -> None:
    save_module_checkpoint(path, handle.model, handle.meta)


def load_victim(path) -> TorchClassifier:
    state, meta = load_module_checkpoint(path)
    model = MotionCnn3d(meta["num_classes"], meta["in_channels"], meta["width"])
    model.load_state_dict(state)
    return TorchClassifier(model, meta["num_classes"], val_accuracy=meta["val_accuracy"],
                           meta=meta)


class ExternalClassifier:
    """Adapter exposing the victim contract over an arbitrary logits callable.

    ``mean``/``std`` declare the wrapped model's expected input preprocessing;
    the adapter applies them to [0, 1] videos before every call.
    """

    def __init__(self, logits_fn, num_classes: int, features_fn=None,
                 differentiable: bool = False, mean=None, std=None, probe_shape=None):
        self._logits_fn = logits_fn
        self._features_fn = features_fn
        self.num_classes = num_classes
        self.differentiable = differentiable
        self._mean = None if mean is None else torch.as_tensor(mean, dtype=torch.float32)
        self._std = None if std is None else torch.as_tensor(std, dtype=torch.float32)
        if probe_shape is not None:
            out = self.logits(torch.zeros(probe_shape))
            if tuple(out.shape) != (num_classes,):
                raise ValueError(
                    f"probe failed: logits shape {tuple(out.shape)} != ({num_classes},)"
                )

    def _preprocess(self, video):
        if self._mean is not None:
            video = video - self._mean[:, None, None, None]
        if self._std is not None:
            video = video / self._std[:, None, None, None]
        return video

    def logits(self, video: torch.Tensor) -> torch.Tensor:
        return self._logits_fn(self._preprocess(video))

    def features(self, video: torch.Tensor) -> torch.Tensor:
        if self._features_fn is None:
            raise NotImplementedError("wrapped model does not expose features")
        return self._features_fn(self._preprocess(video))

    def predict(self, video: torch.Tensor) -> int:
        with torch.no_grad():
            return int(self.logits(video).argmax())

    def confidence(self, video: torch.Tensor, label: int) -> float:
        with torch.no_grad():
            return float(torch.softmax(self.logits(video), dim=0)[label])


def wrap_external(logits_fn, num_classes, **kwargs) -> ExternalClassifier:
    return ExternalClassifier(logits_fn, num_classes, **kwargs)


@dataclass
class SuiteItem:
    """One attack instance: clean source, guide of the target class, target label."""

    x_c: torch.Tensor
    x_g: torch.Tensor
    y_t: int
    source_class: int
    source_index: int
    guide_index: int


def build_suite(dataset: VideoDataset, handle, size: int, seed: int = 0) -> list:
    """Paper-style suite: correctly-classified sources cycling over classes,
    seeded target assignment (target != source class), one correctly-classified
    guide per target class."""
    rng = np.random.default_rng(seed)
    num_classes = len(dataset.class_names)
    correct = {k: [] for k in range(num_classes)}
    for idx in dataset.val_indices:
        label = int(dataset.labels[idx])
        if handle.predict(dataset.videos[idx]) == label:
            correct[label].append(idx)
    suite, skipped = [], []
    for k in range(size):
        cls = k % num_classes
        if not correct[cls]:
            skipped.append(cls)
            continue
        src = int(rng.choice(correct[cls]))
        y_t = int(rng.choice([c for c in range(num_classes) if c != cls]))
        guides = [g for g in correct[y_t] if g != src]
        if not guides:
            skipped.append(y_t)
            continue
        guide = int(rng.choice(guides))
        suite.append(
            SuiteItem(
                x_c=dataset.videos[src],
                x_g=dataset.videos[guide],
                y_t=y_t,
                source_class=cls,
                source_index=src,
                guide_index=guide,
            )
        )
    if skipped:
        import warnings

        warnings.warn(f"no correctly-classified representative for classes {sorted(set(skipped))}")
    return suite
