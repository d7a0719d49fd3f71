"""Sparse 3D convolutional network predicting per-Gaussian embeddings.

Gaussians are binned into voxels; each voxel carries a 10-dim input feature
(opacity, base color, six unique world-covariance entries) averaged over its
members. The network is a stack of sparse 3x3x3 convolutions with ReLU and a
final pointwise linear head. Convolutions gather only neighbors that exist in
the coordinate hash; absent neighbors contribute nothing.

Training minimizes 1 - cos(prediction, projected embedding) per observed
voxel with plain SGD + momentum. Everything runs in float64 with a fixed
update order, so a fixed seed reproduces weights bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .formats import read_checkpoint, write_checkpoint
from .scene import SH_C0, GaussianScene, SemanticField, covariances

OFFSETS = tuple((dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1))
CENTER_TAP = OFFSETS.index((0, 0, 0))
IN_FEATURES = 10
VOXEL_SIZE_DEFAULT = 0.05
NORM_FLOOR = 1e-8


@dataclass
class SparseGrid:
    """Voxelized scene: unique integer coords, per-voxel inputs, member map."""

    coords: np.ndarray        # (M,3) int64, unique, lexicographically sorted
    feats: np.ndarray         # (M,D) float64
    voxel_size: float
    gaussian_voxel: np.ndarray  # (N,) voxel index of each Gaussian
    _pairs: list | None = field(default=None, repr=False)

    @property
    def num_voxels(self) -> int:
        return self.coords.shape[0]

    def members(self, voxel: int) -> np.ndarray:
        return np.where(self.gaussian_voxel == voxel)[0]

    def neighbor_pairs(self):
        """Per kernel tap: (src, dst) voxel indices with coords[src] = coords[dst] + tap."""
        if self._pairs is None:
            lookup = {tuple(c): i for i, c in enumerate(self.coords)}
            pairs = []
            for off in OFFSETS:
                src, dst = [], []
                for i, c in enumerate(self.coords):
                    j = lookup.get((c[0] + off[0], c[1] + off[1], c[2] + off[2]))
                    if j is not None:
                        src.append(j)
                        dst.append(i)
                pairs.append((np.asarray(src, dtype=np.int64),
                              np.asarray(dst, dtype=np.int64)))
            self._pairs = pairs
        return self._pairs


def voxelize(scene: GaussianScene, voxel_size: float = VOXEL_SIZE_DEFAULT) -> SparseGrid:
    """Bin Gaussians into voxels of the given edge length.

    The voxel index is floor(position / voxel_size) per axis; the voxel input
    feature is the member mean of [opacity, degree-0 color (3), world-space
    covariance upper triangle (6)].
    """
    if voxel_size <= 0:
        raise ContractError(f"voxel_size must be positive, got {voxel_size}")
    n = len(scene)
    if n == 0:
        return SparseGrid(coords=np.zeros((0, 3), dtype=np.int64),
                          feats=np.zeros((0, IN_FEATURES)), voxel_size=voxel_size,
                          gaussian_voxel=np.zeros(0, dtype=np.int64))
    coords_all = np.floor(scene.positions.astype(np.float64) / voxel_size).astype(np.int64)
    coords, inverse = np.unique(coords_all, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)

    cov = covariances(scene)
    tri = np.stack([cov[:, 0, 0], cov[:, 0, 1], cov[:, 0, 2],
                    cov[:, 1, 1], cov[:, 1, 2], cov[:, 2, 2]], axis=1)
    base_color = SH_C0 * scene.sh[:, :, 0].astype(np.float64) + 0.5
    per_gauss = np.concatenate(
        [scene.opacities.astype(np.float64)[:, None], base_color, tri], axis=1)

    m = coords.shape[0]
    sums = np.zeros((m, IN_FEATURES), dtype=np.float64)
    np.add.at(sums, inverse, per_gauss)
    counts = np.bincount(inverse, minlength=m).astype(np.float64)
    feats = sums / counts[:, None]
    return SparseGrid(coords=coords, feats=feats, voxel_size=voxel_size,
                      gaussian_voxel=inverse)


class SparseConvNet:
    """Three sparse 3x3x3 conv layers (ReLU) plus a pointwise linear head."""

    def __init__(self, out_channels: int, in_features: int = IN_FEATURES,
                 hidden=(32, 64, 64), voxel_size: float = VOXEL_SIZE_DEFAULT,
                 seed: int = 0):
        self.in_features = in_features
        self.hidden = tuple(hidden)
        self.out_channels = out_channels
        self.voxel_size = voxel_size
        rng = np.random.default_rng(seed)
        self.conv_weights = []
        self.conv_biases = []
        cin = in_features
        for cout in self.hidden:
            bound = np.sqrt(6.0 / (len(OFFSETS) * cin))
            self.conv_weights.append(rng.uniform(-bound, bound, size=(len(OFFSETS), cin, cout)))
            self.conv_biases.append(np.zeros(cout))
            cin = cout
        bound = np.sqrt(6.0 / cin)
        self.head_weight = rng.uniform(-bound, bound, size=(cin, out_channels))
        self.head_bias = np.zeros(out_channels)

    # -- parameter plumbing -------------------------------------------------

    def parameters(self) -> list[np.ndarray]:
        params = []
        for w, b in zip(self.conv_weights, self.conv_biases):
            params += [w, b]
        params += [self.head_weight, self.head_bias]
        return params

    def zero_like_parameters(self) -> list[np.ndarray]:
        return [np.zeros_like(p) for p in self.parameters()]

    # -- forward / backward --------------------------------------------------

    def forward(self, grid: SparseGrid) -> np.ndarray:
        """Per-voxel embeddings (M, out_channels), rows in grid coordinate order."""
        out, _ = self._forward_cached(grid)
        return out

    def _forward_cached(self, grid: SparseGrid):
        if grid.feats.shape[1] != self.in_features:
            raise ContractError(
                f"grid has {grid.feats.shape[1]} input features, net expects {self.in_features}")
        pairs = grid.neighbor_pairs()
        h = grid.feats
        cache = []
        for w, b in zip(self.conv_weights, self.conv_biases):
            pre = np.tile(b, (grid.num_voxels, 1))
            for tap, (src, dst) in enumerate(pairs):
                if src.size:
                    pre[dst] += h[src] @ w[tap]
            cache.append((h, pre))
            h = np.maximum(pre, 0.0)
        out = h @ self.head_weight + self.head_bias
        cache.append(h)
        return out, cache

    def _backward(self, grid: SparseGrid, cache, dout: np.ndarray) -> list[np.ndarray]:
        """Gradients for all parameters, in parameters() order."""
        pairs = grid.neighbor_pairs()
        h_last = cache[-1]
        d_head_w = h_last.T @ dout
        d_head_b = dout.sum(axis=0)
        dh = dout @ self.head_weight.T
        conv_grads = []
        for layer in range(len(self.conv_weights) - 1, -1, -1):
            h_in, pre = cache[layer]
            dpre = dh * (pre > 0.0)
            w = self.conv_weights[layer]
            dw = np.zeros_like(w)
            db = dpre.sum(axis=0)
            dh_in = np.zeros_like(h_in)
            for tap, (src, dst) in enumerate(pairs):
                if src.size:
                    dw[tap] = h_in[src].T @ dpre[dst]
                    dh_in[src] += dpre[dst] @ w[tap].T
            conv_grads.append((dw, db))
            dh = dh_in
        grads = []
        for dw, db in reversed(conv_grads):
            grads += [dw, db]
        grads += [d_head_w, d_head_b]
        return grads

    # -- persistence ----------------------------------------------------------

    def save(self, path) -> None:
        shapes = [(len(OFFSETS), w.shape[1], w.shape[2]) for w in self.conv_weights]
        shapes.append((1, self.head_weight.shape[0], self.head_weight.shape[1]))
        weights = [w for w in self.conv_weights] + [self.head_weight[None]]
        biases = [b for b in self.conv_biases] + [self.head_bias]
        write_checkpoint(path, shapes, weights, biases,
                         self.out_channels, self.in_features, self.voxel_size)

    @classmethod
    def load(cls, path) -> "SparseConvNet":
        shapes, weights, biases, out_c, in_f, voxel_size = read_checkpoint(path)
        hidden = tuple(s[2] for s in shapes[:-1])
        net = cls(out_channels=out_c, in_features=in_f, hidden=hidden,
                  voxel_size=voxel_size, seed=0)
        net.conv_weights = [w.astype(np.float64) for w in weights[:-1]]
        net.conv_biases = [b.astype(np.float64) for b in biases[:-1]]
        net.head_weight = weights[-1][0].astype(np.float64)
        net.head_bias = biases[-1].astype(np.float64)
        return net


def cosine_loss(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> float:
    """Mean over masked rows of 1 - cos(pred, target)."""
    loss, _ = _cosine_loss_grad(pred, target, mask)
    return loss


def _cosine_loss_grad(pred: np.ndarray, target: np.ndarray, mask: np.ndarray):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if pred.shape != target.shape or mask.shape != (pred.shape[0],):
        raise ContractError("cosine_loss shapes are inconsistent")
    rows = np.where(mask)[0]
    if rows.size == 0:
        raise ContractError("cosine_loss needs at least one masked row")
    p = pred[rows]
    t = target[rows]
    tn = np.linalg.norm(t, axis=1)
    if (tn < NORM_FLOOR).any():
        raise ContractError("masked target rows must have norm >= 1e-8")
    pn = np.maximum(np.linalg.norm(p, axis=1), NORM_FLOOR)
    dot = (p * t).sum(axis=1)
    cos = dot / (pn * tn)
    loss = float(np.mean(1.0 - cos))
    # d(1-cos)/dp = -(t/(|p||t|) - cos * p/|p|^2), averaged over rows
    grad_rows = -(t / (pn * tn)[:, None] - (cos / (pn * pn))[:, None] * p) / rows.size
    grad = np.zeros_like(pred)
    grad[rows] = grad_rows
    return loss, grad


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    lr: float = 0.2
    momentum: float = 0.9
    voxel_size: float = VOXEL_SIZE_DEFAULT
    seed: int = 0


def voxel_targets(grid: SparseGrid, target: SemanticField):
    """Per-voxel supervision: mean of member Gaussians' observed rows.

    Voxels with no observed member are masked out.
    """
    m = grid.num_voxels
    c = target.channels
    sums = np.zeros((m, c), dtype=np.float64)
    obs = target.observed
    np.add.at(sums, grid.gaussian_voxel[obs], target.embeddings[obs].astype(np.float64))
    counts = np.bincount(grid.gaussian_voxel[obs], minlength=m).astype(np.float64)
    mask = counts > 0
    out = np.zeros((m, c), dtype=np.float64)
    out[mask] = sums[mask] / counts[mask, None]
    return out, mask


def train(net: SparseConvNet, dataset, config: TrainConfig = TrainConfig()):
    """Fit the net to projected fields with SGD + momentum.

    ``dataset`` is a sequence of (GaussianScene, SemanticField) pairs; the field
    supervises the scene it is paired with. Returns (net, per-epoch loss list).
    """
    prepared = []
    for scene, fld in dataset:
        if fld.num_points != len(scene):
            raise ContractError("field row count does not match its scene")
        grid = voxelize(scene, config.voxel_size)
        target, mask = voxel_targets(grid, fld)
        if mask.any():
            prepared.append((grid, target, mask))
    if not prepared:
        raise ContractError("no observed voxels in any training scene")

    velocity = net.zero_like_parameters()
    trace = []
    for _ in range(config.epochs):
        epoch_loss = 0.0
        for grid, target, mask in prepared:
            out, cache = net._forward_cached(grid)
            loss, dout = _cosine_loss_grad(out, target, mask)
            grads = net._backward(grid, cache, dout)
            params = net.parameters()
            for p, g, v in zip(params, grads, velocity):
                v *= config.momentum
                v -= config.lr * g
                p += v
            epoch_loss += loss
        trace.append(epoch_loss / len(prepared))
    return net, trace


def predict_field(net: SparseConvNet, scene: GaussianScene,
                  voxel_size: float | None = None) -> SemanticField:
    """Run the net and copy each voxel's embedding to its member Gaussians."""
    if voxel_size is None:
        voxel_size = net.voxel_size
    if len(scene) == 0:
        return SemanticField(
            embeddings=np.zeros((0, net.out_channels), dtype=np.float32),
            counts=np.zeros(0, dtype=np.uint32), normalized=False)
    grid = voxelize(scene, voxel_size)
    out = net.forward(grid)
    emb = out[grid.gaussian_voxel].astype(np.float32)
    return SemanticField(embeddings=emb,
                         counts=np.ones(len(scene), dtype=np.uint32),
                         normalized=False)
