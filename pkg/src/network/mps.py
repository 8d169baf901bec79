"""
Matrix product state (MPS) pixel classifier for one patch.

The chain has N = K**dims input sites and one output tensor without a
physical leg, placed on the bond between sites ceil(N/2)-1 and ceil(N/2)
(0-indexed):

    A_0 - A_1 - ... - A_{c-1} - O - A_c - ... - A_{N-1}

Site j has shape [bond_j, C*d, bond_{j+1}] with bond_0 = bond_N = 1 and all
inner bonds equal to the bond dimension. The output tensor has shape
[bond_c, P, bond_c] with P = K**dims * M.

Contraction never forms the exponentially large weight tensor: left
environments are swept from site 0 up to the output slot, right environments
from site N-1 down to it, each as one bond vector per patch. The same cache
gives all parameter gradients in one extra pair of sweeps.

All functions accept either one patch (features [N, C*d]) or a stack of
patches ([B, N, C*d]); the model is shared across patches.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from src.network.tensors import MAX_EXPLICIT_SIZE, outer_product_chain
from src.utils.errors import CapacityError, ConfigurationError, DimensionError

logger = logging.getLogger(__name__)

INIT_NOISE = 1e-2


def output_slot(num_sites):
    """Bond index at which the output tensor sits (ceil(N / 2))."""
    return -(-num_sites // 2)


def bond_dims(num_sites, bond_dim):
    """Bond extents [1, b, b, ..., b, 1] for a chain of num_sites sites."""
    return [1] + [bond_dim] * (num_sites - 1) + [1]


@dataclass
class EnvironmentCache:
    """
    Partial contractions of a chain against a stack of patches.

    left[j] (j <= c) is sites 0..j-1 contracted with their features,
    right[j] (j >= c) is sites j..N-1. Entries on the other side of the
    output slot are None. Each entry has shape [B, bond_j].
    """

    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    slot: int = 0


class MPSModel:
    """
    Weight-shared MPS applied to every K x K (x K) patch.

    Args:
        K (int): Patch edge
        M (int): Output classes per pixel
        C (int): Image channels
        d (int): Local feature dimension
        bond_dim (int): Bond dimension beta
        dims (int): Spatial dimensions, 2 or 3
        sites (list of np.ndarray, optional): Site tensors
        output (np.ndarray, optional): Output tensor
        feature_map (LocalFeatureMap, optional): Map the model was built for
        num_sites (int, optional): Chain length; defaults to K**dims. Only
            small oracle chains set this explicitly.
    """

    def __init__(self, K, M, C, d, bond_dim, dims=2, sites=None, output=None,
                 feature_map=None, num_sites=None):
        for name, value in (("K", K), ("M", M), ("C", C), ("d", d), ("bond_dim", bond_dim)):
            if int(value) != value or value < 1:
                raise ConfigurationError(f"{name} must be an integer >= 1, got {value}")
        if dims not in (2, 3):
            raise ConfigurationError(f"dims must be 2 or 3, got {dims}")

        self.K = int(K)
        self.M = int(M)
        self.C = int(C)
        self.d = int(d)
        self.bond_dim = int(bond_dim)
        self.dims = int(dims)
        self.feature_map = feature_map
        self._num_sites = int(num_sites) if num_sites is not None else self.K ** self.dims
        if self._num_sites < 1:
            raise ConfigurationError(f"num_sites must be >= 1, got {num_sites}")

        self.sites = sites if sites is not None else [
            np.zeros(shape) for shape in self.site_shapes()
        ]
        self.output = output if output is not None else np.zeros(self.output_shape())
        self._check_shapes()

    @property
    def num_sites(self):
        return self._num_sites

    @property
    def feature_dim(self):
        return self.C * self.d

    @property
    def output_dim(self):
        return self.num_sites * self.M

    @property
    def slot(self):
        return output_slot(self.num_sites)

    def site_shapes(self):
        bonds = bond_dims(self.num_sites, self.bond_dim)
        return [(bonds[j], self.feature_dim, bonds[j + 1]) for j in range(self.num_sites)]

    def output_shape(self):
        bond = bond_dims(self.num_sites, self.bond_dim)[self.slot]
        return (bond, self.output_dim, bond)

    def _check_shapes(self):
        expected = self.site_shapes()
        if len(self.sites) != len(expected):
            raise DimensionError(f"Expected {len(expected)} sites, got {len(self.sites)}")
        for j, (site, shape) in enumerate(zip(self.sites, expected)):
            if tuple(site.shape) != shape:
                raise DimensionError(f"Site {j} has shape {site.shape}, expected {shape}")
        if tuple(self.output.shape) != self.output_shape():
            raise DimensionError(
                f"Output tensor has shape {self.output.shape}, expected {self.output_shape()}"
            )

    def parameters(self):
        """All parameter arrays, sites first then the output tensor."""
        return list(self.sites) + [self.output]

    def set_parameters(self, params):
        params = list(params)
        self.sites = [np.asarray(p, dtype=np.float64) for p in params[:-1]]
        self.output = np.asarray(params[-1], dtype=np.float64)
        self._check_shapes()

    def copy(self):
        return MPSModel(
            self.K, self.M, self.C, self.d, self.bond_dim, self.dims,
            sites=[s.copy() for s in self.sites],
            output=self.output.copy(),
            feature_map=self.feature_map,
            num_sites=self.num_sites,
        )

    def is_finite(self):
        return all(np.all(np.isfinite(p)) for p in self.parameters())

    @property
    def n_params(self):
        return sum(p.size for p in self.parameters())

    def hyperparameters(self):
        return {
            "K": self.K, "M": self.M, "C": self.C, "d": self.d,
            "bond_dim": self.bond_dim, "dims": self.dims,
        }

    def __repr__(self):
        return (f"MPSModel(K={self.K}, dims={self.dims}, sites={self.num_sites}, "
                f"bond_dim={self.bond_dim}, C*d={self.feature_dim}, P={self.output_dim}, "
                f"params={self.n_params})")

    # Contraction

    def _batch(self, features):
        features = np.asarray(features, dtype=np.float64)
        single = features.ndim == 2
        if single:
            features = features[np.newaxis]
        if features.ndim != 3 or features.shape[1:] != (self.num_sites, self.feature_dim):
            raise DimensionError(
                f"Expected features [B, {self.num_sites}, {self.feature_dim}] "
                f"or [{self.num_sites}, {self.feature_dim}], got {features.shape}"
            )
        return features, single

    @staticmethod
    def _step_right(env, site, feat):
        # env [B, l], site [l, i, r], feat [B, i] -> [B, r]
        left, phys, right = site.shape
        moved = (env @ site.reshape(left, phys * right)).reshape(-1, phys, right)
        return np.einsum("piy,pi->py", moved, feat)

    @staticmethod
    def _step_left(env, site, feat):
        # env [B, r], site [l, i, r], feat [B, i] -> [B, l]
        left, phys, right = site.shape
        moved = (env @ site.reshape(left * phys, right).T).reshape(-1, left, phys)
        return np.einsum("pxi,pi->px", moved, feat)

    @staticmethod
    def _outer_grad(left_env, feat, right_env):
        # sum_p left[p, x] feat[p, i] right[p, y] -> [x, i, y]
        batch, left = left_env.shape
        phys = feat.shape[1]
        joined = (left_env[:, :, np.newaxis] * feat[:, np.newaxis, :]).reshape(batch, left * phys)
        return (joined.T @ right_env).reshape(left, phys, right_env.shape[1])

    def environments(self, features):
        """
        Left and right environments up to the output slot.

        Args:
            features (np.ndarray): [B, N, C*d]

        Returns:
            EnvironmentCache
        """
        features, _ = self._batch(features)
        batch = features.shape[0]
        n, c = self.num_sites, self.slot

        left = [None] * (n + 1)
        right = [None] * (n + 1)
        left[0] = np.ones((batch, 1))
        for j in range(c):
            left[j + 1] = self._step_right(left[j], self.sites[j], features[:, j])
        right[n] = np.ones((batch, 1))
        for j in range(n - 1, c - 1, -1):
            right[j] = self._step_left(right[j + 1], self.sites[j], features[:, j])
        return EnvironmentCache(left=left, right=right, slot=c)

    def forward(self, features, cache=None):
        """
        Per-pixel logits of one patch or a stack of patches.

        Args:
            features (np.ndarray): [N, C*d] or [B, N, C*d]
            cache (EnvironmentCache, optional): Precomputed environments

        Returns:
            np.ndarray: Raw logits [P] or [B, P]
        """
        features, single = self._batch(features)
        if cache is None:
            cache = self.environments(features)
        c = self.slot
        left_env, right_env = cache.left[c], cache.right[c]
        bond_l, out_dim, bond_r = self.output.shape
        moved = (left_env @ self.output.reshape(bond_l, out_dim * bond_r)).reshape(-1, out_dim, bond_r)
        logits = np.einsum("pmy,py->pm", moved, right_env)
        return logits[0] if single else logits

    def backward(self, features, upstream_grad, cache=None):
        """
        Gradients of sum_{p,m} upstream[p, m] * logits[p, m] w.r.t. all parameters.

        Contributions of all patches in the stack are summed (weight sharing).

        Args:
            features (np.ndarray): [N, C*d] or [B, N, C*d]
            upstream_grad (np.ndarray): [P] or [B, P]
            cache (EnvironmentCache, optional): Environments from forward

        Returns:
            list of np.ndarray: Gradients in parameters() order

        Raises:
            DimensionError: If upstream_grad does not match the logits shape
        """
        features, single = self._batch(features)
        upstream = np.asarray(upstream_grad, dtype=np.float64)
        if single and upstream.ndim == 1:
            upstream = upstream[np.newaxis]
        if upstream.shape != (features.shape[0], self.output_dim):
            raise DimensionError(
                f"Upstream gradient shape {np.shape(upstream_grad)} does not match "
                f"logits [{features.shape[0]}, {self.output_dim}]"
            )
        if cache is None:
            cache = self.environments(features)

        n, c = self.num_sites, self.slot
        bond_l, out_dim, bond_r = self.output.shape
        left_c, right_c = cache.left[c], cache.right[c]
        batch = features.shape[0]
        grads = [None] * n

        joined = (left_c[:, :, np.newaxis] * upstream[:, np.newaxis, :]).reshape(batch, bond_l * out_dim)
        output_grad = (joined.T @ right_c).reshape(bond_l, out_dim, bond_r)

        # Output tensor folded with upstream, seen from the left half
        folded = (right_c @ self.output.transpose(2, 0, 1).reshape(bond_r, bond_l * out_dim))
        env = np.einsum("pxm,pm->px", folded.reshape(batch, bond_l, out_dim), upstream)
        for j in range(c - 1, -1, -1):
            grads[j] = self._outer_grad(cache.left[j], features[:, j], env)
            env = self._step_left(env, self.sites[j], features[:, j])

        # ... and from the right half
        folded = (left_c @ self.output.reshape(bond_l, out_dim * bond_r)).reshape(batch, out_dim, bond_r)
        env = np.einsum("pmy,pm->py", folded, upstream)
        for j in range(c, n):
            grads[j] = self._outer_grad(env, features[:, j], cache.right[j + 1])
            env = self._step_right(env, self.sites[j], features[:, j])

        return grads + [output_grad]

    def materialize(self):
        """
        Explicit weight tensor Theta[i_1, ..., i_N, m].

        Oracle-scale only.

        Returns:
            np.ndarray: Shape (C*d,) * N + (P,)

        Raises:
            CapacityError: If (C*d)**N * P exceeds the explicit size guard
        """
        n, c = self.num_sites, self.slot
        size = float(self.feature_dim) ** n * self.output_dim
        if size > MAX_EXPLICIT_SIZE:
            raise CapacityError(
                f"Explicit weight tensor would have {size:.3g} entries "
                f"(limit {MAX_EXPLICIT_SIZE})"
            )

        left_block = np.ones((1, 1))
        for j in range(c):
            left_block = np.einsum("Ix,xiy->Iiy", left_block, self.sites[j])
            left_block = left_block.reshape(-1, self.sites[j].shape[2])
        right_block = np.ones((1, 1))
        for j in range(n - 1, c - 1, -1):
            right_block = np.einsum("xiy,yJ->xiJ", self.sites[j], right_block)
            right_block = right_block.reshape(self.sites[j].shape[0], -1)

        theta = np.einsum("Ix,xmy,yJ->IJm", left_block, self.output, right_block)
        return np.ascontiguousarray(theta.reshape((self.feature_dim,) * n + (self.output_dim,)))


def init(K, M, C, d, bond_dim, seed, dims=2, feature_map=None, epsilon=INIT_NOISE,
         num_sites=None):
    """
    Near-identity random initialization.

    Each site is diag_weights on its bond diagonal plus epsilon * U(-1, 1)
    noise; the output tensor is pure noise. Without a feature map the
    diagonal weights are 1 / (C*d) for every physical index. With one, they
    are its least-squares identity weights tiled over channels and divided by
    C, so every contracted site is close to the identity for any intensity.

    Args:
        K (int): Patch edge
        M (int): Output classes per pixel
        C (int): Channels
        d (int): Local feature dimension
        bond_dim (int): Bond dimension
        seed (int): RNG seed
        dims (int): Spatial dimensions
        feature_map (LocalFeatureMap, optional): Map used for the diagonal
        epsilon (float): Noise amplitude
        num_sites (int, optional): Chain length override for oracle checks

    Returns:
        MPSModel
    """
    model = MPSModel(K, M, C, d, bond_dim, dims, feature_map=feature_map, num_sites=num_sites)
    rng = np.random.default_rng(seed)

    if feature_map is None:
        diagonal = np.full(model.feature_dim, 1.0 / model.feature_dim)
    else:
        if feature_map.d != model.d:
            raise ConfigurationError(
                f"Feature map has d={feature_map.d} but the model expects d={model.d}"
            )
        diagonal = np.tile(feature_map.identity_weights(), model.C) / model.C

    sites = []
    for shape in model.site_shapes():
        site = epsilon * rng.uniform(-1.0, 1.0, size=shape)
        for a in range(min(shape[0], shape[2])):
            site[a, :, a] += diagonal
        sites.append(site)
    output = epsilon * rng.uniform(-1.0, 1.0, size=model.output_shape())
    model.set_parameters(sites + [output])

    logger.debug(f"Initialized {model}")
    return model


def forward(model, features):
    """Module-level alias of MPSModel.forward."""
    return model.forward(features)


def backward(model, features, upstream_grad):
    """Module-level alias of MPSModel.backward."""
    return model.backward(features, upstream_grad)


def materialize(model):
    """Module-level alias of MPSModel.materialize."""
    return model.materialize()


def explicit_forward(model, features):
    """
    Reference logits <Theta, Phi> built from explicit tensors.

    Args:
        model (MPSModel): Model small enough to materialize
        features (np.ndarray): One patch [N, C*d]

    Returns:
        np.ndarray: Logits [P]
    """
    theta = model.materialize()
    phi = outer_product_chain(list(np.asarray(features, dtype=np.float64)))
    return np.tensordot(phi, theta, axes=phi.ndim)


def param_count(K, M, C, d, bond_dim, dims=2):
    """
    Number of trainable entries of a strided MPS.

    2 * (C*d*b) + (N-2) * (b^2 * C*d) + b^2 * P for N >= 2, with N = K**dims
    and P = K**dims * M, counted from the tensor shapes.

    Returns:
        int: Parameter count
    """
    num_sites = K ** dims
    bonds = bond_dims(num_sites, bond_dim)
    feature_dim = C * d
    count = sum(bonds[j] * feature_dim * bonds[j + 1] for j in range(num_sites))
    slot_bond = bonds[output_slot(num_sites)]
    count += slot_bond * (num_sites * M) * slot_bond
    return int(count)
