"""Training objectives with analytic gradients.

Every loss returns a :class:`LossValue` carrying the scalar value and the
gradient with respect to the student's logits and/or embedding. Reductions
are batch means, so the gradients already include the 1/N factor.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InputError

DISTILLERS = ("scaled_kd", "rkd_da")
AUGMENTATIONS = ("none", "mixup", "cutout", "cutmix")


@dataclass(frozen=True)
class DistillSpec:
    """Distillation recipe. Defaults: T=50, mixup a=0.4, alpha=0.5, 16x16
    cutout, CutMix with p=0.5 and a=1."""

    distiller: str = "scaled_kd"
    augmentation: str = "none"
    alpha: float = 0.5
    temperature: float = 50.0
    mixup_a: float = 0.4
    cutout_size: int = 16
    cutmix_p: float = 0.5
    cutmix_a: float = 1.0
    grad_rescale_T2: bool = False
    rkd_distance_weight: float = 1.0
    rkd_angle_weight: float = 2.0

    def __post_init__(self):
        if self.distiller not in DISTILLERS:
            raise ConfigurationError(f"distiller must be one of {DISTILLERS}, got {self.distiller!r}")
        if self.augmentation not in AUGMENTATIONS:
            raise ConfigurationError(
                f"augmentation must be one of {AUGMENTATIONS}, got {self.augmentation!r}")
        if not 0 <= self.alpha <= 1:
            raise ConfigurationError(f"alpha must be in [0, 1], got {self.alpha}")
        if not self.temperature > 0:
            raise ConfigurationError(f"temperature must be > 0, got {self.temperature}")
        if not (self.mixup_a > 0 and self.cutmix_a > 0):
            raise ConfigurationError("Beta parameters must be > 0")
        if self.cutout_size < 1:
            raise ConfigurationError("cutout_size must be >= 1")
        if not 0 <= self.cutmix_p <= 1:
            raise ConfigurationError("cutmix_p must be in [0, 1]")


@dataclass
class LossValue:
    value: float
    logit_grad: object = None
    embedding_grad: np.ndarray = None
    components: dict = field(default_factory=dict)
    # for combined objectives: the weighted parts, each tied to its own forward pass
    terms: dict = field(default_factory=dict)

    def scaled(self, c):
        def mul(g):
            if g is None:
                return None
            if isinstance(g, tuple):
                return tuple(c * gi for gi in g)
            return c * g
        return LossValue(c * self.value, mul(self.logit_grad), mul(self.embedding_grad),
                         dict(self.components))


def _log_softmax(z):
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def temp_softmax(z, T=1.0):
    """Row-wise softmax of z / T with max subtraction."""
    if not T > 0:
        raise ConfigurationError(f"temperature must be > 0, got {T}")
    z = np.asarray(z, dtype=float)
    if z.ndim != 2:
        raise InputError("logits must be N x n_c")
    e = np.exp((z - z.max(axis=1, keepdims=True)) / T)
    return e / e.sum(axis=1, keepdims=True)


def _same_shape(a, b, what):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 2:
        raise InputError(f"{what}: shape mismatch {a.shape} vs {b.shape}")
    return a, b


def scaled_kl_loss(z_t, z_s, T, n_c=None, rescale_T2=False):
    """KL(teacher || student) of temperature-softened outputs, averaged over
    the batch and divided by the number of classes.

    The teacher side is a constant. With ``rescale_T2`` the value and the
    gradient are multiplied by T**2.
    """
    z_t, z_s = _same_shape(z_t, z_s, "scaled_kl_loss")
    if not T > 0:
        raise ConfigurationError(f"temperature must be > 0, got {T}")
    n, k = z_s.shape
    if n_c is None:
        n_c = k
    elif n_c != k:
        raise InputError(f"n_c={n_c} does not match logit width {k}")
    logp_t = _log_softmax(z_t / T)
    logp_s = _log_softmax(z_s / T)
    p_t = np.exp(logp_t)
    kl_rows = (p_t * (logp_t - logp_s)).sum(axis=1)
    scale = T * T if rescale_T2 else 1.0
    value = scale * kl_rows.sum() / (n * n_c)
    grad = scale * (np.exp(logp_s) - p_t) / (T * n * n_c)
    return LossValue(float(value), grad, components={"kd": float(value)})


def _check_labels(y, n, k):
    y = np.asarray(y)
    if y.shape != (n,):
        raise InputError(f"expected {n} labels, got shape {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= k):
        raise InputError(f"labels must be in [0, {k})")
    return y.astype(np.int64)


def cross_entropy(z, y):
    """Batch-mean negative log-likelihood at T=1."""
    z = np.asarray(z, dtype=float)
    n, k = z.shape
    y = _check_labels(y, n, k)
    logp = _log_softmax(z)
    value = -logp[np.arange(n), y].sum() / n
    grad = np.exp(logp)
    grad[np.arange(n), y] -= 1.0
    grad /= n
    return LossValue(float(value), grad, components={"aug": float(value)})


def paired_cross_entropy(z, y_i, y_j, lam):
    """lam * CE(z, y_i) + (1 - lam) * CE(z, y_j)."""
    a = cross_entropy(z, y_i)
    b = cross_entropy(z, y_j)
    value = lam * a.value + (1 - lam) * b.value
    grad = lam * a.logit_grad + (1 - lam) * b.logit_grad
    return LossValue(float(value), grad, components={"aug": float(value)})


def mixup_ce_loss(z_mix, mb):
    """Hard-label mixup loss on the student's logits for ``mb.x_mix``."""
    return paired_cross_entropy(z_mix, mb.y_i, mb.y_j, mb.lam)


def cutmix_ce_loss(z_cm, cb):
    """Area-weighted two-label cross-entropy for a CutMix batch."""
    return paired_cross_entropy(z_cm, cb.y_i, cb.y_j, cb.lam_adj)


def mixup_distill_loss(z_t_i, z_s_i, z_t_j, z_s_j, T, n_c=None, *, pairing=None,
                       rescale_T2=False):
    """Sum of the scaled KL terms of the two images that were mixed.

    When ``pairing`` is given, ``z_s_j`` must equal ``z_s_i[pairing]`` and the
    gradient of the second term is folded back through the permutation, so
    ``logit_grad`` is the gradient with respect to ``z_s_i`` alone. Without a
    pairing the two streams are independent inputs and ``logit_grad`` is the
    tuple ``(grad_i, grad_j)``.
    """
    a = scaled_kl_loss(z_t_i, z_s_i, T, n_c, rescale_T2)
    b = scaled_kl_loss(z_t_j, z_s_j, T, n_c, rescale_T2)
    value = a.value + b.value
    if pairing is None:
        grad = (a.logit_grad, b.logit_grad)
    else:
        grad = a.logit_grad.copy()
        np.add.at(grad, np.asarray(pairing), b.logit_grad)
    return LossValue(float(value), grad, components={"kd": float(value)})


# ------------------------------------------------------------------------ RKD

def _huber(x, delta=1.0):
    ax = np.abs(x)
    return np.where(ax < delta, 0.5 * x * x, delta * (ax - 0.5 * delta))


def _huber_grad(x, delta=1.0):
    return np.clip(x, -delta, delta)


def _same_batch(e_t, e_s, what):
    # teacher and student embeddings may differ in width; only N must agree
    e_t, e_s = np.asarray(e_t, dtype=float), np.asarray(e_s, dtype=float)
    if e_t.ndim != 2 or e_s.ndim != 2 or len(e_t) != len(e_s):
        raise InputError(f"{what}: batch mismatch {e_t.shape} vs {e_s.shape}")
    return e_t, e_s


def _pair_distances(e):
    n = len(e)
    i, j = np.triu_indices(n, k=1)
    diff = e[i] - e[j]
    return i, j, diff, np.sqrt((diff * diff).sum(axis=1))


def rkd_distance_loss(e_t, e_s):
    """Huber mismatch of mean-normalized pairwise distances over all i < j."""
    e_t, e_s = _same_batch(e_t, e_s, "rkd_distance_loss")
    n = len(e_s)
    if n < 2:
        raise InputError("rkd_distance_loss needs at least 2 samples")
    _, _, _, d_t = _pair_distances(e_t)
    i, j, diff, d_s = _pair_distances(e_s)
    mu_t, mu_s = d_t.mean(), d_s.mean()
    zero = LossValue(0.0, embedding_grad=np.zeros_like(e_s), components={"kd": 0.0})
    if mu_t == 0 or mu_s == 0:
        return zero
    r = d_s / mu_s - d_t / mu_t
    n_pairs = len(d_s)
    value = _huber(r).sum() / n_pairs
    g = _huber_grad(r) / n_pairs  # dL / d(normalized student distance)
    # normalized distance n_k = d_k / mu, mu = mean(d)
    g_d = g / mu_s - (g * d_s).sum() / (mu_s * mu_s * n_pairs)
    unit = np.divide(diff, d_s[:, None], out=np.zeros_like(diff), where=d_s[:, None] > 0)
    contrib = g_d[:, None] * unit
    grad = np.zeros_like(e_s)
    np.add.at(grad, i, contrib)
    np.add.at(grad, j, -contrib)
    return LossValue(float(value), embedding_grad=grad, components={"kd": float(value)})


def _angle_terms(e):
    """Unit difference vectors U[j, i] = (e_i - e_j)/|e_i - e_j|, norms, and
    cosines C[j, i, k] = U[j, i] . U[j, k]."""
    v = e[None, :, :] - e[:, None, :]
    norm = np.sqrt((v * v).sum(axis=2))
    u = np.divide(v, norm[..., None], out=np.zeros_like(v), where=norm[..., None] > 0)
    return u, norm, np.einsum("jid,jkd->jik", u, u)


def _distinct_triples(n):
    idx = np.arange(n)
    return ((idx[:, None, None] != idx[None, :, None])
            & (idx[:, None, None] != idx[None, None, :])
            & (idx[None, :, None] != idx[None, None, :]))


def rkd_angle_loss(e_t, e_s):
    """Huber mismatch of the cosine at vertex j over every ordered triple of
    distinct samples (i, j, k)."""
    e_t, e_s = _same_batch(e_t, e_s, "rkd_angle_loss")
    n = len(e_s)
    if n < 3:
        raise InputError("rkd_angle_loss needs at least 3 samples")
    mask = _distinct_triples(n)  # indexed [j, i, k]
    _, _, c_t = _angle_terms(e_t)
    u, norm, c_s = _angle_terms(e_s)
    n_triples = n * (n - 1) * (n - 2)
    r = np.where(mask, c_s - c_t, 0.0)
    value = _huber(r).sum() / n_triples
    g = np.where(mask, _huber_grad(r), 0.0) / n_triples
    g = g + g.transpose(0, 2, 1)  # cosine is symmetric in (i, k)
    # d cos / d v_ji = (u_jk - cos * u_ji) / |v_ji|
    gv = np.einsum("jik,jkd->jid", g, u) - (g * c_s).sum(axis=2)[..., None] * u
    gv = np.divide(gv, norm[..., None], out=np.zeros_like(gv), where=norm[..., None] > 0)
    # v_ji = e_i - e_j
    grad = gv.sum(axis=0) - gv.sum(axis=1)
    return LossValue(float(value), embedding_grad=grad, components={"kd": float(value)})


def rkd_da_loss(e_t, e_s, distance_weight=1.0, angle_weight=2.0):
    d = rkd_distance_loss(e_t, e_s)
    a = rkd_angle_loss(e_t, e_s)
    value = distance_weight * d.value + angle_weight * a.value
    grad = distance_weight * d.embedding_grad + angle_weight * a.embedding_grad
    return LossValue(float(value), embedding_grad=grad, components={"kd": float(value)})


# ------------------------------------------------------------------- combined

def combined_loss(spec, kd, aug):
    """alpha * kd + (1 - alpha) * aug.

    The two parts usually come from different forward passes (original and
    augmented images), so their weighted gradients are kept apart in
    ``terms``; ``components`` records the unweighted values.
    """
    if not (np.isfinite(kd.value) and np.isfinite(aug.value)):
        raise InputError("combined_loss needs finite components")
    alpha = spec.alpha
    value = alpha * kd.value + (1 - alpha) * aug.value
    return LossValue(
        float(value),
        components={"kd": float(kd.value), "aug": float(aug.value)},
        terms={"kd": kd.scaled(alpha), "aug": aug.scaled(1 - alpha)})
