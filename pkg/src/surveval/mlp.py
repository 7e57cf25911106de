"""Value/gradient/feedback network and its training loop.

A small ReLU trunk (2 -> 10 -> 25 -> 10) feeds three affine heads: the
scalar value estimate, the two-component value gradient, and the control
pair.  The first control output is squashed by tanh onto [-1, 1]; the
second is an angle, wrapped to (-pi, pi] at inference.

The loss couples the heads to the data and to each other: besides the
three data terms it penalizes disagreement between the input gradient of
the value head and the gradient head, and disagreement between the control
head and the feedback formulas applied to the gradient head.  Every term
runs through kappa10(x) = 10*|x|_1 + |x|_2^2.  All gradients are computed
in closed form; the input-gradient term treats the ReLU activation
patterns as locally constant, which is exact almost everywhere.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .characteristics import CharacteristicPoint, Dataset

ARCH = (2, 10, 25, 10)
HEADS = {"v": 1, "dv": 2, "u": 2}
CHECKPOINT_VERSION = 1

_WEIGHT_KEYS = ("w1", "w2", "w3", "wv", "wd", "wu")
_BIAS_KEYS = ("b1", "b2", "b3", "bv", "bd", "bu")


class FormatError(Exception):
    """Checkpoint file is truncated, corrupt, or has the wrong schema version."""


class NonFiniteLoss(Exception):
    """A batch loss became non-finite during training (divergent step size)."""


@dataclass
class MlpModel:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wd: np.ndarray
    bd: np.ndarray
    wu: np.ndarray
    bu: np.ndarray

    def params(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in _WEIGHT_KEYS + _BIAS_KEYS}

    def copy(self) -> "MlpModel":
        return MlpModel(**{k: v.copy() for k, v in self.params().items()})

    def value_head_params(self):
        """Parameter tuple consumed by the flow kernels."""
        return (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3, self.wv, self.bv)


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs: int = 5000
    softsign_sharpness: float = 10.0
    val_fraction: float = 0.1
    patience: int = 200
    lr_decay: float = 0.9985  # per-epoch step shrink; the 1-norm terms keep
    # gradients O(1) near the optimum, so a fixed step cannot settle

    def __post_init__(self):
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")
        if self.learning_rate <= 0 or self.softsign_sharpness <= 0:
            raise ValueError("learning_rate and softsign_sharpness must be positive")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must lie in (0, 1]")


def zeros_model() -> MlpModel:
    h1, h2, h3 = ARCH[1:]
    return MlpModel(
        w1=np.zeros((h1, 2)), b1=np.zeros(h1),
        w2=np.zeros((h2, h1)), b2=np.zeros(h2),
        w3=np.zeros((h3, h2)), b3=np.zeros(h3),
        wv=np.zeros((1, h3)), bv=np.zeros(1),
        wd=np.zeros((2, h3)), bd=np.zeros(2),
        wu=np.zeros((2, h3)), bu=np.zeros(2),
    )


def init_model(rng: np.random.Generator) -> MlpModel:
    """He-normal trunk and head weights, zero biases."""
    h1, h2, h3 = ARCH[1:]

    def he(rows, cols):
        return rng.normal(0.0, math.sqrt(2.0 / cols), size=(rows, cols))

    return MlpModel(
        w1=he(h1, 2), b1=np.zeros(h1),
        w2=he(h2, h1), b2=np.zeros(h2),
        w3=he(h3, h2), b3=np.zeros(h3),
        wv=he(1, h3), bv=np.zeros(1),
        wd=he(2, h3), bd=np.zeros(2),
        wu=he(2, h3), bu=np.zeros(2),
    )


def wrap_angles(a):
    """Wrap to (-pi, pi], elementwise."""
    r = np.asarray(a, dtype=np.float64) % (2.0 * math.pi)
    return np.where(r > math.pi, r - 2.0 * math.pi, r)


def kappa10(v) -> float:
    """10 * 1-norm plus squared 2-norm of the residual."""
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    return float(10.0 * np.abs(v).sum() + (v * v).sum())


def _forward_batch(m: MlpModel, xy: np.ndarray) -> dict:
    a1 = xy @ m.w1.T + m.b1
    m1 = a1 > 0.0
    z1 = np.where(m1, a1, 0.0)
    a2 = z1 @ m.w2.T + m.b2
    m2 = a2 > 0.0
    z2 = np.where(m2, a2, 0.0)
    a3 = z2 @ m.w3.T + m.b3
    m3 = a3 > 0.0
    z3 = np.where(m3, a3, 0.0)
    v = z3 @ m.wv.T + m.bv
    dv = z3 @ m.wd.T + m.bd
    ur = z3 @ m.wu.T + m.bu
    u1 = np.tanh(ur[:, 0])
    return dict(xy=xy, m1=m1, z1=z1, m2=m2, z2=z2, m3=m3, z3=z3,
                v=v[:, 0], dv=dv, ur=ur, u1=u1)


def _input_grad_batch(m: MlpModel, caches: dict) -> dict:
    """Gradient of the value head w.r.t. the input, with reusable factors."""
    r2 = caches["m1"][:, :, None] * m.w1[None, :, :]            # (B, h1, 2)
    r3 = caches["m2"][:, :, None] * np.matmul(m.w2, r2)         # (B, h2, 2)
    mm = caches["m3"][:, :, None] * np.matmul(m.w3, r3)         # (B, h3, 2)
    g = (mm * m.wv[0][None, :, None]).sum(axis=1)
    return dict(g=g, r2=r2, r3=r3, mm=mm)


def forward(m: MlpModel, xy) -> tuple[float, np.ndarray, np.ndarray]:
    """Evaluate the three heads at one point.

    Returns (value, gradient estimate, control pair); the second control
    component is wrapped to its principal value.
    """
    c = _forward_batch(m, np.asarray(xy, dtype=np.float64).reshape(1, 2))
    u = np.array([c["u1"][0], float(wrap_angles(c["ur"][0, 1]))])
    return float(c["v"][0]), c["dv"][0].copy(), u


def input_gradient(m: MlpModel, xy) -> np.ndarray:
    """Exact input gradient of the value head (subgradient 0 at ReLU kinks)."""
    c = _forward_batch(m, np.asarray(xy, dtype=np.float64).reshape(1, 2))
    return _input_grad_batch(m, c)["g"][0].copy()


def _labels(x, y, dvx, dvy):
    ue = np.sign(dvx * y - dvy * x)
    up = np.arctan2(dvx, dvy)
    return ue, up


def _batch_terms(m: MlpModel, pts: np.ndarray, train_mode: bool, beta_s: float):
    """Per-sample values of the five loss terms, plus caches for backprop."""
    xy = pts[:, :2]
    dv_lab = pts[:, 2:4]
    v_lab = pts[:, 4]
    ue_lab, up_lab = _labels(pts[:, 0], pts[:, 1], pts[:, 2], pts[:, 3])

    c = _forward_batch(m, xy)
    ig = _input_grad_batch(m, c)

    e1 = c["v"] - v_lab
    e2 = c["dv"] - dv_lab
    e3 = np.column_stack([c["u1"] - ue_lab, wrap_angles(c["ur"][:, 1] - up_lab)])
    e4 = ig["g"] - c["dv"]
    q = c["dv"][:, 0] * pts[:, 1] - c["dv"][:, 1] * pts[:, 0]
    soft = np.tanh(beta_s * q) if train_mode else np.sign(q)
    ang = np.arctan2(c["dv"][:, 0], c["dv"][:, 1])
    e5 = np.column_stack([soft - c["u1"], wrap_angles(ang - c["ur"][:, 1])])

    def kap(e):
        e = e if e.ndim == 2 else e[:, None]
        return 10.0 * np.abs(e).sum(axis=1) + (e * e).sum(axis=1)

    terms = np.column_stack([kap(e1), kap(e2), kap(e3), kap(e4), kap(e5)])
    return terms, dict(c=c, ig=ig, e1=e1, e2=e2, e3=e3, e4=e4, e5=e5,
                       q=q, soft=soft)


def loss_terms(m: MlpModel, sample: CharacteristicPoint, *, train_mode: bool = False,
               softsign_sharpness: float = 10.0) -> tuple[float, float, float, float, float]:
    """The five loss terms for one sample (evaluation mode uses the hard sign)."""
    pts = np.array([[sample.x, sample.y, sample.dvx, sample.dvy, sample.v]])
    terms, _ = _batch_terms(m, pts, train_mode, softsign_sharpness)
    return tuple(float(t) for t in terms[0])


def loss(m: MlpModel, sample: CharacteristicPoint, *, train_mode: bool = False,
         softsign_sharpness: float = 10.0) -> float:
    return float(sum(loss_terms(m, sample, train_mode=train_mode,
                                softsign_sharpness=softsign_sharpness)))


def _dkappa(e):
    e2d = e if e.ndim == 2 else e[:, None]
    return 10.0 * np.sign(e2d) + 2.0 * e2d


def _batch_loss_and_grads(m: MlpModel, pts: np.ndarray, beta_s: float):
    """Mean training-mode loss over the batch and its parameter gradients."""
    terms, cache = _batch_terms(m, pts, train_mode=True, beta_s=beta_s)
    c, ig = cache["c"], cache["ig"]
    bsz = len(pts)
    xy = pts[:, :2]

    w1t = _dkappa(cache["e1"])          # (B,1)
    w2t = _dkappa(cache["e2"])          # (B,2)
    w3t = _dkappa(cache["e3"])
    w4t = _dkappa(cache["e4"])
    w5t = _dkappa(cache["e5"])

    gv = w1t[:, 0]
    gdv = w2t - w4t
    gu = w3t.copy()
    gu[:, 0] -= w5t[:, 0]
    gu[:, 1] -= w5t[:, 1]

    # term 5 couples the gradient head through the soft sign and the angle formula
    dsoft = beta_s * (1.0 - cache["soft"] ** 2)
    gq = w5t[:, 0] * dsoft
    gdv[:, 0] += gq * pts[:, 1]
    gdv[:, 1] -= gq * pts[:, 0]
    r2n = c["dv"][:, 0] ** 2 + c["dv"][:, 1] ** 2
    safe = r2n > 1e-24
    inv = np.where(safe, 1.0 / np.where(safe, r2n, 1.0), 0.0)
    gdv[:, 0] += w5t[:, 1] * c["dv"][:, 1] * inv
    gdv[:, 1] -= w5t[:, 1] * c["dv"][:, 0] * inv

    du_raw = gu.copy()
    du_raw[:, 0] *= 1.0 - c["u1"] ** 2

    z3, z2, z1 = c["z3"], c["z2"], c["z1"]
    grads = {}
    grads["wv"] = (gv[:, None] * z3).sum(axis=0)[None, :] / bsz
    grads["bv"] = np.array([gv.sum() / bsz])
    grads["wd"] = gdv.T @ z3 / bsz
    grads["bd"] = gdv.sum(axis=0) / bsz
    grads["wu"] = du_raw.T @ z3 / bsz
    grads["bu"] = du_raw.sum(axis=0) / bsz

    dz3 = gv[:, None] * m.wv + gdv @ m.wd + du_raw @ m.wu
    da3 = dz3 * c["m3"]
    grads["w3"] = da3.T @ z2 / bsz
    grads["b3"] = da3.sum(axis=0) / bsz
    dz2 = da3 @ m.w3
    da2 = dz2 * c["m2"]
    grads["w2"] = da2.T @ z1 / bsz
    grads["b2"] = da2.sum(axis=0) / bsz
    dz1 = da2 @ m.w2
    da1 = dz1 * c["m1"]
    grads["w1"] = da1.T @ xy / bsz
    grads["b1"] = da1.sum(axis=0) / bsz

    # input-gradient term: masks frozen, so the gradient path is a plain
    # product of weight matrices threaded through the activation patterns
    w4 = w4t
    w4col = w4[:, :, None]
    l3 = m.wv[0][None, :] * c["m3"]                         # (B, h3)
    grads["wv"] += np.matmul(ig["mm"], w4col)[:, :, 0].sum(axis=0)[None, :] / bsz
    r3w = np.matmul(ig["r3"], w4col)[:, :, 0]               # (B, h2)
    grads["w3"] += l3.T @ r3w / bsz
    l2 = (l3 @ m.w3) * c["m2"]                              # (B, h2)
    r2w = np.matmul(ig["r2"], w4col)[:, :, 0]               # (B, h1)
    grads["w2"] += l2.T @ r2w / bsz
    l1 = (l2 @ m.w2) * c["m1"]                              # (B, h1)
    grads["w1"] += l1.T @ w4 / bsz

    return float(terms.sum(axis=1).mean()), grads


def _mean_loss(m: MlpModel, pts: np.ndarray, train_mode: bool, beta_s: float,
               chunk: int = 16384) -> float:
    total = 0.0
    for i in range(0, len(pts), chunk):
        t, _ = _batch_terms(m, pts[i:i + chunk], train_mode, beta_s)
        total += float(t.sum())
    return total / len(pts)


def train(data: Dataset, cfg: TrainConfig) -> tuple[MlpModel, dict]:
    """Mini-batch Adam on the five-term loss with validation-based early stop.

    Returns the model with the lowest validation loss encountered plus a
    history dict.  Deterministic for a fixed config: rerunning yields
    bit-identical weights.
    """
    if len(data) == 0:
        raise ValueError("training dataset is empty")
    pts = np.asarray(data.points, dtype=np.float64)
    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(len(pts))
    n_val = int(len(pts) * cfg.val_fraction)
    val = pts[perm[:n_val]]
    trn = pts[perm[n_val:]]
    if len(trn) == 0:
        raise ValueError("validation fraction leaves no training data")

    model = init_model(rng)
    beta_s = cfg.softsign_sharpness
    adam_m = {k: np.zeros_like(v) for k, v in model.params().items()}
    adam_v = {k: np.zeros_like(v) for k, v in model.params().items()}
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0

    history = {
        "initial_train_loss": _mean_loss(model, trn, True, beta_s),
        "epochs_run": 0,
        "val_loss": [],
    }
    best_val = math.inf
    best_weights = model.copy()
    best_epoch = -1

    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate * cfg.lr_decay ** epoch
        order = rng.permutation(len(trn))
        for lo in range(0, len(trn), cfg.batch_size):
            batch = trn[order[lo:lo + cfg.batch_size]]
            batch_loss, grads = _batch_loss_and_grads(model, batch, beta_s)
            if not math.isfinite(batch_loss):
                raise NonFiniteLoss(f"batch loss became {batch_loss} at epoch {epoch}")
            step += 1
            corr1 = 1.0 - b1 ** step
            corr2 = 1.0 - b2 ** step
            for k, g in grads.items():
                mk = adam_m[k]
                vk = adam_v[k]
                mk += (1.0 - b1) * (g - mk)
                vk += (1.0 - b2) * (g * g - vk)
                getattr(model, k)[...] -= lr * (mk / corr1) / (
                    np.sqrt(vk / corr2) + eps
                )
        history["epochs_run"] = epoch + 1
        vl = _mean_loss(model, val, False, beta_s) if n_val else _mean_loss(
            model, trn, False, beta_s
        )
        history["val_loss"].append(vl)
        if vl < best_val:
            best_val = vl
            best_weights = model.copy()
            best_epoch = epoch
        elif epoch - best_epoch >= cfg.patience:
            break

    model = best_weights
    history["final_train_loss"] = _mean_loss(model, trn, True, beta_s)
    history["best_val_loss"] = best_val
    history["best_epoch"] = best_epoch
    return model, history


def save_checkpoint(m: MlpModel, path, *, seed: int = 0, train_loss: float = 0.0,
                    val_loss: float = 0.0) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "arch": list(ARCH),
        "heads": dict(HEADS),
        "weights": [getattr(m, k).tolist() for k in _WEIGHT_KEYS],
        "biases": [getattr(m, k).tolist() for k in _BIAS_KEYS],
        "seed": seed,
        "train_loss": train_loss,
        "val_loss": val_loss,
    }
    with open(path, "w") as f:
        json.dump(payload, f)


def load_checkpoint(path) -> MlpModel:
    """Reload a checkpoint, reproducing the saved model bit-exactly."""
    try:
        with open(path) as f:
            payload = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"checkpoint {path} is truncated or corrupt: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("version") != CHECKPOINT_VERSION:
        raise FormatError(
            f"checkpoint {path} has unsupported version {payload.get('version')!r}"
        )
    if payload.get("arch") != list(ARCH) or payload.get("heads") != HEADS:
        raise FormatError(f"checkpoint {path} does not match the fixed architecture")
    try:
        weights = [np.asarray(w, dtype=np.float64) for w in payload["weights"]]
        biases = [np.asarray(b, dtype=np.float64) for b in payload["biases"]]
        kwargs = dict(zip(_WEIGHT_KEYS, weights)) | dict(zip(_BIAS_KEYS, biases))
        ref = zeros_model()
        for k, v in kwargs.items():
            if v.shape != getattr(ref, k).shape:
                raise FormatError(f"checkpoint {path}: field {k} has shape {v.shape}")
        return MlpModel(**kwargs)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"checkpoint {path} is malformed: {exc}") from exc
