"""Self-supervised cost regressor: texture features in, amplitude spectrum
and traversal cost out.

Architecture: feature(30) -> 64 -> 32 encoder (tanh after each layer), a
linear spectrum head (32 -> 3*(n//2+1)) and a linear scalar cost head.
Training is staged: early epochs update only the encoder and the spectrum
head under a pure spectrum loss (beta = 1), pulling the latent space
toward the vehicle-state domain; from `cost_decoder_start_epoch` the cost
head joins and the loss blends in a smooth-L1 cost term (beta = 0.4).
While frozen, the cost head is untouched bit-for-bit.

Everything is plain numpy with explicit backprop, deterministic under the
config seed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict

import numpy as np

from .nn import Adam, affine, affine_backward, init_affine, tanh_backward, zero_grads

HIDDEN_DIM = 64
LATENT_DIM = 32


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    epochs: int = 150
    batch_size: int = 64
    beta_early: float = 1.0
    beta_late: float = 0.4
    cost_decoder_start_epoch: int = 41
    seed: int = 0

    def __post_init__(self):
        for b in (self.beta_early, self.beta_late):
            if not 0.0 <= b <= 1.0:
                raise ValueError("beta must lie in [0, 1]")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("epochs and batch_size must be >= 1")

    def beta_for_epoch(self, epoch: int) -> float:
        """Loss blend for a 1-based epoch index."""
        return self.beta_early if epoch < self.cost_decoder_start_epoch else self.beta_late


def smooth_l1(x: float) -> float:
    """0.5*x^2 for |x| < 1, |x| - 0.5 otherwise; continuous with matching
    one-sided slopes at |x| = 1."""
    ax = abs(x)
    return 0.5 * x * x if ax < 1.0 else ax - 0.5


def loss(pred_spectrum, true_spectrum, pred_cost: float, true_cost: float,
         beta: float) -> float:
    """beta * squared spectrum residual norm + (1 - beta) * smooth-L1 of
    the cost residual, for one sample."""
    ps = np.asarray(pred_spectrum, dtype=float)
    ts = np.asarray(true_spectrum, dtype=float)
    if ps.shape != ts.shape:
        raise ValueError("spectrum vectors must have the same length")
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    vals = np.concatenate([ps.ravel(), ts.ravel(), [pred_cost, true_cost]])
    if not np.all(np.isfinite(vals)):
        raise ValueError("loss inputs contain non-finite values")
    resid = ps - ts
    l2 = float(resid @ resid)
    return beta * l2 + (1.0 - beta) * smooth_l1(float(pred_cost) - float(true_cost))


class RegressorModel:
    """Encoder plus spectrum/cost heads; parameters are dicts of float64
    arrays (see module docstring for shapes)."""

    GROUPS = ("enc1", "enc2", "spec_head", "cost_head")

    def __init__(self, params: dict[str, dict[str, np.ndarray]],
                 feature_dim: int, spectrum_dim: int):
        self.params = params
        self.feature_dim = feature_dim
        self.spectrum_dim = spectrum_dim

    @classmethod
    def init(cls, feature_dim: int, spectrum_dim: int, seed: int = 0) -> "RegressorModel":
        rng = np.random.default_rng(seed)
        params = {
            "enc1": init_affine(rng, feature_dim, HIDDEN_DIM),
            "enc2": init_affine(rng, HIDDEN_DIM, LATENT_DIM),
            "spec_head": init_affine(rng, LATENT_DIM, spectrum_dim),
            "cost_head": init_affine(rng, LATENT_DIM, 1),
        }
        return cls(params, feature_dim, spectrum_dim)

    def forward(self, x: np.ndarray) -> dict[str, np.ndarray]:
        h1 = np.tanh(affine(x, self.params["enc1"]))
        z = np.tanh(affine(h1, self.params["enc2"]))
        spec = affine(z, self.params["spec_head"])
        cost = affine(z, self.params["cost_head"])[:, 0]
        return {"x": x, "h1": h1, "z": z, "spec": spec, "cost": cost}

    def copy(self) -> "RegressorModel":
        params = {name: {k: v.copy() for k, v in layer.items()}
                  for name, layer in self.params.items()}
        return RegressorModel(params, self.feature_dim, self.spectrum_dim)


def predict(model: RegressorModel, feature: np.ndarray):
    """Forward pass for one feature vector or an (N, dim) batch.

    Returns (spectrum estimate, cost estimate); costs are clamped to
    [0, 1] since the planner consumes normalized costs.
    """
    x = np.atleast_2d(np.asarray(feature, dtype=float))
    if x.shape[1] != model.feature_dim:
        raise ValueError(f"expected features of length {model.feature_dim}, got {x.shape[1]}")
    out = model.forward(x)
    spec = out["spec"]
    cost = np.clip(out["cost"], 0.0, 1.0)
    if np.asarray(feature).ndim == 1:
        return spec[0], float(cost[0])
    return spec, cost


def batch_loss_and_grads(model: RegressorModel, features: np.ndarray,
                         spectra: np.ndarray, costs: np.ndarray, beta: float,
                         train_cost_head: bool):
    """Mean per-sample loss over a batch plus gradients for every group.

    The cost term is omitted from the objective (not just masked from the
    update) while the cost head is frozen, so the encoder sees exactly the
    spectrum loss during the early stage.
    """
    out = model.forward(features)
    b = features.shape[0]
    resid = out["spec"] - spectra
    l2_terms = np.einsum("ij,ij->i", resid, resid)
    x = out["cost"] - costs
    ax = np.abs(x)
    sl1_terms = np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)

    total = beta * l2_terms.mean()
    d_spec = 2.0 * beta * resid / b
    d_cost = np.zeros_like(x)
    if train_cost_head:
        total += (1.0 - beta) * sl1_terms.mean()
        d_cost = (1.0 - beta) * np.where(ax < 1.0, x, np.sign(x)) / b

    grads = zero_grads(model.params)
    p = model.params
    d_z = affine_backward(out["z"], p["spec_head"], d_spec, grads["spec_head"])
    d_z += affine_backward(out["z"], p["cost_head"], d_cost[:, None], grads["cost_head"])
    d_h1 = affine_backward(out["h1"], p["enc2"], tanh_backward(out["z"], d_z), grads["enc2"])
    affine_backward(out["x"], p["enc1"], tanh_backward(out["h1"], d_h1), grads["enc1"])
    return float(total), float(l2_terms.mean()), float(sl1_terms.mean()), grads


def train(features: np.ndarray, spectra: np.ndarray, costs: np.ndarray,
          config: TrainConfig | None = None):
    """Fit the regressor; returns (model, per-epoch log rows).

    Mini-batch Adam with decoupled weight decay; batches reshuffled each
    epoch from a seeded generator. Epochs below
    `cost_decoder_start_epoch` update only the encoder and spectrum head.
    Raises RuntimeError if the loss goes non-finite.
    """
    config = config or TrainConfig()
    features = np.asarray(features, dtype=float)
    spectra = np.asarray(spectra, dtype=float)
    costs = np.asarray(costs, dtype=float)
    n = features.shape[0]
    if n == 0:
        raise ValueError("training dataset is empty")
    if spectra.shape[0] != n or costs.shape[0] != n:
        raise ValueError("features, spectra, and costs must be aligned")
    if not (np.all(np.isfinite(features)) and np.all(np.isfinite(spectra))
            and np.all(np.isfinite(costs))):
        raise ValueError("training data contains non-finite values")

    model = RegressorModel.init(features.shape[1], spectra.shape[1], config.seed)
    opt = Adam(model.params, lr=config.learning_rate, weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed + 1)
    log_rows = []
    for epoch in range(1, config.epochs + 1):
        beta = config.beta_for_epoch(epoch)
        with_cost = epoch >= config.cost_decoder_start_epoch
        active = set(RegressorModel.GROUPS) if with_cost else {"enc1", "enc2", "spec_head"}
        order = rng.permutation(n)
        losses, l2s, sl1s = [], [], []
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            total, l2, sl1, grads = batch_loss_and_grads(
                model, features[batch], spectra[batch], costs[batch], beta, with_cost)
            if not np.isfinite(total):
                raise RuntimeError(f"training diverged at epoch {epoch}: loss={total}")
            opt.step(grads, active=active)
            losses.append(total)
            l2s.append(l2)
            sl1s.append(sl1)
        log_rows.append({"epoch": epoch, "beta": beta,
                         "loss": float(np.mean(losses)),
                         "l2_term": float(np.mean(l2s)),
                         "smooth_l1_term": float(np.mean(sl1s))})
    return model, log_rows


def spectrum_mse(model: RegressorModel, features: np.ndarray, spectra: np.ndarray) -> float:
    """Mean squared spectrum error per axis, averaged over the three axes.

    The concatenated spectrum splits into three equal axis segments; each
    axis's MSE is the mean over samples and bins of the squared residual.
    """
    features = np.asarray(features, dtype=float)
    spectra = np.asarray(spectra, dtype=float)
    if features.shape[0] == 0:
        raise ValueError("evaluation set is empty")
    pred, _ = predict(model, features)
    if pred.shape != spectra.shape:
        raise ValueError("prediction/target spectrum shapes differ")
    bins = spectra.shape[1] // 3
    total = 0.0
    for axis in range(3):
        seg = slice(axis * bins, (axis + 1) * bins)
        diff = pred[:, seg] - spectra[:, seg]
        total += float(np.mean(diff * diff))
    return total / 3.0


# ---------------------------------------------------------------------------
# Persistence


def save_model(model: RegressorModel, path, config: TrainConfig | None = None) -> None:
    """JSON with layer shapes and row-major weights, plus the training
    config echo when given."""
    doc = {
        "feature_dim": model.feature_dim,
        "spectrum_dim": model.spectrum_dim,
        "layers": {name: {"W_shape": list(layer["W"].shape),
                          "W": layer["W"].ravel().tolist(),
                          "b": layer["b"].tolist()}
                   for name, layer in model.params.items()},
    }
    if config is not None:
        doc["config"] = asdict(config)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_model(path) -> RegressorModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    params = {}
    for name, layer in doc["layers"].items():
        shape = tuple(layer["W_shape"])
        params[name] = {"W": np.array(layer["W"], dtype=float).reshape(shape),
                        "b": np.array(layer["b"], dtype=float)}
    return RegressorModel(params, int(doc["feature_dim"]), int(doc["spectrum_dim"]))


def write_train_log(path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "beta", "loss", "l2_term", "smooth_l1_term"])
        for row in rows:
            writer.writerow([row["epoch"], repr(row["beta"]), repr(row["loss"]),
                             repr(row["l2_term"]), repr(row["smooth_l1_term"])])
