"""Toy classifiers with hand-written derivatives.

Both models expose cross-entropy training loss plus a margin loss, with
gradients w.r.t. parameters and inputs, input Hessian-vector products, and
the mixed parameter/input second-order products the implicit gradient needs.
Everything is differentiated by hand (ReLU masks and argmax indices treated
as locally constant, which is exact almost everywhere); the finite-difference
audit in the problem module is the correctness oracle for all of it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - np.max(z, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def _cross_entropy(z: np.ndarray, y: int) -> float:
    zs = z - np.max(z)
    return float(np.log(np.sum(np.exp(zs))) - zs[y])


@dataclass
class SoftmaxRegression:
    """Linear logits: z = W (x + delta) + b."""

    p: int
    n_classes: int
    theta: np.ndarray | None = None

    kind = "softmax"

    @property
    def dim(self) -> int:
        return self.n_classes * self.p + self.n_classes

    def init_theta(self, rng: np.random.Generator, scale: float = 0.1) -> np.ndarray:
        return np.concatenate([
            rng.normal(0.0, scale, size=self.n_classes * self.p),
            np.zeros(self.n_classes),
        ])

    def _unpack(self, theta):
        C, p = self.n_classes, self.p
        return theta[: C * p].reshape(C, p), theta[C * p:]

    def logits(self, theta, x):
        W, b = self._unpack(theta)
        return x @ W.T + b if x.ndim == 2 else W @ x + b

    def loss(self, theta, x, y) -> float:
        return _cross_entropy(self.logits(theta, x), int(y))

    def loss_grad_theta(self, theta, x, y):
        W, b = self._unpack(theta)
        ds = _softmax(W @ x + b)
        ds[int(y)] -= 1.0
        return np.concatenate([np.outer(ds, x).ravel(), ds])

    def loss_grad_input(self, theta, x, y):
        W, b = self._unpack(theta)
        ds = _softmax(W @ x + b)
        ds[int(y)] -= 1.0
        return W.T @ ds

    def loss_hess_input_vec(self, theta, x, y, v):
        W, b = self._unpack(theta)
        s = _softmax(W @ x + b)
        w = W @ v
        pw = s * w - s * float(s @ w)
        return W.T @ pw

    def loss_cross_vec(self, theta, x, y, v):
        # gradient w.r.t. theta of (grad_input loss) . v
        W, b = self._unpack(theta)
        s = _softmax(W @ x + b)
        ds = s.copy()
        ds[int(y)] -= 1.0
        w = W @ v
        pw = s * w - s * float(s @ w)
        gW = np.outer(ds, v) + np.outer(pw, x)
        return np.concatenate([gW.ravel(), pw])

    def margin(self, theta, x, y) -> float:
        z = self.logits(theta, x)
        others = np.delete(z, int(y))
        return float(z[int(y)] - np.max(others))

    def _margin_dir(self, z, y):
        u = np.zeros_like(z)
        u[int(y)] = 1.0
        masked = z.copy()
        masked[int(y)] = -np.inf
        u[int(np.argmax(masked))] = -1.0
        return u

    def margin_grad_input(self, theta, x, y):
        W, b = self._unpack(theta)
        u = self._margin_dir(W @ x + b, y)
        return W.T @ u

    def margin_grad_theta(self, theta, x, y):
        W, b = self._unpack(theta)
        u = self._margin_dir(W @ x + b, y)
        return np.concatenate([np.outer(u, x).ravel(), u])

    def margin_cross_vec(self, theta, x, y, v):
        W, b = self._unpack(theta)
        u = self._margin_dir(W @ x + b, y)
        return np.concatenate([np.outer(u, v).ravel(), np.zeros(self.n_classes)])

    def predict(self, theta, X):
        return np.argmax(self.logits(theta, np.atleast_2d(X)), axis=1)

    def loss_grad_input_batch(self, theta, X, Y):
        W, b = self._unpack(theta)
        S = _softmax(X @ W.T + b)
        S[np.arange(X.shape[0]), Y] -= 1.0
        return S @ W

    def mean_loss_and_grad_theta(self, theta, X, Y):
        W, b = self._unpack(theta)
        Z = X @ W.T + b
        Zs = Z - Z.max(axis=1, keepdims=True)
        lse = np.log(np.exp(Zs).sum(axis=1))
        losses = lse - Zs[np.arange(X.shape[0]), Y]
        S = _softmax(Z)
        S[np.arange(X.shape[0]), Y] -= 1.0
        gW = S.T @ X / X.shape[0]
        gb = S.mean(axis=0)
        return float(losses.mean()), np.concatenate([gW.ravel(), gb])


@dataclass
class ReluMlp:
    """One hidden ReLU layer: z = W2 relu(W1 (x + delta) + b1) + b2."""

    p: int
    n_classes: int
    hidden: int
    theta: np.ndarray | None = None

    kind = "mlp"

    @property
    def dim(self) -> int:
        H, C, p = self.hidden, self.n_classes, self.p
        return H * p + H + C * H + C

    def init_theta(self, rng: np.random.Generator, scale: float = 0.5) -> np.ndarray:
        H, C, p = self.hidden, self.n_classes, self.p
        return np.concatenate([
            rng.normal(0.0, scale / np.sqrt(p), size=H * p),
            rng.normal(0.0, 0.01, size=H),
            rng.normal(0.0, scale / np.sqrt(H), size=C * H),
            np.zeros(C),
        ])

    def _unpack(self, theta):
        H, C, p = self.hidden, self.n_classes, self.p
        o1 = H * p
        o2 = o1 + H
        o3 = o2 + C * H
        return (theta[:o1].reshape(H, p), theta[o1:o2],
                theta[o2:o3].reshape(C, H), theta[o3:])

    def _pack(self, gW1, gb1, gW2, gb2):
        return np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2])

    def _forward(self, theta, x):
        W1, b1, W2, b2 = self._unpack(theta)
        z1 = W1 @ x + b1
        mask = (z1 > 0).astype(float)
        a = mask * z1
        z2 = W2 @ a + b2
        return W1, b1, W2, b2, z1, mask, a, z2

    def logits(self, theta, x):
        if x.ndim == 2:
            W1, b1, W2, b2 = self._unpack(theta)
            A = np.maximum(x @ W1.T + b1, 0.0)
            return A @ W2.T + b2
        return self._forward(theta, x)[-1]

    def loss(self, theta, x, y) -> float:
        return _cross_entropy(self.logits(theta, x), int(y))

    def loss_grad_theta(self, theta, x, y):
        W1, b1, W2, b2, z1, mask, a, z2 = self._forward(theta, x)
        ds = _softmax(z2)
        ds[int(y)] -= 1.0
        dz1 = mask * (W2.T @ ds)
        return self._pack(np.outer(dz1, x), dz1, np.outer(ds, a), ds)

    def loss_grad_input(self, theta, x, y):
        W1, b1, W2, b2, z1, mask, a, z2 = self._forward(theta, x)
        ds = _softmax(z2)
        ds[int(y)] -= 1.0
        return W1.T @ (mask * (W2.T @ ds))

    def loss_hess_input_vec(self, theta, x, y, v):
        # only the softmax curvature survives almost everywhere; ReLU kinks
        # contribute nothing on the linear pieces
        W1, b1, W2, b2, z1, mask, a, z2 = self._forward(theta, x)
        s = _softmax(z2)
        tm = mask * (W1 @ v)
        w2 = W2 @ tm
        pw = s * w2 - s * float(s @ w2)
        return W1.T @ (mask * (W2.T @ pw))

    def loss_cross_vec(self, theta, x, y, v):
        W1, b1, W2, b2, z1, mask, a, z2 = self._forward(theta, x)
        s = _softmax(z2)
        ds = s.copy()
        ds[int(y)] -= 1.0
        dz1 = mask * (W2.T @ ds)
        tm = mask * (W1 @ v)
        w2 = W2 @ tm
        pw = s * w2 - s * float(s @ w2)
        back = mask * (W2.T @ pw)
        gW1 = np.outer(dz1, v) + np.outer(back, x)
        gW2 = np.outer(ds, tm) + np.outer(pw, a)
        return self._pack(gW1, back, gW2, pw)

    def margin(self, theta, x, y) -> float:
        z = self.logits(theta, x)
        others = np.delete(z, int(y))
        return float(z[int(y)] - np.max(others))

    def _margin_dir(self, z, y):
        u = np.zeros_like(z)
        u[int(y)] = 1.0
        masked = z.copy()
        masked[int(y)] = -np.inf
        u[int(np.argmax(masked))] = -1.0
        return u

    def margin_grad_input(self, theta, x, y):
        W1, b1, W2, b2, z1, mask, a, z2 = self._forward(theta, x)
        u = self._margin_dir(z2, y)
        return W1.T @ (mask * (W2.T @ u))

    def margin_grad_theta(self, theta, x, y):
        W1, b1, W2, b2, z1, mask, a, z2 = self._forward(theta, x)
        u = self._margin_dir(z2, y)
        dz1 = mask * (W2.T @ u)
        return self._pack(np.outer(dz1, x), dz1, np.outer(u, a), u)

    def margin_cross_vec(self, theta, x, y, v):
        W1, b1, W2, b2, z1, mask, a, z2 = self._forward(theta, x)
        u = self._margin_dir(z2, y)
        dz1 = mask * (W2.T @ u)
        tm = mask * (W1 @ v)
        gW1 = np.outer(dz1, v)
        gW2 = np.outer(u, tm)
        return self._pack(gW1, np.zeros_like(b1), gW2, np.zeros_like(b2))

    def predict(self, theta, X):
        return np.argmax(self.logits(theta, np.atleast_2d(X)), axis=1)

    def loss_grad_input_batch(self, theta, X, Y):
        W1, b1, W2, b2 = self._unpack(theta)
        Z1 = X @ W1.T + b1
        mask = (Z1 > 0).astype(float)
        A = mask * Z1
        S = _softmax(A @ W2.T + b2)
        S[np.arange(X.shape[0]), Y] -= 1.0
        return (mask * (S @ W2)) @ W1

    def mean_loss_and_grad_theta(self, theta, X, Y):
        W1, b1, W2, b2 = self._unpack(theta)
        N = X.shape[0]
        Z1 = X @ W1.T + b1
        mask = (Z1 > 0).astype(float)
        A = mask * Z1
        Z2 = A @ W2.T + b2
        Zs = Z2 - Z2.max(axis=1, keepdims=True)
        lse = np.log(np.exp(Zs).sum(axis=1))
        losses = lse - Zs[np.arange(N), Y]
        S = _softmax(Z2)
        S[np.arange(N), Y] -= 1.0
        dZ1 = mask * (S @ W2)
        gW1 = dZ1.T @ X / N
        gb1 = dZ1.mean(axis=0)
        gW2 = S.T @ A / N
        gb2 = S.mean(axis=0)
        return float(losses.mean()), self._pack(gW1, gb1, gW2, gb2)


def make_classifier(kind: str, p: int, n_classes: int, hidden: int = 16):
    if kind == "softmax":
        return SoftmaxRegression(p=p, n_classes=n_classes)
    if kind == "mlp":
        return ReluMlp(p=p, n_classes=n_classes, hidden=hidden)
    raise ValueError(f"unknown classifier kind {kind!r}")


def save_model(model, theta: np.ndarray, path: "str | Path"):
    payload = {
        "kind": model.kind,
        "p": model.p,
        "n_classes": model.n_classes,
        "hidden": getattr(model, "hidden", None),
        "theta": [float(v) for v in theta],
    }
    Path(path).write_text(json.dumps(payload))


def load_model(path: "str | Path"):
    payload = json.loads(Path(path).read_text())
    model = make_classifier(payload["kind"], payload["p"], payload["n_classes"],
                            hidden=payload.get("hidden") or 16)
    theta = np.array(payload["theta"], dtype=float)
    model.theta = theta
    return model, theta
