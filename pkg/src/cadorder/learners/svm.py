"""One-vs-rest RBF support vector machines trained by sequential minimal optimization."""
from __future__ import annotations

import numpy as np

from .base import SVMParams, TrainedModel, check_training_data

# Hard cap on full sweeps; normal runs stop on the max_passes rule long before.
MAX_SWEEPS = 2000


# Upper bound on the elements of one broadcast difference block in rbf_kernel.
_KERNEL_BLOCK = 1 << 22


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    # Explicit differences rather than |a|^2 + |b|^2 - 2ab, which cancels badly for large inputs.
    out = np.empty((A.shape[0], B.shape[0]))
    step = max(1, _KERNEL_BLOCK // max(1, B.shape[0] * A.shape[1]))
    for lo in range(0, A.shape[0], step):
        diff = A[lo:lo + step, None, :] - B[None, :, :]
        out[lo:lo + step] = np.einsum("ijk,ijk->ij", diff, diff)
    return np.exp(-gamma * out)


def smo_binary(K: np.ndarray, t: np.ndarray, C: float, tol: float, max_passes: int,
               rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Dual coefficients ``alpha`` and bias ``b`` for labels ``t`` in {-1, +1}.

    The decision function is ``sum_j alpha_j t_j K(x_j, x) + b``.  Stops after
    ``max_passes`` consecutive sweeps in which no KKT violator (beyond ``tol``)
    could be improved.
    """
    m = t.shape[0]
    alpha = np.zeros(m)
    b = 0.0
    f = np.zeros(m)  # decision values without the bias

    def step(i: int, j: int) -> bool:
        nonlocal b
        if i == j:
            return False
        ai, aj = alpha[i], alpha[j]
        ti, tj = t[i], t[j]
        Ei, Ej = f[i] + b - ti, f[j] + b - tj
        if ti == tj:
            lo, hi = max(0.0, ai + aj - C), min(C, ai + aj)
        else:
            lo, hi = max(0.0, aj - ai), min(C, C + aj - ai)
        if hi - lo < 1e-12:
            return False
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if eta <= 1e-12:
            return False
        aj_new = min(hi, max(lo, aj + tj * (Ei - Ej) / eta))
        if abs(aj_new - aj) < 1e-10 * (aj_new + aj + 1e-10):
            return False
        ai_new = ai + ti * tj * (aj - aj_new)
        di, dj = ti * (ai_new - ai), tj * (aj_new - aj)
        b1 = b - Ei - di * K[i, i] - dj * K[i, j]
        b2 = b - Ej - di * K[i, j] - dj * K[j, j]
        if 0.0 < ai_new < C:
            b = b1
        elif 0.0 < aj_new < C:
            b = b2
        else:
            b = 0.5 * (b1 + b2)
        alpha[i], alpha[j] = ai_new, aj_new
        f[:] += di * K[i] + dj * K[j]
        return True

    passes = sweeps = 0
    while passes < max_passes and sweeps < MAX_SWEEPS:
        sweeps += 1
        changed = 0
        fallback = rng.permutation(m)
        for i in range(m):
            Ei = f[i] + b - t[i]
            r = t[i] * Ei
            if not ((r < -tol and alpha[i] < C) or (r > tol and alpha[i] > 0)):
                continue
            E = f + b - t
            first = int(np.argmax(np.abs(Ei - E)))
            if step(i, first):
                changed += 1
                continue
            for j in fallback:
                if j != first and step(i, int(j)):
                    changed += 1
                    break
        passes = passes + 1 if changed == 0 else 0
    return alpha, b


def train_svm(X, y, hp: SVMParams, seed: int = 0, n_classes: int | None = None) -> TrainedModel:
    n_classes = int(np.max(y)) + 1 if n_classes is None else n_classes
    X, y = check_training_data(X, y, n_classes)
    present = np.unique(y)
    if present.size < 2:
        raise ValueError("SVM training needs at least two classes")
    K = rbf_kernel(X, X, hp.gamma)
    rng = np.random.default_rng(seed)
    coef = np.zeros((n_classes, X.shape[0]))
    bias = np.zeros(n_classes)
    mask = np.zeros(n_classes, dtype=np.int64)
    for c in present:
        t = np.where(y == c, 1.0, -1.0)
        alpha, b = smo_binary(K, t, hp.C, hp.tolerance, hp.max_passes, rng)
        coef[c] = alpha * t
        bias[c] = b
        mask[c] = 1
    theta = {"X": X.copy(), "coef": coef, "bias": bias, "present": mask}
    return TrainedModel("svm", hp, theta, n_classes, X.shape[1], seed)


def decision_function(model: TrainedModel, rows: np.ndarray) -> np.ndarray:
    th = model.theta
    K = rbf_kernel(rows, th["X"], model.params.gamma)
    dec = K @ th["coef"].T + th["bias"]
    return np.where(th["present"].astype(bool)[None, :], dec, -np.inf)


def predict_svm(model: TrainedModel, rows: np.ndarray) -> np.ndarray:
    return np.argmax(decision_function(model, rows), axis=1).astype(np.int64)
