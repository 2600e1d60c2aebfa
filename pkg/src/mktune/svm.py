"""Soft-margin SVM trained in the dual by sequential minimal optimization.

Binary problems are solved with Platt's two-variable SMO: the outer loop
alternates full sweeps with sweeps over the non-bound multipliers, the first
multiplier of a pair is any KKT violator and the second is chosen to maximise
``|E1 - E2|``. Errors are kept for every training point.

The mixed kernel is indefinite whenever its sigmoid part is active, so the
two-variable subproblem can have non-positive curvature. In that case the
step goes to whichever end of the feasible segment has the larger dual
objective. An indefinite dual also has several local maxima: after Platt's
loop stops, pairs with negative curvature are tried for an improving jump,
and small indefinite problems are re-solved from extra starting points.

Multiclass problems use one-vs-one voting.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np

from .errors import InvalidInputError
from .kernels import KernelParams, gram_matrix, kernel_diagonal

# Above this many training points kernel rows are computed on demand.
FULL_GRAM_LIMIT = 4000

# Minimum multiplier change counted as progress, relative to its magnitude.
_STEP_EPS = 1e-12

# Indefinite problems up to this size are re-solved from several starting
# points and the best dual objective kept; SMO only finds local maxima there.
MULTISTART_LIMIT = 64
_VERTEX_START_LIMIT = 10
_RANDOM_STARTS = 8


@dataclass(frozen=True)
class TrainSettings:
    kkt_tolerance: float = 1e-3
    max_passes: int = 5
    max_iterations: int | None = None  # None -> 10 * n * 100

    def __post_init__(self):
        if not self.kkt_tolerance > 0:
            raise InvalidInputError("kkt_tolerance must be positive")
        if self.max_passes < 1:
            raise InvalidInputError("max_passes must be >= 1")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be >= 1")

    def iteration_cap(self, n: int) -> int:
        if self.max_iterations is not None:
            return self.max_iterations
        return 10 * n * 100


@dataclass(frozen=True, eq=False)
class BinarySVMModel:
    """A trained two-class machine.

    ``dual_coefs[i]`` is ``alpha_i * y_i`` for support vector ``i``, with
    ``classes[0]`` encoded as -1 and ``classes[1]`` as +1.
    """

    support_vectors: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    kernel: KernelParams
    classes: tuple = (-1, 1)
    support_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))
    converged: bool = True
    n_iter: int = 0

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]


@dataclass(frozen=True, eq=False)
class MulticlassSVMModel:
    class_labels: tuple
    pairwise_models: list  # (label_a, label_b, BinarySVMModel)

    @property
    def converged(self) -> bool:
        return all(m.converged for _, _, m in self.pairwise_models)


class _KernelRows:
    """Kernel rows of the training set, precomputed or produced on demand."""

    def __init__(self, x, p: KernelParams):
        self.x = x
        self.p = p
        self.diag = kernel_diagonal(x, p)
        if x.shape[0] <= FULL_GRAM_LIMIT:
            self.full = gram_matrix(x, x, p)
        else:
            self.full = None
            self._cache = {}

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        r = self._cache.get(i)
        if r is None:
            if len(self._cache) >= 2 * FULL_GRAM_LIMIT:
                self._cache.pop(next(iter(self._cache)))
            r = gram_matrix(self.x[i:i + 1], self.x, self.p)[0]
            self._cache[i] = r
        return r

    def entry(self, i: int, j: int) -> float:
        if i == j:
            return float(self.diag[i])
        return float(self.row(i)[j])


def dual_objective(alpha, y, gram) -> float:
    """sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij."""
    alpha = np.asarray(alpha, dtype=np.float64)
    ay = alpha * np.asarray(y, dtype=np.float64)
    return float(alpha.sum() - 0.5 * ay @ np.asarray(gram) @ ay)


class _SMO:
    def __init__(self, x, y, p: KernelParams, s: TrainSettings, kernel_rows=None):
        self.x = x
        self.y = y
        self.n = x.shape[0]
        self.C = p.c
        self.tol = s.kkt_tolerance
        self.max_passes = s.max_passes
        self.max_iter = s.iteration_cap(self.n)
        self.K = kernel_rows if kernel_rows is not None else _KernelRows(x, p)
        self.alpha = np.zeros(self.n)
        # F_i = sum_j alpha_j y_j K_ij - y_i, so E_i = F_i + b
        self.F = -y.astype(np.float64)
        self.b = 0.0
        self.non_bound = np.zeros(self.n, dtype=bool)
        self.n_iter = 0

    def warm_start(self, alpha):
        """Restart from a feasible point (requires the full Gram matrix)."""
        self.alpha = alpha.copy()
        self.F = self.K.full @ (alpha * self.y) - self.y
        self.non_bound = (alpha > 0.0) & (alpha < self.C)
        self.b = self.final_bias()

    def objective(self) -> float:
        return float(self.alpha.sum() - 0.5 * np.dot(self.alpha * self.y, self.F + self.y))

    # -- two-variable step -------------------------------------------------
    def take_step(self, i1: int, i2: int) -> bool:
        if i1 == i2:
            return False
        C, y, alpha = self.C, self.y, self.alpha
        a1, a2 = alpha[i1], alpha[i2]
        y1, y2 = y[i1], y[i2]
        s = y1 * y2
        if y1 != y2:
            L, H = max(0.0, a2 - a1), min(C, C + a2 - a1)
        else:
            L, H = max(0.0, a1 + a2 - C), min(C, a1 + a2)
        if H - L <= _STEP_EPS * C:
            return False
        k11 = self.K.entry(i1, i1)
        k22 = self.K.entry(i2, i2)
        k12 = self.K.entry(i1, i2)
        eta = k11 + k22 - 2.0 * k12
        # Along the segment the dual gains  g*t - eta*t^2/2  for a2 -> a2 + t.
        g = y2 * (self.F[i1] - self.F[i2])
        if eta > 0:
            a2_new = min(max(a2 + g / eta, L), H)
        else:
            gain_l = g * (L - a2) - 0.5 * eta * (L - a2) ** 2
            gain_h = g * (H - a2) - 0.5 * eta * (H - a2) ** 2
            if gain_l > gain_h + _STEP_EPS:
                a2_new = L
            elif gain_h > gain_l + _STEP_EPS:
                a2_new = H
            else:
                a2_new = a2
        if abs(a2_new - a2) < _STEP_EPS * (a2_new + a2 + _STEP_EPS):
            return False
        a1_new = a1 + s * (a2 - a2_new)
        # snap to the box so free / bound status is exact
        a1_new = self._snap(a1_new)
        a2_new = self._snap(a2_new)

        d1 = y1 * (a1_new - a1)
        d2 = y2 * (a2_new - a2)
        E1 = self.F[i1] + self.b
        E2 = self.F[i2] + self.b
        b1 = self.b - E1 - d1 * k11 - d2 * k12
        b2 = self.b - E2 - d1 * k12 - d2 * k22
        if 0.0 < a1_new < C:
            self.b = b1
        elif 0.0 < a2_new < C:
            self.b = b2
        else:
            self.b = 0.5 * (b1 + b2)

        self.F += d1 * self.K.row(i1) + d2 * self.K.row(i2)
        alpha[i1], alpha[i2] = a1_new, a2_new
        self.non_bound[i1] = 0.0 < a1_new < C
        self.non_bound[i2] = 0.0 < a2_new < C
        self.n_iter += 1
        return True

    def _snap(self, a: float) -> float:
        C = self.C
        if a <= _STEP_EPS * C:
            return 0.0
        if a >= C * (1.0 - _STEP_EPS):
            return C
        return a

    # -- Platt's heuristics -----------------------------------------------
    def violates(self, i: int) -> bool:
        r = (self.F[i] + self.b) * self.y[i]
        a = self.alpha[i]
        return (r < -self.tol and a < self.C) or (r > self.tol and a > 0.0)

    def examine(self, i2: int) -> int:
        if not self.violates(i2):
            return 0
        n = self.n
        nb = np.flatnonzero(self.non_bound)
        if nb.size > 1:
            gaps = np.abs(self.F[nb] - self.F[i2])
            i1 = int(nb[np.argmax(gaps)])
            if self.take_step(i1, i2):
                return 1
        # deterministic scan order starting just after i2
        if nb.size:
            start = np.searchsorted(nb, i2, side="right")
            for i1 in np.concatenate([nb[start:], nb[:start]]):
                if self.take_step(int(i1), i2):
                    return 1
        for k in range(1, n):
            i1 = (i2 + k) % n
            if self.take_step(i1, i2):
                return 1
        return 0

    # -- bias and KKT -----------------------------------------------------
    def final_bias(self) -> float:
        """Average over free multipliers, else the midpoint of the feasible interval."""
        alpha, y, C = self.alpha, self.y, self.C
        g = self.F + y  # decision value without bias
        free = (alpha > 0.0) & (alpha < C)
        if free.any():
            return float(np.mean(y[free] - g[free]))
        # alpha=0 needs y*f >= 1, alpha=C needs y*f <= 1
        at_zero = alpha == 0.0
        lower_mask = (at_zero & (y > 0)) | (~at_zero & (y < 0))
        upper_mask = ~lower_mask
        bounds = y - g
        lo = bounds[lower_mask].max() if lower_mask.any() else None
        hi = bounds[upper_mask].min() if upper_mask.any() else None
        if lo is None:
            return float(hi)
        if hi is None:
            return float(lo)
        return float(0.5 * (lo + hi))

    def kkt_satisfied(self) -> bool:
        margins = self.y * (self.F + self.y + self.b)
        return bool(np.all(kkt_residuals(self.alpha, margins, self.C) <= self.tol))

    # -- escape from indefinite saddles ------------------------------------
    def escape(self) -> bool:
        """Take the best improving pairwise move along a negative-curvature segment.

        A KKT point of an indefinite dual can still be improved by moving a
        pair whose curvature is negative all the way to an end of its
        segment. Platt's loop never tries such pairs because neither member
        violates KKT.
        """
        C, y, alpha = self.C, self.y, self.alpha
        diag = self.K.diag
        tol_gain = self.tol * max(1.0, C) * 1e-3
        for i2 in range(self.n):
            k2 = self.K.row(i2)
            eta = diag + diag[i2] - 2.0 * k2
            cand = eta < 0.0
            cand[i2] = False
            if not cand.any():
                continue
            a2 = alpha[i2]
            same = y == y[i2]
            L = np.where(same, np.maximum(0.0, alpha + a2 - C), np.maximum(0.0, a2 - alpha))
            H = np.where(same, np.minimum(C, alpha + a2), np.minimum(C, C + a2 - alpha))
            g = y[i2] * (self.F - self.F[i2])
            tl, th = L - a2, H - a2
            gain = np.maximum(g * tl - 0.5 * eta * tl * tl, g * th - 0.5 * eta * th * th)
            gain[~cand] = -np.inf
            i1 = int(np.argmax(gain))
            if gain[i1] > tol_gain and self.take_step(i1, i2):
                return True
        return False

    # -- outer loop -------------------------------------------------------
    def run(self) -> bool:
        converged = self._platt()
        if self.K.full is None:
            return converged
        for _ in range(self.max_passes * self.n):
            if self.n_iter >= self.max_iter or not self.escape():
                break
            converged = self._platt()
        return converged

    def _platt(self) -> bool:
        examine_all = True
        idle_passes = 0
        while self.n_iter < self.max_iter:
            changed = 0
            if examine_all:
                candidates = range(self.n)
            else:
                candidates = np.flatnonzero(self.non_bound).tolist()
            for i in candidates:
                changed += self.examine(i)
                if self.n_iter >= self.max_iter:
                    break
            if examine_all:
                if changed == 0:
                    self.b = self.final_bias()
                    if self.kkt_satisfied():
                        return True
                    idle_passes += 1
                    if idle_passes >= self.max_passes:
                        return False
                    continue
                idle_passes = 0
                examine_all = False
            elif changed == 0:
                examine_all = True
        self.b = self.final_bias()
        return self.kkt_satisfied()


def kkt_residuals(alpha, margins, C) -> np.ndarray:
    """Per-point violation of the soft-margin KKT conditions.

    ``margins`` holds y_i f(x_i). The residual is how far a point is from
    satisfying the condition that applies to its multiplier, zero when it does.
    """
    alpha = np.asarray(alpha)
    margins = np.asarray(margins)
    res = np.zeros_like(margins, dtype=np.float64)
    at_zero = alpha <= 0.0
    at_c = alpha >= C
    free = ~(at_zero | at_c)
    res[at_zero] = np.maximum(0.0, 1.0 - margins[at_zero])
    res[at_c] = np.maximum(0.0, margins[at_c] - 1.0)
    res[free] = np.abs(margins[free] - 1.0)
    return res


def _as_features(features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
        raise InvalidInputError(f"features must be a non-empty 2-D matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("features contain non-finite values")
    return x


def _is_indefinite(rows: _KernelRows) -> bool:
    if rows.full is None or rows.full.shape[0] > MULTISTART_LIMIT:
        return False
    scale = max(1.0, float(np.abs(rows.diag).max()))
    return bool(np.linalg.eigvalsh(rows.full)[0] < -1e-10 * scale)


def _starting_points(y, C):
    """Feasible dual points for restarts: balanced {0, C} vertices, then seeded random points."""
    n = y.shape[0]
    pos = y > 0
    if n <= _VERTEX_START_LIMIT:
        for bits in product((0.0, 1.0), repeat=n):
            b = np.array(bits)
            if b.any() and b[pos].sum() == b[~pos].sum():
                yield b * C
    rng = np.random.default_rng(n)
    for _ in range(_RANDOM_STARTS):
        a = rng.uniform(0.0, C, size=n)
        sp, sn = a[pos].sum(), a[~pos].sum()
        if sp > sn:
            a[pos] *= sn / sp
        else:
            a[~pos] *= sp / sn
        yield a


def train_binary(features, labels, p: KernelParams, s: TrainSettings | None = None,
                 classes=(-1, 1)) -> BinarySVMModel:
    """Train a binary soft-margin SVM.

    Parameters
    ----------
    features : (n, d) array
    labels : (n,) array of -1 / +1
    p : KernelParams
        Kernel parameters; ``p.c`` is the penalty C.
    s : TrainSettings, optional
    classes : pair
        Original labels for -1 and +1, carried into the model.

    Returns
    -------
    BinarySVMModel
        ``converged`` is False when the iteration or pass cap stopped the
        solver before every KKT condition held within tolerance.
    """
    s = s or TrainSettings()
    x = _as_features(features)
    y = np.asarray(labels, dtype=np.float64).ravel()
    if y.shape[0] != x.shape[0]:
        raise InvalidInputError(f"{x.shape[0]} feature rows but {y.shape[0]} labels")
    if not np.all((y == 1.0) | (y == -1.0)):
        raise InvalidInputError("binary labels must be -1 or +1")
    if not ((y > 0).any() and (y < 0).any()):
        raise InvalidInputError("training data must contain both classes")

    smo = _SMO(x, y, p, s)
    converged = smo.run()
    n_iter = smo.n_iter
    if p.mixed_ratio < 1.0 and _is_indefinite(smo.K):
        best_obj = smo.objective()
        for alpha0 in _starting_points(y, p.c):
            trial = _SMO(x, y, p, s, kernel_rows=smo.K)
            trial.warm_start(alpha0)
            ok = trial.run()
            n_iter += trial.n_iter
            obj = trial.objective()
            if obj > best_obj + _STEP_EPS * max(1.0, abs(best_obj)):
                smo, converged, best_obj = trial, ok, obj
    sv = np.flatnonzero(smo.alpha > 0.0)
    return BinarySVMModel(
        support_vectors=x[sv].copy(),
        dual_coefs=(smo.alpha[sv] * y[sv]),
        bias=float(smo.b),
        kernel=p,
        classes=tuple(classes),
        support_indices=sv,
        converged=converged,
        n_iter=n_iter,
    )


def decision_values(m: BinarySVMModel, features) -> np.ndarray:
    """Decision values for every row of ``features``."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if m.support_vectors.shape[0] == 0:
        if x.ndim != 2:
            raise InvalidInputError("features must be 2-D")
        return np.full(x.shape[0], m.bias)
    if x.ndim != 2 or x.shape[1] != m.n_features:
        raise InvalidInputError(
            f"expected {m.n_features} features, got shape {x.shape}"
        )
    return gram_matrix(x, m.support_vectors, m.kernel) @ m.dual_coefs + m.bias


def decision_function(m: BinarySVMModel, x) -> float:
    """sum_i dual_coefs[i] * K(sv_i, x) + bias."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError("decision_function takes a single feature vector")
    if m.support_vectors.shape[0] and x.shape[0] != m.n_features:
        raise InvalidInputError(f"expected {m.n_features} features, got {x.shape[0]}")
    return float(decision_values(m, x)[0])


def predict_binary(m: BinarySVMModel, features) -> np.ndarray:
    """Original class labels; positive decision values map to ``classes[1]``."""
    f = decision_values(m, features)
    return np.where(f > 0.0, m.classes[1], m.classes[0])


def train_ovo(features, labels, p: KernelParams, s: TrainSettings | None = None,
              n_jobs: int = 1) -> MulticlassSVMModel:
    """One binary machine per unordered class pair, each on that pair's rows only.

    Class labels are sorted; for the pair (a, b) with a before b, ``a`` is
    encoded as -1 and ``b`` as +1. ``n_jobs > 1`` trains pairs on a thread
    pool, which gives the same models as serial training.
    """
    x = _as_features(features)
    labels = np.asarray(labels).ravel()
    if labels.shape[0] != x.shape[0]:
        raise InvalidInputError(f"{x.shape[0]} feature rows but {labels.shape[0]} labels")
    class_labels = tuple(np.unique(labels).tolist())
    if len(class_labels) < 2:
        raise InvalidInputError("need at least two classes")

    def fit_pair(pair):
        a, b = pair
        mask = (labels == a) | (labels == b)
        y = np.where(labels[mask] == b, 1.0, -1.0)
        return a, b, train_binary(x[mask], y, p, s, classes=(a, b))

    pairs = list(combinations(class_labels, 2))
    if n_jobs > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            models = list(pool.map(fit_pair, pairs))
    else:
        models = [fit_pair(pr) for pr in pairs]
    return MulticlassSVMModel(class_labels=class_labels, pairwise_models=models)


def vote_counts(m: MulticlassSVMModel, features) -> np.ndarray:
    """(n, k) pairwise vote tallies, columns in ``class_labels`` order."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    index = {c: i for i, c in enumerate(m.class_labels)}
    votes = np.zeros((x.shape[0], len(m.class_labels)), dtype=np.int64)
    rows = np.arange(x.shape[0])
    for a, b, model in m.pairwise_models:
        winner = np.where(decision_values(model, x) > 0.0, index[b], index[a])
        np.add.at(votes, (rows, winner), 1)
    return votes


def predict_many(m: MulticlassSVMModel, features) -> np.ndarray:
    votes = vote_counts(m, features)
    # argmax returns the first maximum: ties go to the earliest class
    return np.asarray(m.class_labels, dtype=object)[np.argmax(votes, axis=1)]


def predict(m: MulticlassSVMModel, x):
    """Majority-vote label for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError("predict takes a single feature vector")
    return predict_many(m, x[None, :])[0]


def _checked_eval(m, features, labels):
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels).ravel()
    if x.ndim != 2 or x.shape[0] == 0:
        raise InvalidInputError("evaluation set must be a non-empty 2-D matrix")
    if labels.shape[0] != x.shape[0]:
        raise InvalidInputError(f"{x.shape[0]} feature rows but {labels.shape[0]} labels")
    return predict_many(m, x), labels


def accuracy(m: MulticlassSVMModel, features, labels) -> float:
    """Fraction of rows predicted correctly."""
    pred, labels = _checked_eval(m, features, labels)
    return float(np.mean(pred == labels.astype(object)))


def class_averaged_accuracy(m: MulticlassSVMModel, features, labels) -> float:
    """Unweighted mean of per-class recall over the model's classes."""
    pred, labels = _checked_eval(m, features, labels)
    labels = labels.astype(object)
    recalls = []
    for c in m.class_labels:
        mask = labels == c
        if not mask.any():
            raise InvalidInputError(f"class {c!r} has no examples in the evaluation set")
        recalls.append(np.mean(pred[mask] == c))
    return float(np.mean(recalls))
