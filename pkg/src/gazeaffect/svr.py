"""Epsilon-insensitive support vector regression trained by SMO.

The dual is solved in its 2n-variable form: z = (alpha, alpha*), both boxed in
[0, C], with sum(alpha) = sum(alpha*). Each step picks the maximal violating
pair and moves the two coefficients analytically. The learned function is

    f(x) = sum_i beta_i K(sv_i, norm(x)) + bias,   beta_i = alpha_i - alpha*_i

on inputs min-max scaled to [0, 1] with the training ranges.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, EmptyTrainingSet, ModelFormatError, TooFewInstances

log = logging.getLogger(__name__)

FORMAT_HEADER = "gazeaffect-svr-model 1"
KERNELS = ("linear",)
NORMALIZATIONS = ("min_max_0_1",)
DEFAULT_MAX_ITERATIONS = 1_000_000
_TAU = 1e-12
_BOUND_SNAP = 1e-12


@dataclass(frozen=True)
class SvrHyperparams:
    c: float
    epsilon: float = 1e-3
    tolerance: float = 1e-3
    kernel: str = "linear"
    normalization: str = "min_max_0_1"

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c > 0):
            raise ValueError(f"C must be finite and > 0, got {self.c}")
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if self.kernel not in KERNELS:
            raise ValueError(f"unsupported kernel {self.kernel!r}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unsupported normalization {self.normalization!r}")


@dataclass(frozen=True)
class NormParams:
    minimum: np.ndarray
    maximum: np.ndarray

    @property
    def dimension(self):
        return self.minimum.size

    def transform(self, features):
        x = np.asarray(features, dtype=float)
        if x.shape[-1] != self.dimension:
            raise DimensionMismatch(f"expected {self.dimension} features, got {x.shape[-1]}")
        span = self.maximum - self.minimum
        flat = span == 0
        out = (x - self.minimum) / np.where(flat, 1.0, span)
        return np.where(flat, 0.0, out)


def normalize_fit(train_features):
    x = np.asarray(train_features, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptyTrainingSet("cannot fit normalization on zero instances")
    lo, hi = x.min(axis=0), x.max(axis=0)
    lo.setflags(write=False)
    hi.setflags(write=False)
    return NormParams(lo, hi)


@dataclass(frozen=True)
class TrainMeta:
    n_train: int
    objective: float
    iterations: int
    converged: bool

    @property
    def status(self):
        return "Converged" if self.converged else "IterationCapped"


@dataclass(frozen=True, eq=False)
class SvrModel:
    support_vectors: np.ndarray  # normalized, one row per support vector
    betas: np.ndarray
    bias: float
    norm_params: NormParams
    hyperparams: SvrHyperparams
    train_meta: TrainMeta

    @property
    def dimension(self):
        return self.norm_params.dimension

    @property
    def weights(self):
        """Primal weight vector on normalized inputs (linear kernel)."""
        return self.betas @ self.support_vectors if self.betas.size else np.zeros(self.dimension)

    def predict(self, features):
        """Prediction for one vector or a batch (rows)."""
        x = np.asarray(features, dtype=float)
        single = x.ndim == 1
        z = self.norm_params.transform(np.atleast_2d(x))
        # row-wise reduction: a row's value does not depend on its neighbours
        out = (z * self.weights).sum(axis=1) + self.bias
        return float(out[0]) if single else out

    def __eq__(self, other):
        if not isinstance(other, SvrModel):
            return NotImplemented
        return (
            np.array_equal(self.support_vectors, other.support_vectors)
            and np.array_equal(self.betas, other.betas)
            and self.bias == other.bias
            and np.array_equal(self.norm_params.minimum, other.norm_params.minimum)
            and np.array_equal(self.norm_params.maximum, other.norm_params.maximum)
            and self.hyperparams == other.hyperparams
            and self.train_meta == other.train_meta
        )


def predict(model, features):
    return model.predict(features)


@dataclass
class SmoResult:
    beta: np.ndarray
    bias: float
    objective: float  # dual objective, maximization form
    iterations: int
    converged: bool
    max_violation: float
    trace: list = field(default_factory=list)


def dual_objective(beta, kernel, y, epsilon):
    """-1/2 b'Kb - eps*|b|_1 + y'b."""
    return float(-0.5 * beta @ kernel @ beta - epsilon * np.abs(beta).sum() + y @ beta)


def smo_solve(kernel, y, c, epsilon=1e-3, tolerance=1e-3, max_iterations=DEFAULT_MAX_ITERATIONS, trace=False):
    """Solve the epsilon-SVR dual for a precomputed kernel matrix.

    Minimizes 1/2 z'Qz + p'z over the 2n variables, Q_tu = s_t s_u K, with
    s = (+1..., -1...), p = (eps - y, eps + y). Stops when the maximal KKT
    violation m - M falls to ``tolerance`` or after ``max_iterations`` steps.
    With ``trace`` the dual objective after every step is recorded.
    """
    kernel = np.asarray(kernel, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    s = np.concatenate((np.ones(n), -np.ones(n)))
    z = np.zeros(2 * n)
    grad = np.concatenate((epsilon - y, epsilon + y))
    p = grad.copy()
    diag = np.diag(kernel)
    idx = np.arange(2 * n) % n
    history = []

    it = 0
    converged = False
    gap = math.inf
    while True:
        score = -s * grad
        up = np.where(s > 0, z < c, z > 0)
        low = np.where(s > 0, z > 0, z < c)
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        gap = score[i] - score[j] if up[i] and low[j] else 0.0
        if gap <= tolerance:
            converged = True
            break
        if it >= max_iterations:
            break
        it += 1

        ki, kj = idx[i], idx[j]
        q_ij = s[i] * s[j] * kernel[ki, kj]
        old_i, old_j = z[i], z[j]
        if s[i] != s[j]:
            quad = max(diag[ki] + diag[kj] + 2.0 * q_ij, _TAU)
            delta = (-grad[i] - grad[j]) / quad
            diff = z[i] - z[j]
            zi, zj = z[i] + delta, z[j] + delta
            if diff > 0:
                if zj < 0:
                    zj, zi = 0.0, diff
            elif zi < 0:
                zi, zj = 0.0, -diff
            if diff > 0:
                if zi > c:
                    zi, zj = c, c - diff
            elif zj > c:
                zj, zi = c, c + diff
        else:
            quad = max(diag[ki] + diag[kj] - 2.0 * q_ij, _TAU)
            delta = (grad[i] - grad[j]) / quad
            total = z[i] + z[j]
            zi, zj = z[i] - delta, z[j] + delta
            if total > c:
                if zi > c:
                    zi, zj = c, total - c
                if zj > c:
                    zj, zi = c, total - c
            else:
                if zj < 0:
                    zj, zi = 0.0, total
                if zi < 0:
                    zi, zj = 0.0, total
        z[i], z[j] = zi, zj
        di, dj = zi - old_i, zj - old_j
        col_i = kernel[ki] * (s[i] * di)
        col_j = kernel[kj] * (s[j] * dj)
        step = col_i + col_j
        grad[:n] += step
        grad[n:] -= step
        if trace:
            history.append(-0.5 * float(z @ (grad + p)))

    # rounding can leave ~1e-16 residues beside a bound; such a coefficient
    # is not genuinely free and must not decide the bias
    z[z <= _BOUND_SNAP * c] = 0.0
    z[z >= c - _BOUND_SNAP * c] = c
    beta = z[:n] - z[n:]
    bias = _bias(z, grad, s, c)
    objective = -0.5 * float(z @ (grad + p))
    return SmoResult(beta, bias, objective, it, converged, float(gap), history)


def _bias(z, grad, s, c):
    yg = s * grad
    at_upper = z >= c
    at_lower = z <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        rho = float(yg[free].mean())
    else:
        ub, lb = math.inf, -math.inf
        for t in range(z.size):
            if at_upper[t]:
                if s[t] < 0:
                    ub = min(ub, yg[t])
                else:
                    lb = max(lb, yg[t])
            elif at_lower[t]:
                if s[t] > 0:
                    ub = min(ub, yg[t])
                else:
                    lb = max(lb, yg[t])
        rho = (ub + lb) / 2.0
    return -rho


def linear_kernel(a, b=None):
    a = np.asarray(a, dtype=float)
    b = a if b is None else np.asarray(b, dtype=float)
    return a @ b.T


def fit(features, targets, hp, max_iterations=DEFAULT_MAX_ITERATIONS, trace=None):
    """Train on a feature matrix and target vector.

    ``trace``, when a list, receives the dual objective after every step.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float).ravel()
    if x.ndim != 2 or x.shape[0] != y.size:
        raise DimensionMismatch(f"features {x.shape} do not match {y.size} targets")
    if x.shape[0] < 2:
        raise TooFewInstances(f"need at least 2 instances, got {x.shape[0]}")
    norm = normalize_fit(x)
    xn = norm.transform(x)
    # sum(beta) = 0, so a constant offset in y only moves the bias; solving on
    # centred targets keeps the SMO path independent of that offset
    offset = float(np.mean(y))
    result = smo_solve(linear_kernel(xn), y - offset, hp.c, hp.epsilon, hp.tolerance, max_iterations,
                       trace=trace is not None)
    if trace is not None:
        trace.extend(result.trace)
    if not result.converged:
        log.warning("SMO hit the iteration cap (%d) with violation %.3g", max_iterations, result.max_violation)
    sv = result.beta != 0
    model = SvrModel(
        support_vectors=xn[sv],
        betas=result.beta[sv],
        bias=result.bias + offset,
        norm_params=norm,
        hyperparams=hp,
        train_meta=TrainMeta(int(y.size), result.objective, result.iterations, result.converged),
    )
    log.debug("trained SVR C=%g: %d SVs, %d iterations, %s", hp.c, int(sv.sum()), result.iterations,
              model.train_meta.status)
    return model


def train(instances, target, hp, max_iterations=DEFAULT_MAX_ITERATIONS, trace=None):
    """Train on LabeledInstances for the "arousal" or "valence" target.

    Instances are put in (recording, segment) order first, so the model does
    not depend on the order they arrive in.
    """
    instances = sorted(instances, key=lambda i: (i.segment.recording_id, i.segment.index))
    if len(instances) < 2:
        raise TooFewInstances(f"need at least 2 instances, got {len(instances)}")
    dims = {inst.features.size for inst in instances}
    if len(dims) != 1:
        raise DimensionMismatch(f"instances have mixed feature dimensions {sorted(dims)}")
    x = np.stack([inst.features for inst in instances])
    y = np.array([inst.target(target) for inst in instances])
    return fit(x, y, hp, max_iterations, trace)


# ---------------------------------------------------------------------------
# serialization

def _floats(values):
    return " ".join(repr(float(v)) for v in values)


def dumps(model):
    hp, meta = model.hyperparams, model.train_meta
    lines = [
        FORMAT_HEADER,
        f"kernel {hp.kernel}",
        f"normalization {hp.normalization}",
        f"c {hp.c!r}",
        f"epsilon {hp.epsilon!r}",
        f"tolerance {hp.tolerance!r}",
        f"n_train {meta.n_train}",
        f"objective {meta.objective!r}",
        f"iterations {meta.iterations}",
        f"status {meta.status}",
        f"dimension {model.dimension}",
        f"bias {model.bias!r}",
        f"norm_min {_floats(model.norm_params.minimum)}",
        f"norm_max {_floats(model.norm_params.maximum)}",
        f"n_support {model.betas.size}",
    ]
    lines += [f"sv {_floats([b, *row])}" for b, row in zip(model.betas, model.support_vectors)]
    return "\n".join(lines) + "\n"


def loads(text):
    lines = text.splitlines()
    if not lines or lines[0].strip() != FORMAT_HEADER:
        raise ModelFormatError("not a gazeaffect SVR model (bad header)")
    fields, rows = {}, []
    try:
        for line in lines[1:]:
            if not line.strip():
                continue
            key, _, rest = line.partition(" ")
            if key == "sv":
                rows.append([float(v) for v in rest.split()])
            else:
                fields[key] = rest.strip()
        dim = int(fields["dimension"])
        hp = SvrHyperparams(
            c=float(fields["c"]), epsilon=float(fields["epsilon"]), tolerance=float(fields["tolerance"]),
            kernel=fields["kernel"], normalization=fields["normalization"],
        )
        meta = TrainMeta(int(fields["n_train"]), float(fields["objective"]), int(fields["iterations"]),
                         fields["status"] == "Converged")
        norm = NormParams(np.array(fields["norm_min"].split(), dtype=float).reshape(dim),
                          np.array(fields["norm_max"].split(), dtype=float).reshape(dim))
        bias = float(fields["bias"])
        n_sv = int(fields["n_support"])
    except (KeyError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from None
    if len(rows) != n_sv or any(len(r) != dim + 1 for r in rows):
        raise ModelFormatError("support vector block does not match declared sizes")
    data = np.array(rows, dtype=float).reshape(n_sv, dim + 1)
    return SvrModel(data[:, 1:].copy(), data[:, 0].copy(), bias, norm, hp, meta)


def save(model, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(model), encoding="utf-8")
    return path


def load(path):
    return loads(Path(path).read_text(encoding="utf-8"))


def with_hyperparams(hp, **changes):
    return replace(hp, **changes)
