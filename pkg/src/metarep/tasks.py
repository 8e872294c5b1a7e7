"""Ground-truth representation, task families and seeded data generation.

Every task's label depends on the input only through ``W x`` where ``W``
is an ``r x d`` matrix with orthonormal rows. Two families are provided:

* ``GLM_LOGISTIC``: ``P(y=1 | x) = sigmoid(theta . W x)``, binary labels.
* ``RELU_NET``: ``y = w3 relu(w2 relu(w1 W x)) + noise``, real labels.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from metarep import io
from metarep.errors import OddSampleCount, RankDeficient
from metarep.linalg import SeededRng, orthonormalize_rows, sample_gaussian_matrix

REP_STREAM = 0


def task_stream(task_id: int) -> int:
    """RNG stream owned by meta-training task ``task_id``."""
    return 1 + int(task_id)


class TaskKind(str, enum.Enum):
    GLM_LOGISTIC = "glm_logistic"
    RELU_NET = "relu_net"


@dataclass(frozen=True)
class Representation:
    W: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        if W.ndim != 2 or not 1 <= W.shape[0] <= W.shape[1]:
            raise ValueError(f"W must be r x d with 1 <= r <= d, got {W.shape}")
        if np.abs(W @ W.T - np.eye(W.shape[0])).max() > 1e-10:
            raise ValueError("W must have orthonormal rows")
        object.__setattr__(self, "W", W)

    @property
    def r(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    def projector(self) -> np.ndarray:
        """``W.T @ W``, the orthogonal projector onto the row space."""
        return self.W.T @ self.W


@dataclass(frozen=True)
class TaskSpec:
    task_id: int
    kind: TaskKind
    theta: np.ndarray | None = None
    w1: np.ndarray | None = None
    w2: np.ndarray | None = None
    w3: np.ndarray | None = None
    noise_std: float = 0.0

    def __post_init__(self):
        kind = TaskKind(self.kind)
        object.__setattr__(self, "kind", kind)
        glm = self.theta is not None
        net = any(w is not None for w in (self.w1, self.w2, self.w3))
        if kind is TaskKind.GLM_LOGISTIC:
            if not glm or net:
                raise ValueError("GLM task needs theta and no network weights")
            norm = float(np.linalg.norm(self.theta))
            if not math.isfinite(norm):
                raise ValueError("theta must be finite")
        else:
            if glm or any(w is None for w in (self.w1, self.w2, self.w3)):
                raise ValueError("ReLU task needs w1, w2, w3 and no theta")

    def __eq__(self, other):
        if not isinstance(other, TaskSpec):
            return NotImplemented
        if (self.task_id, self.kind, self.noise_std) != (other.task_id, other.kind, other.noise_std):
            return False
        for a, b in zip(self._arrays(), other._arrays()):
            if (a is None) != (b is None) or (a is not None and not np.array_equal(a, b)):
                return False
        return True

    def _arrays(self):
        return (self.theta, self.w1, self.w2, self.w3)


@dataclass(frozen=True)
class TaskData:
    task_id: int
    inputs: np.ndarray
    labels: np.ndarray

    @property
    def n(self) -> int:
        return self.inputs.shape[0]


@dataclass
class MetaDataset:
    representation: Representation
    tasks: list = field(default_factory=list)  # list of (TaskSpec, TaskData)
    seed: int | None = None

    @property
    def k(self) -> int:
        return len(self.tasks)

    @property
    def specs(self) -> list:
        return [spec for spec, _ in self.tasks]

    @property
    def kind(self) -> str | None:
        kinds = {spec.kind.value for spec, _ in self.tasks}
        if len(kinds) == 1:
            return kinds.pop()
        return "mixed" if kinds else None


def logistic(t):
    """Numerically stable sigmoid; never evaluates ``exp`` of a positive number."""
    t = np.asarray(t, dtype=np.float64)
    e = np.exp(-np.abs(t))
    return np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def relu(z):
    return np.maximum(z, 0.0)


def make_representation(rng: SeededRng, r: int, d: int) -> Representation:
    """Random ``W`` with orthonormal rows: orthonormalised Gaussian ``r x d`` draw."""
    if not 1 <= r <= d:
        raise ValueError(f"need 1 <= r <= d, got r={r}, d={d}")
    for attempt in range(2):
        try:
            return Representation(orthonormalize_rows(sample_gaussian_matrix(rng, r, d)))
        except RankDeficient:
            if attempt:
                raise
    raise AssertionError("unreachable")


def sample_glm_task(rng: SeededRng, rep: Representation, theta_norm_max: float = math.inf,
                    task_id: int = 0) -> TaskSpec:
    """Gaussian ``theta`` in R^r, pulled back onto the ball of radius ``theta_norm_max``."""
    if not theta_norm_max > 0:
        raise ValueError("theta_norm_max must be positive")
    theta = rng.normal(rep.r)
    norm = np.linalg.norm(theta)
    if norm > theta_norm_max:
        theta = theta * (theta_norm_max / norm)
    return TaskSpec(task_id, TaskKind.GLM_LOGISTIC, theta=theta)


def sample_relu_task(rng: SeededRng, rep: Representation, hidden: int = 20, noise_std: float = 1.0,
                     task_id: int = 0) -> TaskSpec:
    """Three Gaussian weight matrices of shapes (hidden, r), (hidden, hidden), (1, hidden)."""
    if hidden < 1:
        raise ValueError("hidden must be >= 1")
    w1 = sample_gaussian_matrix(rng, hidden, rep.r)
    w2 = sample_gaussian_matrix(rng, hidden, hidden)
    w3 = sample_gaussian_matrix(rng, 1, hidden)
    return TaskSpec(task_id, TaskKind.RELU_NET, w1=w1, w2=w2, w3=w3, noise_std=float(noise_std))


def _features(rep, x):
    x = np.asarray(x, dtype=np.float64)
    return x @ rep.W.T


def glm_mean(spec: TaskSpec, rep: Representation, x):
    """``sigmoid(theta . W x)`` for one input (d-vector) or a batch (n x d)."""
    if spec.kind is not TaskKind.GLM_LOGISTIC:
        raise ValueError("glm_mean needs a GLM task")
    return logistic(_features(rep, x) @ spec.theta)


def relu_mean(spec: TaskSpec, rep: Representation, x):
    """Noise-free network output for one input or a batch."""
    if spec.kind is not TaskKind.RELU_NET:
        raise ValueError("relu_mean needs a ReLU-network task")
    z = _features(rep, x)
    h1 = relu(z @ spec.w1.T)
    h2 = relu(h1 @ spec.w2.T)
    out = h2 @ spec.w3.T
    return out[..., 0]


def task_mean(spec: TaskSpec, rep: Representation, x):
    if spec.kind is TaskKind.GLM_LOGISTIC:
        return glm_mean(spec, rep, x)
    return relu_mean(spec, rep, x)


def draw_labels(rng: SeededRng, spec: TaskSpec, rep: Representation, inputs) -> np.ndarray:
    """Labels with ``E[y | x] = f(W x)`` for the given inputs."""
    mean = task_mean(spec, rep, inputs)
    if spec.kind is TaskKind.GLM_LOGISTIC:
        return (rng.uniform(mean.shape) < mean).astype(np.float64)
    if spec.noise_std == 0:
        return np.array(mean, dtype=np.float64)
    return mean + rng.normal(mean.shape, spec.noise_std)


def generate_task_data(rng: SeededRng, spec: TaskSpec, rep: Representation, n: int) -> TaskData:
    """``n`` standard Gaussian inputs and their labels; ``n`` must be even."""
    if n < 2 or n % 2:
        raise OddSampleCount(f"meta-training tasks need an even n >= 2, got {n}")
    inputs = rng.normal((n, rep.d))
    return TaskData(spec.task_id, inputs, draw_labels(rng, spec, rep, inputs))


def sample_task(rng: SeededRng, rep: Representation, kind, task_id: int, *,
                theta_norm_max: float = math.inf, hidden: int = 20, noise_std: float = 1.0) -> TaskSpec:
    kind = TaskKind(kind)
    if kind is TaskKind.GLM_LOGISTIC:
        return sample_glm_task(rng, rep, theta_norm_max, task_id=task_id)
    return sample_relu_task(rng, rep, hidden, noise_std, task_id=task_id)


def make_meta_dataset(seed: int, *, d: int, r: int, k: int, n: int, kind="glm_logistic",
                      theta_norm_max: float = math.inf, hidden: int = 20,
                      noise_std: float = 1.0) -> MetaDataset:
    """Full meta-training set; a pure function of its arguments.

    ``W`` comes from stream 0 and task ``j`` from stream ``1 + j`` of
    ``seed``, so any task can be regenerated on its own.
    """
    rep = make_representation(SeededRng(seed, REP_STREAM), r, d)
    tasks = []
    for j in range(k):
        rng = SeededRng(seed, task_stream(j))
        spec = sample_task(rng, rep, kind, j, theta_norm_max=theta_norm_max,
                           hidden=hidden, noise_std=noise_std)
        tasks.append((spec, generate_task_data(rng, spec, rep, n)))
    return MetaDataset(rep, tasks, seed=seed)


# -- serialisation ---------------------------------------------------------

DATASET_FORMAT = "metarep-dataset"


def _task_prefix(task_id):
    return f"task_{task_id:05d}"


def save_meta_dataset(ds: MetaDataset, directory) -> Path:
    """Write ``header.json``, ``W.bin`` and per-task ``.bin`` matrix files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    io.write_matrix(directory / "W.bin", ds.representation.W)
    entries = []
    for spec, data in ds.tasks:
        pre = _task_prefix(spec.task_id)
        io.write_matrix(directory / f"{pre}_x.bin", data.inputs)
        io.write_matrix(directory / f"{pre}_y.bin", data.labels)
        if spec.kind is TaskKind.GLM_LOGISTIC:
            io.write_matrix(directory / f"{pre}_theta.bin", spec.theta)
        else:
            for name in ("w1", "w2", "w3"):
                io.write_matrix(directory / f"{pre}_{name}.bin", getattr(spec, name))
        entries.append({"id": spec.task_id, "kind": spec.kind.value, "n": data.n,
                        "noise_std": spec.noise_std})
    header = {
        "format": DATASET_FORMAT,
        "version": 1,
        "d": ds.representation.d,
        "r": ds.representation.r,
        "k": ds.k,
        "kind": ds.kind,
        "seed": ds.seed,
        "tasks": entries,
    }
    io.write_json(directory / "header.json", header)
    return directory


def load_meta_dataset(directory) -> MetaDataset:
    directory = Path(directory)
    header = io.read_json(directory / "header.json")
    if header.get("format") != DATASET_FORMAT:
        raise ValueError(f"{directory} does not hold a metarep dataset")
    rep = Representation(io.read_matrix(directory / "W.bin"))
    tasks = []
    for entry in header["tasks"]:
        tid = entry["id"]
        pre = _task_prefix(tid)
        kind = TaskKind(entry["kind"])
        if kind is TaskKind.GLM_LOGISTIC:
            spec = TaskSpec(tid, kind, theta=io.read_vector(directory / f"{pre}_theta.bin"),
                            noise_std=entry.get("noise_std", 0.0))
        else:
            spec = TaskSpec(tid, kind, noise_std=entry["noise_std"],
                            **{w: io.read_matrix(directory / f"{pre}_{w}.bin") for w in ("w1", "w2", "w3")})
        data = TaskData(tid, io.read_matrix(directory / f"{pre}_x.bin"),
                        io.read_vector(directory / f"{pre}_y.bin"))
        tasks.append((spec, data))
    if len(tasks) != header["k"]:
        raise ValueError("header task count does not match task entries")
    return MetaDataset(rep, tasks, seed=header.get("seed"))


def export_csv(ds: MetaDataset, path) -> None:
    """One row per sample: ``task_id, y, x0, ..., x{d-1}``."""
    d = ds.representation.d
    with open(path, "w") as fh:
        fh.write(",".join(["task_id", "y"] + [f"x{i}" for i in range(d)]) + "\n")
        for _, data in ds.tasks:
            for x, y in zip(data.inputs, data.labels):
                fh.write(f"{data.task_id},{float(y)!r}," + ",".join(repr(float(v)) for v in x) + "\n")


def load_task_data(directory) -> list[TaskData]:
    """Only the ``(x, y)`` samples of a dataset directory, in task-id order.

    Works for directories without a ground-truth ``W`` (e.g. MNIST digit pairs).
    """
    directory = Path(directory)
    header = io.read_json(directory / "header.json")
    if header.get("format") != DATASET_FORMAT:
        raise ValueError(f"{directory} does not hold a metarep dataset")
    out = []
    for entry in sorted(header["tasks"], key=lambda e: e["id"]):
        pre = _task_prefix(entry["id"])
        out.append(TaskData(entry["id"], io.read_matrix(directory / f"{pre}_x.bin"),
                            io.read_vector(directory / f"{pre}_y.bin")))
    return out
