"""Instance generation and the on-disk formats used by the CLI.

Instance files are one-line JSON documents::

    {"version": 1, "m": 3, "n": 3, "seed": 42, "cost": [...], "marginals": [[...], ...]}

``cost`` is the flattened tensor in C order.  Plans are raw little-endian
float64 arrays (``<base>.bin``) next to a JSON header (``<base>.json``).
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dual import Problem
from .errors import ArgumentError
from .tensor import TensorShape

FORMAT_VERSION = 1
_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class InstanceFormatError(ArgumentError):
    def __init__(self, field_name, message):
        super().__init__(f"invalid field {field_name!r}: {message}")
        self.field = field_name


def splitmix64(seed, count, offset=0):
    """Outputs ``offset .. offset+count-1`` of the splitmix64 stream for ``seed``."""
    seed = int(seed) & _MASK
    i = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed) + i * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def uniform01(seed, count, offset=0):
    """Doubles in [0, 1) from the top 53 bits of each splitmix64 output."""
    return (splitmix64(seed, count, offset) >> np.uint64(11)).astype(np.float64) * 2.0**-53


@dataclass
class InstanceFile:
    m: int
    n: int
    cost: np.ndarray
    marginals: np.ndarray
    seed: int | None = None
    version: int = FORMAT_VERSION

    def to_problem(self):
        return Problem(self.cost.reshape((self.n,) * self.m), self.marginals, simplex_tol=1e-9)

    @classmethod
    def from_problem(cls, problem, seed=None):
        return cls(problem.m, problem.n, problem.cost.reshape(-1).copy(),
                   np.array(problem.marginals), seed)

    def to_json(self):
        doc = {
            "version": self.version,
            "m": self.m,
            "n": self.n,
            "seed": self.seed,
            "cost": [float(c) for c in np.asarray(self.cost).reshape(-1)],
            "marginals": [[float(v) for v in row] for row in self.marginals],
        }
        return json.dumps(doc, separators=(",", ":")) + "\n"


def generate_instance(m, n, seed):
    """Random instance: i.i.d. U[0,1) costs, then m normalized U[0,1) marginals.

    One splitmix64 stream feeds the cost tensor in C order first and then the
    marginals in order, so the file is a pure function of ``(m, n, seed)``.
    """
    if m < 2 or n < 2:
        raise ArgumentError("generate_instance needs m >= 2 and n >= 2")
    shape = TensorShape(m, n)
    draws = uniform01(seed, shape.size + m * n)
    cost = draws[: shape.size]
    p = draws[shape.size:].reshape(m, n)
    p = p / p.sum(axis=1, keepdims=True)
    return InstanceFile(m, n, cost, p, int(seed) & _MASK)


def _require(doc, key, kind):
    if key not in doc:
        raise InstanceFormatError(key, "missing")
    value = doc[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise InstanceFormatError(key, f"expected an integer, got {value!r}")
    if kind is list and not isinstance(value, list):
        raise InstanceFormatError(key, "expected an array")
    return value


def parse_instance(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError("<document>", f"not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise InstanceFormatError("<document>", "expected a JSON object")
    version = _require(doc, "version", int)
    if version != FORMAT_VERSION:
        raise InstanceFormatError("version", f"unsupported version {version}")
    m = _require(doc, "m", int)
    n = _require(doc, "n", int)
    if m < 2:
        raise InstanceFormatError("m", "must be >= 2")
    if n < 1:
        raise InstanceFormatError("n", "must be >= 1")
    seed = doc.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= _MASK):
        raise InstanceFormatError("seed", "expected null or an unsigned 64-bit integer")
    cost = _require(doc, "cost", list)
    try:
        cost = np.array(cost, dtype=np.float64)
    except (TypeError, ValueError):
        raise InstanceFormatError("cost", "entries must be numbers") from None
    if cost.shape != (n**m,):
        raise InstanceFormatError("cost", f"expected {n**m} entries, got {len(doc['cost'])}")
    if not np.all(np.isfinite(cost)) or np.any(cost < 0):
        raise InstanceFormatError("cost", "entries must be finite and >= 0")
    marg = _require(doc, "marginals", list)
    try:
        marg = np.array(marg, dtype=np.float64)
    except (TypeError, ValueError):
        raise InstanceFormatError("marginals", "must be m arrays of n numbers") from None
    if marg.shape != (m, n):
        raise InstanceFormatError("marginals", f"expected shape ({m}, {n})")
    for k, row in enumerate(marg):
        if np.any(row < 0) or abs(row.sum() - 1.0) > 1e-9:
            raise InstanceFormatError(f"marginals[{k}]", "not a probability vector (tol 1e-9)")
    return InstanceFile(m, n, cost, marg, seed, version)


def read_instance(path):
    return parse_instance(Path(path).read_text())


def write_instance(path, inst):
    Path(path).write_text(inst.to_json())


def plan_paths(base):
    base = Path(base)
    return base.with_name(base.name + ".bin"), base.with_name(base.name + ".json")


def write_plan(base, X):
    """Write ``X`` as ``<base>.bin`` (raw <f8, C order) plus ``<base>.json``."""
    X = np.ascontiguousarray(X, dtype="<f8")
    bin_path, hdr_path = plan_paths(base)
    bin_path.write_bytes(X.tobytes())
    header = {"format": "mmot-plan", "version": FORMAT_VERSION, "dtype": "<f8",
              "order": "C", "shape": list(X.shape), "data": bin_path.name}
    hdr_path.write_text(json.dumps(header) + "\n")
    return bin_path, hdr_path


def read_plan(base):
    bin_path, hdr_path = plan_paths(base)
    header = json.loads(hdr_path.read_text())
    data = np.frombuffer(bin_path.read_bytes(), dtype=header["dtype"])
    return data.reshape(header["shape"]).astype(np.float64)


@dataclass
class RunRecord:
    algorithm: str
    eps: float
    iterations: int
    wall_ms: float
    final_gap: float
    final_violation: float
    primal_cost: float
    status: str
    certificate: dict | None = None
    trace: list | None = field(default=None)

    def to_json(self):
        return json.dumps(asdict(self), indent=2) + "\n"
