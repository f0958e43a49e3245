"""Two-domain datasets: synthetic generation, feature-file IO, and the
stratified 80-20 split.

The synthetic generator stands in for real benchmark features: class
prototypes on a sphere, domain A sampled around them, domain B sampled
around a rotated + shifted copy. A single scalar (rotation strength)
controls the size of the domain gap.
"""

import struct
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.linalg import fractional_matrix_power

from .numerics import InvalidInputError, make_rng

DOMAIN_A = "A"
DOMAIN_B = "B"

FEATURE_MAGIC = b"CODF"
FEATURE_VERSION = 1


class ParseError(ValueError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureRecord:
    id: int
    domain: str
    x: np.ndarray
    label: Optional[int] = None


@dataclass(frozen=True)
class DomainDataset:
    domain: str
    records: tuple

    def __post_init__(self):
        if len(self.records) == 0:
            raise InvalidInputError("dataset must be non-empty")
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise InvalidInputError("duplicate record ids")
        dims = {r.x.shape[0] for r in self.records}
        if len(dims) != 1:
            raise InvalidInputError(f"inconsistent feature dims: {dims}")

    def __len__(self):
        return len(self.records)

    @property
    def dim(self):
        return self.records[0].x.shape[0]

    @property
    def ids(self):
        return np.array([r.id for r in self.records], dtype=np.int64)

    @property
    def features(self):
        return np.stack([r.x for r in self.records])

    @property
    def labels(self):
        """Evaluation-only labels; None entries stay None."""
        return [r.label for r in self.records]

    def without_labels(self):
        """Label-stripped view handed to training code."""
        return DomainDataset(
            self.domain,
            tuple(replace(r, label=None) for r in self.records),
        )


@dataclass(frozen=True)
class SynthConfig:
    num_classes: int = 10
    samples_per_class_per_domain: int = 50
    input_dim: int = 32
    prototype_separation: float = 2.0
    domain_rotation_strength: float = 0.5
    domain_bias_scale: float = 0.5
    noise_sigma: float = 0.1
    seed: int = 7

    def validate(self):
        if self.num_classes < 1 or self.samples_per_class_per_domain < 1:
            raise InvalidInputError("counts must be >= 1")
        if self.input_dim < 1:
            raise InvalidInputError("input_dim must be >= 1")
        if not 0.0 <= self.domain_rotation_strength <= 1.0:
            raise InvalidInputError("domain_rotation_strength must be in [0,1]")
        if self.noise_sigma < 0:
            raise InvalidInputError("noise_sigma must be >= 0")


def _random_rotation(dim, strength, rng):
    """Orthogonalize a Gaussian matrix, then pull it toward identity.

    R^strength via the fractional matrix power interpolates along the
    geodesic in the rotation group, so strength=0 gives I and strength=1
    the full random rotation.
    """
    g = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.diag(r))  # fix QR sign ambiguity
    if np.linalg.det(q) < 0:     # stay in SO(dim) so the power is real
        q[:, 0] = -q[:, 0]
    if strength == 0.0:
        return np.eye(dim)
    if strength == 1.0:
        return q
    return np.real(fractional_matrix_power(q, strength))


def generate_synthetic(cfg: SynthConfig):
    """Returns (domain A dataset, domain B dataset) with labels recorded."""
    cfg.validate()
    rng = make_rng(cfg.seed)
    d = cfg.input_dim

    protos = rng.standard_normal((cfg.num_classes, d))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    protos *= cfg.prototype_separation

    rot = _random_rotation(d, cfg.domain_rotation_strength, rng)
    bias = rng.standard_normal(d) * cfg.domain_bias_scale
    protos_b = protos @ rot.T + bias

    def build(domain, centers, id_base):
        records = []
        next_id = id_base
        for c in range(cfg.num_classes):
            for _ in range(cfg.samples_per_class_per_domain):
                x = centers[c] + rng.standard_normal(d) * cfg.noise_sigma
                records.append(FeatureRecord(next_id, domain, x, label=c))
                next_id += 1
        return DomainDataset(domain, tuple(records))

    n = cfg.num_classes * cfg.samples_per_class_per_domain
    ds_a = build(DOMAIN_A, protos, 0)
    ds_b = build(DOMAIN_B, protos_b, n)
    return ds_a, ds_b


def split_train_test(dataset: DomainDataset, ratio: float, seed: int):
    """Per-class stratified split; test side gets max(1, round(N_c*(1-ratio))).

    Unlabeled datasets split over all records with the same rounding rule.
    """
    if not 0.0 < ratio < 1.0:
        raise InvalidInputError(f"ratio {ratio} outside (0,1)")
    rng = make_rng(seed)

    labels = dataset.labels
    if any(l is None for l in labels):
        groups = [list(range(len(dataset)))]
    else:
        by_class = {}
        for i, l in enumerate(labels):
            by_class.setdefault(l, []).append(i)
        for l, idxs in by_class.items():
            if len(idxs) < 2:
                raise SplitError(f"class {l} has a single sample; cannot split")
        groups = [by_class[l] for l in sorted(by_class)]

    train_idx, test_idx = [], []
    for idxs in groups:
        idxs = np.array(idxs)
        rng.shuffle(idxs)
        n_test = max(1, round(len(idxs) * (1.0 - ratio)))
        test_idx.extend(idxs[:n_test])
        train_idx.extend(idxs[n_test:])

    train_idx.sort()
    test_idx.sort()
    recs = dataset.records
    return (
        DomainDataset(dataset.domain, tuple(recs[i] for i in train_idx)),
        DomainDataset(dataset.domain, tuple(recs[i] for i in test_idx)),
    )


# --- feature file IO -------------------------------------------------------
# Text: line 1 "N D"; then N lines "id domain label f_1 ... f_D",
# label "-" when absent. Binary: magic CODF, version byte, u64 N, u64 D,
# then per record u64 id, u8 domain(0=A,1=B), i64 label(-1=none), D x f64.

def write_feature_file(path, dataset: DomainDataset, binary=False):
    if binary:
        _write_binary(path, dataset)
    else:
        _write_text(path, dataset)


def _write_text(path, dataset):
    with open(path, "w") as f:
        f.write(f"{len(dataset)} {dataset.dim}\n")
        for r in dataset.records:
            label = "-" if r.label is None else str(r.label)
            feats = " ".join(repr(float(v)) for v in r.x)
            f.write(f"{r.id} {r.domain} {label} {feats}\n")


def _write_binary(path, dataset):
    with open(path, "wb") as f:
        f.write(FEATURE_MAGIC)
        f.write(bytes([FEATURE_VERSION]))
        f.write(struct.pack("<QQ", len(dataset), dataset.dim))
        for r in dataset.records:
            dom = 0 if r.domain == DOMAIN_A else 1
            label = -1 if r.label is None else r.label
            f.write(struct.pack("<QBq", r.id, dom, label))
            f.write(np.asarray(r.x, dtype="<f8").tobytes())


def load_feature_file(path):
    with open(path, "rb") as f:
        head = f.read(4)
    if head == FEATURE_MAGIC:
        return _load_binary(path)
    return _load_text(path)


def _load_text(path):
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise ParseError(path, 1, "empty file")
    header = lines[0].split()
    if len(header) != 2:
        raise ParseError(path, 1, f"expected 'N D' header, got {lines[0]!r}")
    try:
        n, d = int(header[0]), int(header[1])
    except ValueError:
        raise ParseError(path, 1, f"non-integer header {lines[0]!r}") from None
    if len(lines) - 1 < n:
        raise ParseError(path, len(lines), f"expected {n} rows, found {len(lines) - 1}")

    records = []
    domain = None
    for row, line in enumerate(lines[1:n + 1], start=2):
        parts = line.split()
        if len(parts) != 3 + d:
            raise ParseError(path, row, f"expected {3 + d} fields, got {len(parts)}")
        try:
            rid = int(parts[0])
        except ValueError:
            raise ParseError(path, row, f"bad id {parts[0]!r}") from None
        dom = parts[1]
        if dom not in (DOMAIN_A, DOMAIN_B):
            raise ParseError(path, row, f"bad domain tag {dom!r}")
        if parts[2] == "-":
            label = None
        else:
            try:
                label = int(parts[2])
            except ValueError:
                raise ParseError(path, row, f"bad label {parts[2]!r}") from None
        try:
            x = np.array([float(v) for v in parts[3:]], dtype=np.float64)
        except ValueError:
            raise ParseError(path, row, "non-numeric feature value") from None
        if not np.all(np.isfinite(x)):
            raise ParseError(path, row, "non-finite feature value")
        domain = domain or dom
        records.append(FeatureRecord(rid, dom, x, label))
    return DomainDataset(domain, tuple(records))


def _load_binary(path):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != FEATURE_MAGIC:
        raise ParseError(path, 0, "bad magic")
    if blob[4] != FEATURE_VERSION:
        raise ParseError(path, 0, f"unsupported version {blob[4]}")
    n, d = struct.unpack_from("<QQ", blob, 5)
    off = 21
    rec_size = 8 + 1 + 8 + 8 * d
    if len(blob) < off + n * rec_size:
        raise ParseError(path, 0, "truncated file")
    records = []
    domain = None
    for i in range(n):
        rid, dom_byte, label = struct.unpack_from("<QBq", blob, off)
        off += 17
        x = np.frombuffer(blob, dtype="<f8", count=d, offset=off).copy()
        off += 8 * d
        if not np.all(np.isfinite(x)):
            raise ParseError(path, i + 1, "non-finite feature value")
        dom = DOMAIN_A if dom_byte == 0 else DOMAIN_B
        domain = domain or dom
        records.append(FeatureRecord(rid, dom, x, None if label < 0 else label))
    return DomainDataset(domain, tuple(records))
