"""Claim ingestion, validation, normalization, and train/test bookkeeping.

Research claims arrive as CSV or JSON-lines rows carrying an opaque id, a
discipline, an optional replication outcome, and 41 numeric features in a
fixed positional order. Feature scaling is per-feature min-max onto
[0, 1], fit on the training split only and re-applied verbatim to
held-out claims, so a geometric radius means the same thing in every
split. Missing entries are imputed with the train-split median before
scaling; constant columns map to 0.5.

Claim sets are immutable after construction and safe to share read-only
across threads.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError

N_FEATURES = 41
FEATURE_COLUMNS = tuple(f"f{i:02d}" for i in range(1, N_FEATURES + 1))

REPLICATED = "R"
NOT_REPLICATED = "NR"
OUTCOMES = (REPLICATED, NOT_REPLICATED)

DOMAINS = (
    "psychology",
    "economics",
    "marketing",
    "sociology",
    "political-science",
    "education",
    "management",
    "health",
    "criminology",
    "public-administration",
)

# Accept the discipline spellings that show up in tabular exports.
_DOMAIN_ALIASES = {
    "econ": "economics",
    "marketing-org-behavior": "marketing",
    "marketing/org-behavior": "marketing",
    "marketing/org behavior": "marketing",
    "org-behavior": "marketing",
    "political-sc": "political-science",
    "political-sci": "political-science",
    "public-admin": "public-administration",
}


def canonical_domain(name: str) -> str:
    """Normalize a discipline label; raise DataError if unknown."""
    slug = name.strip().lower().replace("_", "-").replace(" ", "-")
    slug = _DOMAIN_ALIASES.get(slug, slug)
    if slug not in DOMAINS:
        raise DataError(f"unknown discipline {name!r}")
    return slug


def _parse_outcome(raw: str | None) -> str | None:
    if raw is None:
        return None
    text = raw.strip().upper()
    if text == "":
        return None
    if text not in OUTCOMES:
        raise DataError(f"outcome must be R, NR, or empty, got {raw!r}")
    return text


@dataclass(frozen=True, eq=False)
class ClaimRecord:
    """One research claim: id, discipline, 41 features, optional outcome."""

    claim_id: str
    domain: str
    features: np.ndarray
    outcome: str | None = None
    title: str = ""

    def __post_init__(self):
        arr = np.asarray(self.features, dtype=np.float64)
        if arr.shape != (N_FEATURES,):
            raise DataError(
                f"claim {self.claim_id!r}: expected {N_FEATURES} features, "
                f"got shape {arr.shape}"
            )
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "features", arr)
        object.__setattr__(self, "domain", canonical_domain(self.domain))
        if self.outcome is not None and self.outcome not in OUTCOMES:
            raise DataError(
                f"claim {self.claim_id!r}: bad outcome {self.outcome!r}"
            )

    def __eq__(self, other) -> bool:
        if not isinstance(other, ClaimRecord):
            return NotImplemented
        return (
            self.claim_id == other.claim_id
            and self.domain == other.domain
            and self.outcome == other.outcome
            and self.title == other.title
            and np.array_equal(self.features, other.features, equal_nan=True)
        )

    def __hash__(self):
        return hash((self.claim_id, self.domain, self.outcome, self.title))


@dataclass(frozen=True)
class Scaler:
    """Per-feature transform parameters fit on the training split."""

    minimum: tuple[float, ...]
    maximum: tuple[float, ...]
    median: tuple[float, ...]

    def __post_init__(self):
        for name in ("minimum", "maximum", "median"):
            vals = tuple(float(v) for v in getattr(self, name))
            if len(vals) != N_FEATURES:
                raise DataError(f"scaler {name} must have {N_FEATURES} entries")
            object.__setattr__(self, name, vals)

    def transform(self, values: np.ndarray) -> np.ndarray:
        """Impute missing entries with the train median, min-max scale,
        and clamp to [0, 1]. Constant train columns map to 0.5."""
        arr = np.asarray(values, dtype=np.float64).copy()
        med = np.asarray(self.median)
        lo = np.asarray(self.minimum)
        hi = np.asarray(self.maximum)
        nan_mask = np.isnan(arr)
        if nan_mask.any():
            arr[nan_mask] = np.broadcast_to(med, arr.shape)[nan_mask]
        if not np.isfinite(arr).all():
            raise DataError("non-finite feature value after imputation")
        span = hi - lo
        constant = span == 0.0
        safe_span = np.where(constant, 1.0, span)
        out = (arr - lo) / safe_span
        out = np.where(constant, 0.5, out)
        return np.clip(out, 0.0, 1.0)

    def to_dict(self) -> dict:
        return {
            "minimum": list(self.minimum),
            "maximum": list(self.maximum),
            "median": list(self.median),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scaler":
        return cls(
            minimum=tuple(data["minimum"]),
            maximum=tuple(data["maximum"]),
            median=tuple(data["median"]),
        )

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Scaler":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class ClaimSet:
    """An ordered collection of claims plus the scaler they were (or will
    be) normalized with. role is "train" or "test"."""

    records: tuple[ClaimRecord, ...]
    role: str = "train"
    scaler: Scaler | None = None

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if self.role not in ("train", "test"):
            raise DataError(f"role must be train or test, got {self.role!r}")
        seen: set[str] = set()
        for rec in self.records:
            if rec.claim_id in seen:
                raise DataError(f"duplicate claim_id {rec.claim_id!r}")
            seen.add(rec.claim_id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, idx: int) -> ClaimRecord:
        return self.records[idx]

    def get(self, claim_id: str) -> ClaimRecord:
        for rec in self.records:
            if rec.claim_id == claim_id:
                return rec
        raise DataError(f"no claim with id {claim_id!r}")

    @property
    def normalized(self) -> bool:
        return self.scaler is not None

    def feature_matrix(self) -> np.ndarray:
        if not self.records:
            return np.empty((0, N_FEATURES), dtype=np.float64)
        return np.stack([rec.features for rec in self.records])


def ingest(
    path: str | os.PathLike,
    format: str | None = None,
    role: str = "train",
) -> ClaimSet:
    """Load a claim file. format is "csv" or "jsonl"; inferred from the
    file suffix when omitted. Rows with an empty outcome are allowed
    (live markets open before the outcome is known)."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise DataError(f"input file not found: {path}")
    if format is None:
        format = "jsonl" if path.endswith((".jsonl", ".ndjson")) else "csv"
    if format == "csv":
        records = _read_csv(path)
        scaler = None
    elif format == "jsonl":
        records, scaler = _read_jsonl(path)
    else:
        raise DataError(f"unknown format {format!r} (expected csv or jsonl)")
    return ClaimSet(records=tuple(records), role=role, scaler=scaler)


def _read_csv(path: str) -> list[ClaimRecord]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row")
        header = [h.strip() for h in header]
        col = {name: i for i, name in enumerate(header)}
        for required in ("claim_id", "domain"):
            if required not in col:
                raise DataError(f"{path}: missing column {required!r}")
        missing = [c for c in FEATURE_COLUMNS if c not in col]
        if missing:
            raise DataError(
                f"{path}: schema error, missing feature columns "
                f"{missing[0]}..{missing[-1]} ({len(missing)} of {N_FEATURES})"
            )
        records = []
        for row_idx, row in enumerate(reader):
            if not row or all(cell.strip() == "" for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {row_idx}: expected {len(header)} cells, "
                    f"got {len(row)}"
                )
            feats = np.empty(N_FEATURES, dtype=np.float64)
            for j, name in enumerate(FEATURE_COLUMNS):
                cell = row[col[name]].strip()
                if cell == "":
                    feats[j] = np.nan
                    continue
                try:
                    feats[j] = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {row_idx}, column {name}: "
                        f"not a number: {cell!r}"
                    ) from None
            try:
                outcome = _parse_outcome(
                    row[col["outcome"]] if "outcome" in col else None
                )
                rec = ClaimRecord(
                    claim_id=row[col["claim_id"]].strip(),
                    domain=row[col["domain"]],
                    features=feats,
                    outcome=outcome,
                    title=row[col["title"]] if "title" in col else "",
                )
            except DataError as exc:
                raise DataError(f"{path}: row {row_idx}: {exc}") from None
            records.append(rec)
        return records


def _read_jsonl(path: str) -> tuple[list[ClaimRecord], "Scaler | None"]:
    records = []
    scaler = None
    with open(path, "r", encoding="utf-8") as fh:
        for row_idx, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: row {row_idx}: bad JSON: {exc}") from None
            if "scaler" in obj and "claim_id" not in obj:
                # header record: the set was saved already normalized
                if row_idx != 0:
                    raise DataError(
                        f"{path}: row {row_idx}: scaler header must be first"
                    )
                scaler = Scaler.from_dict(obj["scaler"])
                continue
            feats = obj.get("features")
            if not isinstance(feats, list) or len(feats) != N_FEATURES:
                n = len(feats) if isinstance(feats, list) else "none"
                raise DataError(
                    f"{path}: row {row_idx}: schema error, expected "
                    f"{N_FEATURES} features, got {n}"
                )
            values = np.array(
                [np.nan if v is None else float(v) for v in feats],
                dtype=np.float64,
            )
            try:
                rec = ClaimRecord(
                    claim_id=str(obj["claim_id"]),
                    domain=obj["domain"],
                    features=values,
                    outcome=_parse_outcome(obj.get("outcome")),
                    title=obj.get("title", ""),
                )
            except KeyError as exc:
                raise DataError(
                    f"{path}: row {row_idx}: missing field {exc}"
                ) from None
            except DataError as exc:
                raise DataError(f"{path}: row {row_idx}: {exc}") from None
            records.append(rec)
    return records, scaler


def save_claims(cs: ClaimSet, path: str | os.PathLike, format: str | None = None) -> None:
    """Write a claim set back to CSV or JSONL. Round-trips exactly: floats
    are emitted with shortest-exact repr."""
    path = os.fspath(path)
    if format is None:
        format = "jsonl" if path.endswith((".jsonl", ".ndjson")) else "csv"
    if format == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            if cs.scaler is not None:
                # header marks the rows as normalized, so re-ingesting and
                # re-applying the same scaler stays a no-op
                fh.write(json.dumps({"scaler": cs.scaler.to_dict()}) + "\n")
            for rec in cs.records:
                obj: dict = {
                    "claim_id": rec.claim_id,
                    "domain": rec.domain,
                    "outcome": rec.outcome,
                    "features": [
                        None if math.isnan(v) else v for v in rec.features
                    ],
                }
                if rec.title:
                    obj["title"] = rec.title
                fh.write(json.dumps(obj) + "\n")
        return
    if format != "csv":
        raise DataError(f"unknown format {format!r} (expected csv or jsonl)")
    if cs.scaler is not None:
        logger.warning(
            "saving a normalized claim set to CSV drops the scaler marker; "
            "prefer JSONL for normalized sets"
        )
    with_title = any(rec.title for rec in cs.records)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["claim_id", "domain", "outcome"]
    if with_title:
        header.append("title")
    header.extend(FEATURE_COLUMNS)
    writer.writerow(header)
    for rec in cs.records:
        row = [rec.claim_id, rec.domain, rec.outcome or ""]
        if with_title:
            row.append(rec.title)
        row.extend("" if math.isnan(v) else repr(float(v)) for v in rec.features)
        writer.writerow(row)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def fit_normalize(cs: ClaimSet) -> ClaimSet:
    """Fit a min-max scaler on a training split and return the normalized
    set carrying that scaler."""
    if cs.role != "train":
        raise DataError("scaler must be fit on the train split")
    if not cs.records:
        raise DataError("cannot fit a scaler on an empty claim set")
    matrix = cs.feature_matrix()
    all_missing = np.isnan(matrix).all(axis=0)
    if all_missing.any():
        idx = int(np.nonzero(all_missing)[0][0])
        raise DataError(
            f"feature column {FEATURE_COLUMNS[idx]} has no observed values"
        )
    median = np.nanmedian(matrix, axis=0)
    imputed = np.where(np.isnan(matrix), median, matrix)
    if not np.isfinite(imputed).all():
        raise DataError("non-finite feature value after imputation")
    scaler = Scaler(
        minimum=tuple(imputed.min(axis=0)),
        maximum=tuple(imputed.max(axis=0)),
        median=tuple(median),
    )
    return apply_normalize(cs, scaler)


def apply_normalize(cs: ClaimSet, scaler: Scaler) -> ClaimSet:
    """Apply a fitted scaler. Values outside the train range clamp to
    [0, 1]. Re-applying the scaler a set already carries is a no-op, so
    normalization is idempotent."""
    if cs.scaler is not None:
        if cs.scaler == scaler:
            return cs
        raise DataError("claim set already normalized with a different scaler")
    records = tuple(
        replace(rec, features=scaler.transform(rec.features))
        for rec in cs.records
    )
    return ClaimSet(records=records, role=cs.role, scaler=scaler)


def split_by_domain(cs: ClaimSet, domain: str) -> ClaimSet:
    """Records matching one discipline, order preserved. May be empty."""
    slug = canonical_domain(domain)
    records = tuple(rec for rec in cs.records if rec.domain == slug)
    return ClaimSet(records=records, role=cs.role, scaler=cs.scaler)
