"""
Check-in histories and their text format.

A check-in file holds one record per line, either `user_id, timestamp, poi_id`
or Gowalla's `user, time, latitude, longitude, location_id`. The delimiter
(tab or comma) is detected from the first record and a header line is
recognised by a timestamp field that does not parse. Raw POI labels are
densified to integer ids [0, n).

write_checkins also stores the POI domain in a `<file>.pois.json` sidecar so
that POIs nobody visited survive a round trip.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union, overload

import numpy as np
import pandas as pd

from ..core.exceptions import DomainError, InvalidParameterError, ParseError
from ..utils.helpers import load_json, save_json
from ..utils.logging import logger

DOMAIN_SUFFIX = ".pois.json"


@dataclass(frozen=True)
class PoiDomain:
    """The POI set shared by all users: ids are the dense range [0, n)."""

    n: int
    labels: Optional[Tuple[str, ...]] = None

    def __post_init__(self) -> None:
        if self.n < 1:
            raise InvalidParameterError(f"POI domain needs n >= 1, got {self.n}")
        if self.labels is not None and len(self.labels) != self.n:
            raise InvalidParameterError("labels must have exactly n entries")

    def check(self, poi: int) -> int:
        if not 0 <= poi < self.n:
            raise DomainError(f"POI {poi} outside domain [0, {self.n})")
        return poi

    def label(self, poi: int) -> str:
        return self.labels[poi] if self.labels is not None else str(poi)


@dataclass(frozen=True)
class CheckinHistory:
    """One user's time-ordered check-ins; this stays on the user's device."""

    user_id: str
    pois: Tuple[int, ...]
    times: Tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.pois) != len(self.times):
            raise InvalidParameterError("pois and times must have equal length")
        if any(b < a for a, b in zip(self.times, self.times[1:])):
            raise InvalidParameterError(f"timestamps of user {self.user_id} are not sorted")
        if any(p < 0 for p in self.pois):
            raise DomainError(f"negative POI id in history of user {self.user_id}")

    @classmethod
    def from_checkins(cls, user_id: str, checkins: Sequence[Tuple[int, float]]) -> "CheckinHistory":
        return cls(
            user_id=str(user_id),
            pois=tuple(int(p) for p, _ in checkins),
            times=tuple(float(t) for _, t in checkins),
        )

    @property
    def checkins(self) -> List[Tuple[int, float]]:
        return list(zip(self.pois, self.times))

    def __len__(self) -> int:
        return len(self.pois)


@dataclass
class CheckinDataset:
    """A list of histories over one POI domain."""

    domain: PoiDomain
    histories: List[CheckinHistory] = field(default_factory=list)
    dropped_users: int = 0
    name: str = "dataset"

    def __post_init__(self) -> None:
        for history in self.histories:
            for poi in history.pois:
                self.domain.check(poi)

    def __len__(self) -> int:
        return len(self.histories)

    def __iter__(self) -> Iterator[CheckinHistory]:
        return iter(self.histories)

    @overload
    def __getitem__(self, index: int) -> CheckinHistory: ...

    @overload
    def __getitem__(self, index: slice) -> List[CheckinHistory]: ...

    def __getitem__(self, index: Union[int, slice]) -> Union[CheckinHistory, List[CheckinHistory]]:
        return self.histories[index]

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def m(self) -> int:
        return len(self.histories)


def _natural_sorted(values: Sequence[str]) -> List[str]:
    """Sort numerically when every value is an integer literal, else lexically."""
    unique = list(dict.fromkeys(values))
    try:
        return sorted(unique, key=lambda v: (int(v), v))
    except ValueError:
        return sorted(unique)


def _detect_delimiter(line: str) -> str:
    return "\t" if "\t" in line else ","


def _read_records(path: Path) -> Tuple[List[int], List[List[str]]]:
    line_numbers: List[int] = []
    records: List[List[str]] = []
    delimiter: Optional[str] = None
    width: Optional[int] = None

    with open(path, "r", encoding="utf-8") as f:
        for line_number, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            if delimiter is None:
                delimiter = _detect_delimiter(line)
            fields = [part.strip() for part in line.split(delimiter)]
            if width is None:
                width = len(fields)
                if width not in (3, 5):
                    raise ParseError(
                        f"expected 3 fields (user, time, poi) or 5 (user, time, lat, lon, poi), got {width}",
                        line_number,
                    )
            if len(fields) != width:
                raise ParseError(f"expected {width} fields, got {len(fields)}", line_number)
            if any(not part for part in fields):
                raise ParseError("empty field", line_number)
            line_numbers.append(line_number)
            records.append(fields)

    return line_numbers, records


def _parse_times(raw: pd.Series) -> pd.Series:
    numeric = pd.to_numeric(raw, errors="coerce")
    missing = numeric.isna()
    if missing.any():
        parsed = pd.to_datetime(raw[missing], utc=True, errors="coerce", format="ISO8601")
        numeric[missing] = (parsed - pd.Timestamp(0, tz="UTC")).dt.total_seconds()
    return numeric


def domain_path(path: Union[str, Path]) -> Path:
    """Sidecar file holding the POI domain of a check-in file."""
    file_path = Path(path)
    return file_path.with_name(file_path.name + DOMAIN_SUFFIX)


def save_domain(domain: PoiDomain, path: Union[str, Path]) -> Path:
    sidecar = domain_path(path)
    data = {"n": domain.n, "labels": list(domain.labels) if domain.labels is not None else None}
    if not save_json(data, sidecar):
        raise OSError(f"cannot write POI domain to {sidecar}")
    return sidecar


def load_domain(path: Union[str, Path]) -> Optional[PoiDomain]:
    """
    Read the domain stored next to a check-in file.

    Returns:
        Optional[PoiDomain]: None when the file has no sidecar

    Raises:
        ParseError: On a sidecar without a valid n
    """
    sidecar = domain_path(path)
    if not sidecar.is_file():
        return None
    data = load_json(sidecar)
    n = data.get("n")
    if not isinstance(n, int) or isinstance(n, bool):
        raise ParseError(f"{sidecar}: expected an integer n")
    labels = data.get("labels")
    return PoiDomain(n=n, labels=tuple(str(label) for label in labels) if labels is not None else None)


def load_checkins(
    path: Union[str, Path],
    domain: Optional[PoiDomain] = None,
    min_length: int = 2,
) -> CheckinDataset:
    """
    Load check-in histories from a text file.

    Args:
        path: Check-in file
        domain: Fixed POI domain; read from the sidecar or inferred from the file when omitted
        min_length: Users with fewer check-ins are dropped

    Returns:
        CheckinDataset: Histories grouped per user and sorted by time

    Raises:
        ParseError: On a malformed line, reporting its line number
        DomainError: On a POI not in a fixed domain
    """
    file_path = Path(path)
    if domain is None:
        domain = load_domain(file_path)
    line_numbers, records = _read_records(file_path)
    if not records:
        return CheckinDataset(domain=domain or PoiDomain(n=1), name=file_path.stem)

    width = len(records[0])
    poi_column = 2 if width == 3 else 4
    frame = pd.DataFrame(
        {
            "line": line_numbers,
            "user": [r[0] for r in records],
            "time": [r[1] for r in records],
            "poi": [r[poi_column] for r in records],
        }
    )
    frame["seconds"] = _parse_times(frame["time"])

    if pd.isna(frame["seconds"].iloc[0]):
        # header line
        frame = frame.iloc[1:].reset_index(drop=True)
    bad = frame["seconds"].isna()
    if bad.any():
        first = frame[bad].iloc[0]
        raise ParseError(f"unparseable timestamp {first['time']!r}", int(first["line"]))

    if domain is None:
        labels = _natural_sorted(frame["poi"].tolist())
        domain = PoiDomain(n=len(labels), labels=tuple(labels))
    frame["poi_id"] = _densify(frame, domain)

    frame = frame.sort_values(["user", "seconds"], kind="mergesort")
    histories: List[CheckinHistory] = []
    dropped = 0
    user_order = _natural_sorted(frame["user"].tolist())
    groups = {user: group for user, group in frame.groupby("user", sort=False)}
    for user in user_order:
        group = groups[user]
        if len(group) < min_length:
            dropped += 1
            continue
        histories.append(
            CheckinHistory(
                user_id=str(user),
                pois=tuple(int(p) for p in group["poi_id"]),
                times=tuple(float(t) for t in group["seconds"]),
            )
        )

    if dropped:
        logger.warning(f"Dropped {dropped} users with fewer than {min_length} check-ins from {file_path}")
    logger.info(f"Loaded {len(histories)} users over {domain.n} POIs from {file_path}")

    return CheckinDataset(domain=domain, histories=histories, dropped_users=dropped, name=file_path.stem)


def _densify(frame: pd.DataFrame, domain: PoiDomain) -> np.ndarray:
    if domain.labels is not None:
        index = {label: i for i, label in enumerate(domain.labels)}
        ids = frame["poi"].map(index)
        unknown = ids.isna()
        if unknown.any():
            first = frame[unknown].iloc[0]
            raise DomainError(f"line {int(first['line'])}: unknown POI {first['poi']!r}")
        return ids.astype(np.int64).to_numpy()

    ids = pd.to_numeric(frame["poi"], errors="coerce")
    outside = ids.isna() | (ids < 0) | (ids >= domain.n) | (ids != ids.round())
    if outside.any():
        first = frame[outside].iloc[0]
        raise DomainError(f"line {int(first['line'])}: POI {first['poi']!r} outside [0, {domain.n})")
    return ids.astype(np.int64).to_numpy()


def write_checkins(
    dataset: Union[CheckinDataset, Sequence[CheckinHistory]],
    path: Union[str, Path],
    delimiter: str = ",",
    domain: Optional[PoiDomain] = None,
) -> Path:
    """
    Write histories in the `user_id, timestamp, poi_id` text format.

    When a domain is known it is saved alongside, see domain_path.

    Args:
        dataset: Histories to write
        path: Destination file
        delimiter: "," or a tab
        domain: Used for POI labels; taken from the dataset when available

    Returns:
        Path: The written file
    """
    if delimiter not in (",", "\t"):
        raise InvalidParameterError("delimiter must be a comma or a tab")
    if domain is None and isinstance(dataset, CheckinDataset):
        domain = dataset.domain

    rows = [
        (history.user_id, t, domain.label(p) if domain is not None else str(p))
        for history in dataset
        for p, t in zip(history.pois, history.times)
    ]
    frame = pd.DataFrame(rows, columns=["user_id", "timestamp", "poi_id"])

    out = Path(path)
    out.parent.mkdir(exist_ok=True, parents=True)
    frame.to_csv(out, sep=delimiter, index=False)
    if domain is not None:
        save_domain(domain, out)
    return out
