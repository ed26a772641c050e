"""Trip ingestion, contact matrix construction, and network statistics.

The contact matrix is oriented as ``m[destination, origin]``: entry
``m[j, k]`` is the number of daily trips from location ``k`` into
location ``j``. Self-flows (the diagonal) are retained because they
enter the population balance.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0
HOURS_PER_DAY = 24

# The population balance can go nonpositive for net-exporter locations;
# a floor keeps per-capita prevalence defined everywhere.
POPULATION_FLOOR = 1.0


class ValidationError(ValueError):
    """An input file or record failed validation."""


@dataclass(frozen=True)
class Location:
    """One location with geographic coordinates in decimal degrees."""

    id: str
    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValidationError(f"location {self.id!r}: lat {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValidationError(f"location {self.id!r}: lon {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class TripRecord:
    """Directed movement count between two locations within one hour slot."""

    origin: str
    destination: str
    hour: int
    count: int


class LocationTable:
    """Indexed set of locations with cached pairwise distances."""

    def __init__(self, locations):
        locations = list(locations)
        ids = [loc.id for loc in locations]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate location ids: {dupes[:5]}")
        self.locations = locations
        self.ids = ids
        self.index = {loc.id: i for i, loc in enumerate(locations)}
        self.lat = np.array([loc.lat for loc in locations], dtype=float)
        self.lon = np.array([loc.lon for loc in locations], dtype=float)
        self._distance_matrix = None

    def __len__(self):
        return len(self.locations)

    def __getitem__(self, loc_id: str) -> Location:
        return self.locations[self.index[loc_id]]

    def __contains__(self, loc_id: str) -> bool:
        return loc_id in self.index

    @property
    def distance_matrix(self) -> np.ndarray:
        """Pairwise haversine distances in km, computed once and cached."""
        if self._distance_matrix is None:
            d = haversine_km(
                self.lat[:, None], self.lon[:, None], self.lat[None, :], self.lon[None, :]
            )
            d.flags.writeable = False
            self._distance_matrix = d
        return self._distance_matrix


def haversine_km(lat1, lon1, lat2, lon2):
    """Great-circle distance in kilometers, vectorized over array inputs."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dp = np.radians(lat2) - np.radians(lat1)
    dl = np.radians(lon2) - np.radians(lon1)
    a = np.sin(dp / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def trip_distance(a: Location, b: Location) -> float:
    """Great-circle distance in km between two locations."""
    return float(haversine_km(a.lat, a.lon, b.lat, b.lon))


@dataclass(frozen=True)
class ContactMatrix:
    """Daily origin-destination trip counts plus derived populations.

    ``m[j, k]`` holds trips from location ``k`` to location ``j``. The
    matrix and population vector are immutable so simulation replicates
    can share one instance without copying.
    """

    m: np.ndarray
    populations: np.ndarray
    table: LocationTable
    population_clamp_count: int = 0

    def __post_init__(self):
        if self.m.shape != (len(self.table), len(self.table)):
            raise ValidationError(
                f"matrix shape {self.m.shape} does not match {len(self.table)} locations"
            )
        if np.any(self.m < 0):
            raise ValidationError("contact matrix has negative entries")
        self.m.flags.writeable = False
        self.populations.flags.writeable = False

    @property
    def n(self) -> int:
        return len(self.table)

    @property
    def self_flows(self) -> np.ndarray:
        return np.diagonal(self.m).copy()

    @property
    def distance_matrix(self) -> np.ndarray:
        return self.table.distance_matrix

    def total_trips(self) -> float:
        return float(self.m.sum())

    def cross_trips(self) -> float:
        """Total daily trips between distinct locations."""
        return float(self.m.sum() - np.trace(self.m))


def load_locations(path) -> LocationTable:
    """Read a ``id,lat,lon`` CSV into a LocationTable."""
    locations = []
    errors = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != ["id", "lat", "lon"]:
            raise ValidationError(f"{path}: expected header 'id,lat,lon', got {reader.fieldnames}")
        for rownum, row in enumerate(reader, start=2):
            try:
                locations.append(Location(row["id"], float(row["lat"]), float(row["lon"])))
            except (TypeError, ValueError, ValidationError) as exc:
                errors.append(f"row {rownum}: {exc}")
    _raise_if_errors(path, errors)
    return LocationTable(locations)


def load_trips(trip_file, locations_file):
    """Load and validate trips against a location table.

    Duplicate (origin, destination, hour) rows are merged by summing
    counts so sharded inputs ingest idempotently. Any malformed row is
    collected and reported; one or more malformed rows abort the load
    with a message identifying them.

    Returns (LocationTable, list of TripRecord).
    """
    table = load_locations(locations_file)
    merged: dict[tuple, int] = {}
    errors = []
    n_rows = 0
    with open(trip_file, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = ["origin", "destination", "hour", "count"]
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != expected:
            raise ValidationError(
                f"{trip_file}: expected header 'origin,destination,hour,count', got {reader.fieldnames}"
            )
        for rownum, row in enumerate(reader, start=2):
            n_rows += 1
            try:
                origin, destination = row["origin"], row["destination"]
                hour = int(row["hour"])
                count = int(row["count"])
            except (TypeError, ValueError) as exc:
                errors.append(f"row {rownum}: unparseable ({exc})")
                continue
            if origin not in table:
                errors.append(f"row {rownum}: unknown origin {origin!r}")
                continue
            if destination not in table:
                errors.append(f"row {rownum}: unknown destination {destination!r}")
                continue
            if not 0 <= hour <= 23:
                errors.append(f"row {rownum}: hour {hour} outside 0-23")
                continue
            if count < 1:
                errors.append(f"row {rownum}: non-positive count {count}")
                continue
            merged[(origin, destination, hour)] = merged.get((origin, destination, hour), 0) + count
    _raise_if_errors(trip_file, errors)
    n_merged = n_rows - len(merged)
    if n_merged:
        log.info("%s: merged %d duplicate (origin, destination, hour) rows", trip_file, n_merged)
    trips = [TripRecord(o, d, h, c) for (o, d, h), c in sorted(merged.items())]
    return table, trips


def _raise_if_errors(path, errors):
    if errors:
        for msg in errors[:20]:
            log.error("%s: %s", path, msg)
        head = "; ".join(errors[:3])
        raise ValidationError(f"{path}: {len(errors)} malformed row(s): {head}")


def build_contact_matrix(table: LocationTable, trips) -> ContactMatrix:
    """Aggregate hourly trip records into a daily contact matrix.

    Populations are derived from the daily flow balance (see
    ``derive_populations``).
    """
    n = len(table)
    m = np.zeros((n, n), dtype=float)
    for trip in trips:
        j = table.index[trip.destination]
        k = table.index[trip.origin]
        m[j, k] += trip.count
    populations, clamps = derive_populations(m)
    return ContactMatrix(m=m, populations=populations, table=table, population_clamp_count=clamps)


def derive_populations(m: np.ndarray):
    """Populations from the daily balance (self + inflow - outflow) / 24.

    Values below POPULATION_FLOOR (including negatives from net
    exporters) are clamped to the floor; clamp events are counted and
    logged rather than treated as failures.

    Returns (populations, clamp_count).
    """
    inflow = m.sum(axis=1)
    outflow = m.sum(axis=0)
    raw = (np.diagonal(m) + inflow - outflow) / HOURS_PER_DAY
    clamps = int(np.count_nonzero(raw < POPULATION_FLOOR))
    if clamps:
        log.warning("population floor applied to %d location(s)", clamps)
    return np.maximum(raw, POPULATION_FLOOR), clamps


def matrix_from_flows(m, populations=None, table=None) -> ContactMatrix:
    """Build a ContactMatrix from a raw flow array.

    Convenience for synthetic inputs. Populations default to the flow
    balance; a table of placeholder coordinates is synthesized when none
    is given.
    """
    m = np.ascontiguousarray(np.asarray(m, dtype=float).copy())
    n = m.shape[0]
    if table is None:
        table = LocationTable(Location(f"L{i:04d}", 0.0, 0.0) for i in range(n))
    clamps = 0
    if populations is None:
        populations, clamps = derive_populations(m)
    else:
        populations = np.asarray(populations, dtype=float).copy()
    return ContactMatrix(m=m, populations=populations, table=table, population_clamp_count=clamps)


@dataclass(frozen=True)
class NetworkStats:
    """Degree statistics of the daily contact network."""

    num_locations: int
    num_edges: int
    degrees: np.ndarray = field(repr=False)
    mean_degree: float

    def to_json_dict(self) -> dict:
        return {
            "n": self.num_locations,
            "e": self.num_edges,
            "mean_degree": self.mean_degree,
            "degree_histogram": degree_histogram(self.degrees),
        }


def network_stats(matrix: ContactMatrix) -> NetworkStats:
    """Per-location degree (in plus out, self-flow counted once) and totals."""
    m = matrix.m
    degrees = m.sum(axis=1) + m.sum(axis=0) - np.diagonal(m)
    num_edges = int(np.count_nonzero(m) - np.count_nonzero(np.diagonal(m)))
    mean_degree = float(degrees.mean()) if matrix.n else 0.0
    return NetworkStats(
        num_locations=matrix.n,
        num_edges=num_edges,
        degrees=degrees,
        mean_degree=mean_degree,
    )


def degree_histogram(degrees: np.ndarray) -> list:
    """Log-binned degree counts as [bin_lo, bin_hi, count] triples.

    The first bin [0, 1) collects isolated locations; subsequent bins
    double in width.
    """
    degrees = np.asarray(degrees, dtype=float)
    out = [[0.0, 1.0, int(np.count_nonzero(degrees < 1.0))]]
    if degrees.size == 0 or degrees.max() < 1.0:
        return out
    hi = 1.0
    while hi <= degrees.max():
        lo, hi = hi, hi * 2.0
        out.append([lo, hi, int(np.count_nonzero((degrees >= lo) & (degrees < hi)))])
    return out


def write_network_stats(stats: NetworkStats, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(stats.to_json_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")


def save_matrix_npz(matrix: ContactMatrix, path) -> None:
    """Persist a matrix with its location table to a .npz file."""
    np.savez_compressed(
        path,
        m=matrix.m,
        populations=matrix.populations,
        ids=np.array(matrix.table.ids),
        lat=matrix.table.lat,
        lon=matrix.table.lon,
        clamps=np.array([matrix.population_clamp_count]),
    )


def load_matrix_npz(path) -> ContactMatrix:
    with np.load(path, allow_pickle=False) as data:
        table = LocationTable(
            Location(str(i), float(la), float(lo))
            for i, la, lo in zip(data["ids"], data["lat"], data["lon"])
        )
        return ContactMatrix(
            m=data["m"].copy(),
            populations=data["populations"].copy(),
            table=table,
            population_clamp_count=int(data["clamps"][0]),
        )
