import numpy as np
import pytest

from epitransit.mobility import Location, LocationTable, matrix_from_flows
from epitransit.synthcity import CityConfig, generate_synthetic_city


@pytest.fixture
def square_table():
    """Four locations on a rough 100 km square."""
    return LocationTable(
        [
            Location("A", 0.0, 0.0),
            Location("B", 0.0, 1.0),
            Location("C", 1.0, 0.0),
            Location("D", 1.0, 1.0),
        ]
    )


@pytest.fixture
def write_csvs(tmp_path):
    def _write(locations_rows, trips_rows):
        loc_path = tmp_path / "locations.csv"
        trip_path = tmp_path / "trips.csv"
        loc_path.write_text("id,lat,lon\n" + "\n".join(locations_rows) + "\n")
        trip_path.write_text("origin,destination,hour,count\n" + "\n".join(trips_rows) + "\n")
        return trip_path, loc_path

    return _write


@pytest.fixture(scope="session")
def small_city():
    """A 60-location city shared by the slower integration tests."""
    config = CityConfig(
        n_locations=60, extent_km=100.0, pop_median=800.0, pop_sigma=0.8,
        trips_per_capita=0.5, d0_km=20.0,
    )
    table, matrix = generate_synthetic_city(config, 2024)
    return matrix


def two_location_matrix(flow_ab=5.0, flow_ba=5.0, n_a=100.0, n_b=100.0):
    """Matrix helper: index 0 = A, 1 = B, m[dest, origin]."""
    m = np.array([[0.0, flow_ba], [flow_ab, 0.0]])
    return matrix_from_flows(m, populations=np.array([n_a, n_b]))
