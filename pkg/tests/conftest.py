import pytest

from truckends.synth import SynthScenario, generate_scenario


@pytest.fixture(scope="session")
def small_synth():
    sc = SynthScenario(seed=7, n_trucks=4, days=2, grid_nx=9, grid_ny=9, n_clients=16, n_calibration_trips=40)
    return generate_scenario(sc)


@pytest.fixture(scope="session")
def small_synth_dir(small_synth, tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    small_synth.write(d)
    return d


def pipeline_config(synth_dir, out="out"):
    inputs = {k: f"{k_file}" for k, k_file in [
        ("gps", "gps.csv"),
        ("nodes", "nodes.csv"),
        ("edges", "edges.csv"),
        ("pois", "pois.geojson"),
        ("boundary", "boundary.geojson"),
        ("calibration", "calibration.csv"),
        ("truth", "truth.csv"),
    ]}
    return {"inputs": {k: str(synth_dir / v) for k, v in inputs.items()}, "out": str(synth_dir / out)}
