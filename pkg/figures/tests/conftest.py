import json
import subprocess
import sys

import pytest

# reduced experiment specs: same CSV schemas as the full defaults, sized for
# test runtime.  fig6 keeps its full default (3000 runs) since the rendered
# ordering assertions refer to it; fig8 keeps the full 500 steps.
_SPECS = {
    "fig5": ({"seeds": [0, 1, 2, 3, 4], "T_grid": [100, 1000],
              "sigma_v_sq_grid": [0.01, 0.25, 1.0]}, "state_error.csv"),
    "fig6": (None, "secrecy.csv"),
    "fig7": ({"seeds": list(range(10)), "T_grid": [1000, 10000]},
             "topo_error.csv"),
    "fig8": (None, "defense.csv"),
}


@pytest.fixture(scope="session")
def reproduce_csvs(tmp_path_factory):
    """The four reproduce CSVs, generated through the ndss CLI."""
    root = tmp_path_factory.mktemp("csvs")
    paths = {}
    for kind, (overrides, csv_name) in _SPECS.items():
        out = root / kind
        cmd = [sys.executable, "-m", "ndss.cli", "reproduce", kind,
               "--out", str(out)]
        if overrides is not None:
            cfg = root / f"{kind}-spec.json"
            cfg.write_text(json.dumps(overrides))
            cmd += ["--config", str(cfg)]
        subprocess.run(cmd, check=True, capture_output=True)
        paths[kind] = out / csv_name
    return paths
