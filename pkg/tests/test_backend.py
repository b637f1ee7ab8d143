"""The pure-numpy fallback (DFEE_DISABLE_NUMBA=1) must reproduce the numba path."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from dfee import _accel

SCRIPT = r"""
import json
import numpy as np
from dfee import _accel, kernels
from dfee.densities import DensityModel
from dfee.ensemble import EnsembleConfig, make_estimator, sample_ensemble
from dfee.lattice import BoxGeometry
from dfee.resolvent import SpectralParameter

cfg = EnsembleConfig(BoxGeometry(1, 40), DensityModel.exponential(1.0), 1.0, 6, master_seed=99)
ests = [make_estimator("block_entropy", M=10), make_estimator("cut_entropy", c=0, side="left"),
        make_estimator("fractional_moment", s=0.5, lam=0.5, eta=0.1, x=3, y=-1),
        make_estimator("projection_entry_abs", x=0, y=2)]
table = sample_ensemble(cfg, ests)
x = np.linspace(1e6, 1e6 + 1, 101)
print(json.dumps({"backend": _accel.BACKEND, "values": table.values.tolist(),
                  "welford": list(kernels.mean_and_m2(x))}))
"""


def _run(disable):
    env = dict(os.environ)
    env.pop("DFEE_DISABLE_NUMBA", None)
    if disable:
        env["DFEE_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True,
                         text=True, check=True, timeout=600)
    return json.loads(out.stdout.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def both():
    return _run(False), _run(True)


def test_flag_selects_backend(both):
    nb, np_ = both
    assert nb["backend"] == "numba"
    assert np_["backend"] == "numpy"


def test_backends_agree_on_estimators(both):
    nb, np_ = both
    assert np.allclose(nb["values"], np_["values"], rtol=1e-9, atol=1e-11)


def test_backends_agree_on_accumulator(both):
    nb, np_ = both
    assert np.allclose(nb["welford"], np_["welford"], rtol=1e-12)


@pytest.mark.parametrize("value,expected", [("1", False), ("true", False), ("0", True), ("", True)])
def test_flag_parsing(value, expected):
    assert _accel._numba_enabled({"DFEE_DISABLE_NUMBA": value}) is expected
