"""The compiled and pure-Python rollout kernels must agree bit for bit."""

import dataclasses
import os
import subprocess
import sys

import numpy as np
import pytest

from planc.config import Config
from planc.sim import get_kernel, kernel_name, rollout, rollout_rng
from planc.terrain import FAMILIES, generate_terrain

try:
    from planc import _rollout  # noqa: F401

    HAVE_EXT = True
except ImportError:
    HAVE_EXT = False

needs_ext = pytest.mark.skipif(not HAVE_EXT, reason="compiled extension not built")

MODES = {
    "exact": {},
    "noise": {"noise": True},
    "disturb": {"disturb": True},
    "both": {"noise": True, "disturb": True},
}


@needs_ext
@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("mode", sorted(MODES))
def test_compiled_matches_python(family, mode):
    cfg = Config()
    cfg = dataclasses.replace(cfg, sim=dataclasses.replace(cfg.sim, **MODES[mode]))
    for seed in range(3):
        seq = generate_terrain(family, 1.0, seed)
        a = rollout(seq, cfg, rollout_rng(family, seed), kernel="python")
        b = rollout(seq, cfg, rollout_rng(family, seed), kernel="compiled")
        assert a.outcome == b.outcome and a.failed_step == b.failed_step
        assert np.array_equal(a.rows, b.rows, equal_nan=True)
        assert np.array_equal(a.events, b.events)
        assert np.array_equal(a.impacts, b.impacts, equal_nan=True)
        assert (a.v_min, a.v_max) == (b.v_min, b.v_max)


@needs_ext
def test_ablations_match():
    seq = generate_terrain("height_varying", 1.0, 9)
    cfg = Config()
    for kw in ({"fixed_T": 0.4}, {"fixed_udes": 0.0}, {"fixed_T": 0.35, "fixed_udes": 0.0}):
        a = rollout(seq, cfg, kernel="python", **kw)
        b = rollout(seq, cfg, kernel="compiled", **kw)
        assert np.array_equal(a.rows, b.rows, equal_nan=True) and a.outcome == b.outcome


@needs_ext
def test_default_is_compiled():
    if os.environ.get("PLANC_PURE_PYTHON", "") not in ("", "0"):
        pytest.skip("pure-Python mode forced by the environment")
    assert kernel_name() == "compiled"


def test_env_forces_python():
    env = dict(os.environ, PLANC_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "from planc.sim import kernel_name; print(kernel_name())"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "python"


def test_unknown_kernel():
    with pytest.raises(ValueError):
        get_kernel("fortran")
