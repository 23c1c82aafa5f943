"""The numba kernels and the numpy fallback must agree to the last bit on
everything that feeds the reduction/oracle contracts."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

PROBE = r"""
import json
import numpy as np
import sdlab as S
from sdlab.distill import reward_sds_grad
from sdlab.render import IDENTITY_VIEW
from sdlab import backend

rng = np.random.default_rng(0)
sched = S.make_schedule(1000, "cosine")
d = S.MlpDenoiser(2, 4, 1000, hidden=(16, 16))
d.init_params(np.random.default_rng(7))
cond = S.class_condition(0, 4)

out = {"backend": backend.BACKEND}
out["eps"] = d.epsilon(rng.standard_normal((8, 2)), cond, 321).tolist()

pr = S.PatchRenderer(16, 16, 8)
theta = rng.standard_normal(256)
view = S.View(0.37, 1.1, -0.8, 1.05)
out["render"] = pr.render(theta, view).tolist()
out["vjp"] = pr.vjp(theta, view, rng.standard_normal(64)).tolist()

cfg = S.DistillConfig(sched=sched, total_steps=10, reward_steps=10,
                      candidates=4, denoise_steps=2,
                      guidance=S.GuidanceConfig(7.5), seed=0)
ge = reward_sds_grad(S.IdentityRenderer(2), np.array([0.2, -0.1]),
                     IDENTITY_VIEW, d, cond, S.SmoothnessReward(1.0),
                     cfg, np.random.default_rng(5))
out["rsds"] = ge.grad.tolist()
print(json.dumps(out))
"""


def _probe(backend):
    env = dict(os.environ, SDLAB_BACKEND=backend)
    proc = subprocess.run([sys.executable, "-c", PROBE], env=env,
                          capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr
    return json.loads(proc.stdout.strip().splitlines()[-1])


@pytest.mark.slow
def test_numpy_backend_matches_numba():
    a = _probe("numpy")
    b = _probe("numba")
    assert a["backend"] == "numpy" and b["backend"] == "numba"
    for key in ("eps", "render", "vjp", "rsds"):
        np.testing.assert_allclose(a[key], b[key], rtol=1e-13, atol=1e-13,
                                   err_msg=key)


def test_unknown_backend_rejected():
    env = dict(os.environ, SDLAB_BACKEND="cuda")
    proc = subprocess.run([sys.executable, "-c", "import sdlab"], env=env,
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode != 0
    assert "SDLAB_BACKEND" in proc.stderr
