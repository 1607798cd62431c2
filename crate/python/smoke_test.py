"""Smoke test for the latentfit_py extension module.

Build and install the module first:

    pip install --no-build-isolation ./crates/python
    python python/smoke_test.py
"""

import json
import math
import random

import latentfit_py as lf


def box_cloud(rng, n, sx, sy, sz):
    pts = []
    for _ in range(n):
        p = [rng.uniform(-sx, sx), rng.uniform(-sy, sy), rng.uniform(-sz, sz)]
        axis = rng.randrange(3)
        p[axis] = [sx, sy, sz][axis] * rng.choice([-1.0, 1.0])
        pts.append(p)
    return pts


def main():
    rng = random.Random(0)

    a = box_cloud(rng, 64, 0.8, 0.4, 0.3)
    b = box_cloud(rng, 64, 0.3, 0.8, 0.5)
    assert lf.chamfer3(a, a) == 0.0
    assert lf.chamfer3(a, b) > 0.0
    exact = lf.emd_exact(a, b)
    assert abs(lf.emd_approx(a, b) - exact) <= 0.05 * exact

    pose = lf.Pose.from_degrees(30.0, 10.0, 0.0)
    r = pose.rotation_matrix()
    for i in range(3):
        for j in range(3):
            dot = sum(r[i][k] * r[j][k] for k in range(3))
            assert abs(dot - (1.0 if i == j else 0.0)) < 1e-12
    flat = lf.project(a, lf.Pose())
    assert all(abs(p[0] - q[0]) < 1e-12 and abs(p[1] - q[1]) < 1e-12 for p, q in zip(flat, a))

    shapes = [box_cloud(rng, 32, rng.uniform(0.3, 0.9), rng.uniform(0.3, 0.9), 0.3) for _ in range(24)]
    model, losses = lf.train_autoencoder(shapes, epochs=20, batch_size=8, latent_dim=4, seed=1)
    assert losses[-1] < losses[0]
    codes = [model.encode(s) for s in shapes]
    gmm = lf.fit_gmm(codes, 2, seed=3)
    assert gmm.n_components == 2 and abs(sum(gmm.weights) - 1.0) < 1e-12
    assert all(math.isfinite(gmm.nll(c)) for c in codes)

    target = model.decode(gmm.means[0])
    sil = lf.project(target, lf.Pose.from_degrees(20.0, 5.0, 0.0))
    config = json.dumps({"max_iterations": 60, "switch_iteration": 30})
    result = lf.reconstruct(model, gmm, sil, config=config)
    assert len(result.cloud) == model.n_points
    assert math.isfinite(result.l_sil)
    assert json.loads(result.json)["best_restart"] == result.best_restart
    print(result, result.pose)
    print("smoke test passed")


if __name__ == "__main__":
    main()
