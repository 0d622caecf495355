"""Smoke test for the spinecomp Python bindings.

Build and install first:  maturin develop -m crates/python/Cargo.toml
"""

import math
import os
import tempfile

import numpy as np

import spinecomp_py as sc


def main():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-20.0, 20.0, size=(300, 3))
    cloud = sc.PointCloud(pts)
    assert len(cloud) == 300

    assert sc.chamfer(cloud, cloud) == 0.0
    assert sc.fscore(cloud, cloud, 0.5) == 1.0
    shifted = sc.PointCloud([[0.0, 0.1, 0.0], [2.0, 0.1, 0.0]])
    base = sc.PointCloud([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    snr_db, _, _ = sc.snr(shifted, base)
    assert abs(snr_db - 20.0) < 1e-9, snr_db
    assert abs(sc.emd(sc.PointCloud([[0, 0, 0]]), sc.PointCloud([[3, 4, 0]])) - 5.0) < 1e-12

    split = sc.chamfer_split(cloud, cloud, sc.PointCloud(pts[:100]))
    assert split["cd_top"] == 0.0 and split["tau"] > 0.0

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "cloud.ply")
        sc.write_ply(path, cloud)
        back = np.asarray(sc.read_ply(path).points)
        assert np.array_equal(back, pts)

        model = sc.CompletionModel("desk", seed=0)
        completed = model.complete(cloud)
        assert len(completed) == model.n_output
        assert all(math.isfinite(v) for p in completed.points for v in p)
        ckpt = os.path.join(d, "model.ckpt")
        model.save(ckpt)
        again = sc.CompletionModel.load(ckpt).complete(cloud)
        assert np.array_equal(np.asarray(again.points), np.asarray(completed.points))

    assert "[train]" in sc.resolve_config(overrides=["train.lr=0.002"])
    try:
        sc.resolve_config(overrides=["train.bogus=1"])
    except sc.SpinecompError as e:
        assert e.category == "config"
    else:
        raise AssertionError("unknown key accepted")

    try:
        sc.emd(sc.PointCloud(pts[:3]), sc.PointCloud(pts[:4]))
    except sc.SpinecompError as e:
        assert e.category == "unequal-sizes"
    else:
        raise AssertionError("unequal sizes accepted")

    print(f"smoke test passed ({model.parameter_count} parameters, {len(completed)} completed points)")


if __name__ == "__main__":
    main()
