"""Exercise the Python bindings end to end on a small synthetic specimen.

Build and install the extension first, e.g.

    pip install maturin
    maturin develop -m crates/python/Cargo.toml --release
"""

import json
import math
import os
import tempfile

import pgae_py as pg

SPEC = {
    "plate_thickness_mm": 4.0,
    "height": 16,
    "width": 16,
    "n_frames": 32,
    "frame_rate_hz": 10.0,
    "noise_std": 0.01,
    "seed": 3,
    "defects": [
        {"shape": "rect", "center": [5, 5], "size": [4, 4], "depth_mm": 0.5},
        {"shape": "circle", "center": [11, 11], "diameter": 4, "depth_mm": 1.0},
    ],
}


def main():
    seq, defects, sound = pg.synthesize(json.dumps(SPEC))
    assert seq.shape == (32, 16, 16), seq.shape
    assert len(defects) == 2

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "seq.tsf")
        seq.save(path)
        again = pg.load_sequence(path)
        # samples are stored as f32
        for a, b in zip(again.frame(5), seq.frame(5)):
            assert all(math.isclose(x, y, rel_tol=1e-6) for x, y in zip(a, b))

    m = pg.standardize(seq)
    assert m.shape == (256, 32)
    model = pg.fit_pca(m, 4)
    assert model.d == 4
    assert abs(sum(pg.fit_pca(m, 32).explained_variance_ratio) - 1.0) < 1e-9

    net, report = pg.train(m, model, seed=1, max_epochs=5, learning_rate=1e-3, batch_size=64, hidden=[8])
    assert report.epochs == 5
    assert report.total_loss[-1] < report.total_loss[0]
    latents = pg.latent_images(net, m)
    assert len(latents) == 4 and len(latents[0]) == 16

    c = pg.contrast(latents[0], defects[0], sound)
    assert 0.0 <= c <= 1.0
    assert pg.iou(defects[0], defects[0]) == 1.0
    assert pg.loss_kd([1.0, 0.0], [-2.0, 0.0]) == 2.0
    plateau = pg.slab_surface_temp(2.0, 0.11, 200.0)
    assert math.isclose(plateau, 0.5, rel_tol=1e-9)

    try:
        pg.load_sequence("/nonexistent.tsf")
    except OSError as e:
        assert "E_PATH" in str(e)
    else:
        raise AssertionError("missing file accepted")

    print(f"ok: final mean cosine {report.final_mean_cosine:.3f}, contrast {c:.3f}")


if __name__ == "__main__":
    main()
