"""End-to-end smoke test of the pygeoscene bindings.

Build and install the extension first:

    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/pygeoscene-*.whl
    python python/smoke_test.py
"""

import json
import math
import random
import tempfile
from pathlib import Path

import pygeoscene as gs


def check_losses():
    rng = random.Random(0)
    shape = (4, 5, 3)
    n = 4 * 5 * 3
    rough = [rng.uniform(-1, 1) for _ in range(n)]
    shifted = [v + 0.25 for v in rough]
    assert abs(gs.pmse_loss(rough, shifted, shape)) < 1e-12

    other = [rng.uniform(-1, 1) for _ in range(n)]
    d = [a - b for a, b in zip(rough, other)]
    expect = sum(x * x for x in d) / n - (sum(d) / n) ** 2
    assert math.isclose(gs.pmse_loss(rough, other, shape), expect, rel_tol=1e-12)

    rec = gs.reconstruction_loss([rough, other], [other, rough], shape)
    assert math.isclose(rec, sum(abs(x) for x in d) / n, rel_tol=1e-12)

    d_loss, g_loss = gs.lsgan_losses([1.0, 1.0], [0.0, 0.0])
    assert (d_loss, g_loss) == (0.0, 1.0)

    assert gs.total_objective(1, 1, 1, 1) == 20.0
    try:
        gs.pmse_loss([0.0] * 3, [0.0] * 3, shape)
    except ValueError as e:
        assert "shape" in str(e)
    else:
        raise AssertionError("bad shape accepted")


def check_arch():
    assert gs.arch_receptive_field() == 70
    shapes = gs.arch_shapes("predictor", (256, 256, 3))
    assert shapes[-1] == (256, 256, 128)
    assert min(s[0] for s in shapes) == 4
    color = gs.arch_shapes("color", (256, 256, 3))
    assert min(s[0] for s in color) == 64 and color[-1] == (256, 256, 256)
    assert gs.annotation_cost(100, 20) == 1200.0


def check_pipeline(tmp: Path):
    config = gs.write_demo(tmp / "demo")
    project = gs.Project([config], seed=3)
    assert "mug" in project.categories
    assert project.annotation_cost > 0
    up = project.pose_density("mug", (1.0, 0.0, 0.0, 0.0))
    flipped = project.pose_density("mug", (0.0, 1.0, 0.0, 0.0))
    assert up > flipped

    summary = project.generate(4, tmp / "ds")
    assert summary["stats"]["accepted"] == 4
    manifest = tmp / "ds" / "manifest.json"
    report = gs.validate(manifest)
    assert report["ok"], report
    stats = gs.stats(manifest, verify=True)
    assert stats["recount_matches"] is True
    images, annotations = gs.export_coco(manifest, tmp / "coco.json")
    assert images == 4 and annotations == stats["instances"]
    coco = json.loads((tmp / "coco.json").read_text())
    assert len(coco["annotations"]) == annotations

    again = gs.Project([config], seed=3)
    again.generate(4, tmp / "ds2")
    a = (tmp / "ds" / "samples" / "000003.seg.png").read_bytes()
    b = (tmp / "ds2" / "samples" / "000003.seg.png").read_bytes()
    assert a == b

    try:
        gs.Project([tmp / "missing.json"])
    except OSError:
        pass
    else:
        raise AssertionError("missing config accepted")


def main():
    check_losses()
    check_arch()
    with tempfile.TemporaryDirectory() as d:
        check_pipeline(Path(d))
    print("pygeoscene smoke test ok")


if __name__ == "__main__":
    main()
