"""Smoke test for the `drr` extension module.

Build and run:
    cargo build --release -p drr-python --features extension-module
    cp target/release/libdrr.so python/drr.so
    python3 python/smoke_test.py
"""

import json
import math

import drr


def main():
    cam = drr.Camera.view(width=64, height=64, pitch=3.0)
    sphere = drr.Mesh.icosphere([0.0, 0.0, 0.0], 50.0, level=4)
    values, valid, repaired = drr.distance_map(sphere, cam)
    centre = values[32][32]
    assert abs(centre - 100.0) < 0.5, centre
    assert all(all(row) for row in valid)
    assert not any(any(row) for row in repaired)

    model = drr.ShapeModel.synthetic()
    settings = drr.Settings.default()
    truth = drr.Params([0.5, -0.5], rotation=[0.05, -0.03, 0.1], translation=[2.0, -1.0, 3.0])
    target = drr.render(model.instantiate(truth), cam, settings)
    assert all(0.0 < v <= 1.0 for row in target for v in row)
    assert abs(drr.ngc(target, target) - 1.0) < 1e-12

    init = drr.Params([0.0, 0.0], rotation=[0.1, -0.05, 0.15], translation=[6.0, -5.0, 4.0])
    fitted, report_json = drr.register(model, target, cam, settings, init, truth=truth)
    report = json.loads(report_json)
    m = report["metrics"]
    assert report["final_loss"] < report["initial_loss"]
    assert m["final_hausdorff_mm"] < m["initial_hausdorff_mm"]
    t_err = math.dist(fitted.translation, truth.translation)
    print(f"central chord {centre:.3f} mm; registration {report['iterations']} evaluations, "
          f"Hausdorff {m['initial_hausdorff_mm']:.2f} -> {m['final_hausdorff_mm']:.2f} mm, "
          f"translation error {t_err:.2f} mm")
    print("ok")


if __name__ == "__main__":
    main()
