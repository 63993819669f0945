"""Smoke test for the evpose Python extension.

Build and install first, e.g. `maturin develop --release -m crates/python/Cargo.toml`,
then run `python python/smoke_test.py`.
"""

import math
import os
import tempfile

import evpose


def check(cond, msg):
    if not cond:
        raise AssertionError(msg)
    print("ok  ", msg)


def geometry():
    a = evpose.Pose.look_at((1.0, 0.2, 0.1))
    b = evpose.Pose((math.cos(0.1), 0.0, 0.0, math.sin(0.1)), (0.0, 0.0, 1.0)) * a
    rel = evpose.relative_pose(a, b)
    back = a * rel
    check(max(abs(x - y) for x, y in zip(back.translation, b.translation)) < 1e-12, "relative pose recomposes")
    check(abs(evpose.rotation_angle(a, b) - math.degrees(0.2)) < 1e-9, "rotation angle of a 0.2 rad turn")
    k = evpose.CameraIntrinsics(500, 500, 320, 240)
    (u, v), = k.project(evpose.Pose(translation=(0, 0, 2)), [(0.1, -0.2, 0.0)])
    check(abs(u - 345.0) < 1e-12 and abs(v - 190.0) < 1e-12, "pinhole projection")
    box = evpose.bbox_from_landmarks([(0, 0), (10, 20)], 0.1)
    check(box == (-0.5, -1.0, 10.5, 21.0), "bounding box grows 10% about its centre")


def pipeline():
    k = evpose.CameraIntrinsics(500, 500, 320, 240)
    sim = evpose.simulate("orbit", speed=0.3, duration=1.0, intrinsics=k)
    check(len(sim.events) > 10000, f"simulation produced {len(sim.events)} events")
    check(len(sim.ground_truth) == 11, "ground truth at 10 Hz")

    frames = evpose.events_to_frames(sim.events, 640, 480, 10_000)
    check(len(frames) > 50 and all(f.max() in (0.0, 1.0) for f in frames), f"{len(frames)} normalized frames")

    labels = evpose.make_labels(sim.ground_truth, k, 640, 480)
    landmarks = evpose.satellite_landmarks()
    estimates = []
    for i, label in enumerate(labels):
        corrs = evpose.predict_correspondences(label, sigma=0.5, seed=i)
        kept, _ = evpose.filter_correspondences(corrs)
        check(len(kept) >= 15, f"frame {i}: {len(kept)} correspondences kept")
        res = evpose.estimate_pose(corrs, landmarks, k)
        estimates.append((label.t, res.pose))
    phi, psi, steps = evpose.evaluate(estimates, sim.ground_truth)
    check(len(steps) == 10, "ten relative steps")
    check(phi < 0.005 and psi < 1.0, f"Phi={phi * 1000:.3f} mm, Psi={psi:.4f} deg")
    check(evpose.evaluate(sim.ground_truth, sim.ground_truth)[:2] == (0.0, 0.0), "self-evaluation is zero")

    frame, label = frames[len(frames) // 2], labels[5]
    a1, l1 = evpose.augment(frame, label, seed=3)
    a2, _ = evpose.augment(frame, label, seed=3)
    check(a1.pixels == a2.pixels, "augmentation is seed-deterministic")
    check(l1.pose.wxyz == label.pose.wxyz, "augmentation keeps the pose label")

    with tempfile.TemporaryDirectory() as d:
        for name in ("ev.csv", "ev.bin"):
            path = os.path.join(d, name)
            evpose.write_events(path, sim.events[:5000])
            check(evpose.read_events(path) == sim.events[:5000], f"{name} round trip")
        try:
            evpose.write_events(os.path.join(d, "bad.csv"), [(0, 0, 0, 2)])
        except ValueError:
            check(True, "invalid polarity rejected")
        else:
            raise AssertionError("invalid polarity accepted")


if __name__ == "__main__":
    geometry()
    pipeline()
    print("smoke test passed")
