"""Smoke test for the scod_py extension module.

Build and install first:  pip install --no-build-isolation -e crates/scod-py
Then run:                 python3 python/smoke_test.py
"""

import math

import scod_py as s


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    a = s.Box(0.0, 0.0, 2.0, 2.0)
    b = s.Box(1.0, 1.0, 3.0, 3.0)
    assert close(s.iou(a, b), 1.0 / 7.0)
    assert s.aiou(a, b, 1.0) == s.iou(a, b)
    assert s.aiou(a, b, 0.8) < s.iou(a, b)
    assert close(s.relative_change(0.80, 0.72), 0.08 / 0.72)

    sq = s.squeeze(s.Box(0.0, 0.0, 10.0, 4.0), 0.5)
    assert sq.corners() == (2.5, 1.0, 7.5, 3.0), sq

    g = s.aiou_loss_grad(a, b, 0.8)
    fd = s.finite_diff_grad(a, b, 0.8)
    assert all(close(x, y, 1e-6) for x, y in zip(g["corners"], fd["corners"])), (g, fd)
    assert not g["at_kink"]

    ranges = s.derive_ranges([(32, 64, 8), (64, 128, 16), (128, 256, 32)])
    assert [r[2] for r in ranges] == [3072.0, 12288.0, 49152.0]
    assert s.assign_layer(s.Box(0, 0, 48, 64), ranges) == 2
    assert s.assign_layer(s.Box(0, 0, 1000, 1000), ranges) == 3

    labels = s.generate_labels(32, 32, 3, [(s.Box(4, 4, 20, 20), 3)], ranges[0], 4, 4, 8)
    assert labels == [[3, 3, 3, 0]] * 3 + [[0, 0, 0, 0]], labels

    n = 20
    uniform = [[[1.0 / (n + 1)] * 2] * 2 for _ in range(n + 1)]
    assert close(s.scws_loss(uniform, [[0, 5], [20, 1]]), math.log(21))
    grad = s.scws_loss_grad([[[0.0]], [[1.0]]], [[1]])
    assert close(grad[0][0][0] + grad[1][0][0], 0.0)

    traj = s.box_fit(s.Box(0, 0, 2, 2), s.Box(0.5, 0.5, 2.5, 2.5), 0.8, 0.01, 500)
    assert len(traj) == 501 and traj[-1][1] > traj[0][1]

    rows = s.fig4_rows(0, 200, [0.8])
    assert len(rows) == 200 and all(r[2] >= r[1] - 1e-9 for r in rows)

    try:
        s.Box(3, 0, 1, 1)
    except ValueError:
        pass
    else:
        raise AssertionError("inverted box accepted")
    try:
        s.aiou(a, b, 1.5)
    except ValueError:
        pass
    else:
        raise AssertionError("ratio above 1 accepted")

    print("scod_py smoke test: ok")


if __name__ == "__main__":
    main()
