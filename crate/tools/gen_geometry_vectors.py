#!/usr/bin/env python3
"""High-precision oracle for the Poincaré-ball conformance vectors.

Evaluates the closed-form Möbius/exp/log/distance expressions with mpmath at
50 decimal digits and emits one JSON object per line (operation name, inputs,
ball parameter c, expected output rounded to 12 significant digits). Sample
points stay well inside the ball so no numerical guard in the implementation
under test is active.

Usage: python3 tools/gen_geometry_vectors.py > crates/core/tests/data/geometry_vectors.jsonl
"""

import json
import random

import mpmath as mp

mp.mp.dps = 50


def sig12(x):
    return float(mp.nstr(x, 12, strip_zeros=False))


def norm(v):
    return mp.sqrt(mp.fsum([a * a for a in v]))


def dot(a, b):
    return mp.fsum([x * y for x, y in zip(a, b)])


def mobius_add(x, y, c):
    x2, y2, xy = dot(x, x), dot(y, y), dot(x, y)
    ax = 1 + 2 * c * xy + c * y2
    ay = 1 - c * x2
    den = 1 + 2 * c * xy + c * c * x2 * y2
    return [(ax * xi + ay * yi) / den for xi, yi in zip(x, y)]


def mobius_scalar_mul(r, x, c):
    xn = norm(x)
    if xn == 0:
        return [mp.mpf(0)] * len(x)
    sc = mp.sqrt(c)
    factor = mp.tanh(r * mp.atanh(sc * xn)) / (sc * xn)
    return [xi * factor for xi in x]


def mobius_matvec(m, x, c):
    mx = [dot(row, x) for row in m]
    mxn = norm(mx)
    if mxn == 0:
        return [mp.mpf(0)] * len(m)
    xn = norm(x)
    sc = mp.sqrt(c)
    factor = mp.tanh(mxn / xn * mp.atanh(sc * xn)) / (sc * mxn)
    return [v * factor for v in mx]


def exp_map_origin(v, c):
    vn = norm(v)
    if vn == 0:
        return [mp.mpf(0)] * len(v)
    sc = mp.sqrt(c)
    factor = mp.tanh(sc * vn) / (sc * vn)
    return [vi * factor for vi in v]


def log_map_origin(x, c):
    xn = norm(x)
    if xn == 0:
        return [mp.mpf(0)] * len(x)
    sc = mp.sqrt(c)
    factor = mp.atanh(sc * xn) / (sc * xn)
    return [xi * factor for xi in x]


def distance(x, y, c):
    diff = mobius_add([-xi for xi in x], y, c)
    sc = mp.sqrt(c)
    return 2 / sc * mp.atanh(sc * norm(diff))


def rand_point(rng, dim, c, radius=0.85):
    # uniform direction, radius up to `radius`/sqrt(c)
    while True:
        v = [mp.mpf(rng.uniform(-1, 1)) for _ in range(dim)]
        n = norm(v)
        if n > 0.05:
            break
    scale = mp.mpf(rng.uniform(0.02, radius)) / (mp.sqrt(c) * n)
    return [vi * scale for vi in v]


def rand_tangent(rng, dim):
    return [mp.mpf(rng.uniform(-1.5, 1.5)) for _ in range(dim)]


def emit(op, c, inputs, expected):
    if not isinstance(expected, list):
        expected = [expected]
    print(
        json.dumps(
            {
                "op": op,
                "c": float(c),
                "inputs": inputs,
                "expected": [sig12(e) for e in expected],
            }
        )
    )


def fl(v):
    return [float(x) for x in v]


def main():
    rng = random.Random(20240811)
    curvatures = [mp.mpf("0.5"), mp.mpf(1), mp.mpf(2)]
    dims = [1, 2, 3, 5]

    for c in curvatures:
        for dim in dims:
            for _ in range(3):
                x = rand_point(rng, dim, c)
                y = rand_point(rng, dim, c)
                emit("mobius_add", c, {"x": fl(x), "y": fl(y)}, mobius_add(x, y, c))
                emit("distance", c, {"x": fl(x), "y": fl(y)}, distance(x, y, c))

                r = mp.mpf(rng.uniform(-2.5, 2.5))
                emit(
                    "mobius_scalar_mul",
                    c,
                    {"r": float(r), "x": fl(x)},
                    mobius_scalar_mul(r, x, c),
                )

                v = rand_tangent(rng, dim)
                emit("exp_map_origin", c, {"v": fl(v)}, exp_map_origin(v, c))
                emit("log_map_origin", c, {"x": fl(x)}, log_map_origin(x, c))

                out_dim = max(1, dim - 1)
                m = [
                    [mp.mpf(rng.uniform(-1.2, 1.2)) for _ in range(dim)]
                    for _ in range(out_dim)
                ]
                emit(
                    "mobius_matvec",
                    c,
                    {"m": [fl(row) for row in m], "x": fl(x)},
                    mobius_matvec(m, x, c),
                )

    # documented extensions and identities, exact by definition
    one = mp.mpf(1)
    emit("mobius_scalar_mul", one, {"r": 2.0, "x": [0.0, 0.0]}, [mp.mpf(0), mp.mpf(0)])
    emit(
        "mobius_matvec",
        one,
        {"m": [[0.0, 0.0], [0.0, 0.0]], "x": [0.3, 0.1]},
        [mp.mpf(0), mp.mpf(0)],
    )
    emit("exp_map_origin", one, {"v": [0.0, 0.0, 0.0]}, [mp.mpf(0)] * 3)
    emit("log_map_origin", one, {"x": [0.0]}, [mp.mpf(0)])
    emit(
        "mobius_add",
        one,
        {"x": [0.3, 0.0], "y": [0.4, 0.0]},
        mobius_add([mp.mpf("0.3"), mp.mpf(0)], [mp.mpf("0.4"), mp.mpf(0)], one),
    )
    emit(
        "distance",
        one,
        {"x": [0.0, 0.0], "y": [0.5, 0.0]},
        distance([mp.mpf(0), mp.mpf(0)], [mp.mpf("0.5"), mp.mpf(0)], one),
    )


if __name__ == "__main__":
    main()
