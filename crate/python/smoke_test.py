"""Exercises the bindings end to end on a tiny problem.

Build first:  pip install --no-build-isolation ./crates/python   (or `maturin develop`)
"""
import json
import struct

import cppnlab


def png_size(data: bytes) -> tuple:
    assert data[:8] == b"\x89PNG\r\n\x1a\n"
    return struct.unpack(">II", data[16:24])


def main() -> None:
    generations, champion = cppnlab.evolve(seed=0, generations=20)
    assert len(generations) == 21 and all(len(g) == 15 for g in generations)

    again = cppnlab.Genome.from_text(champion.to_text())
    assert again == champion and again.content_id == champion.content_id

    mlp = champion.layerize()
    assert mlp.widths[0] == 3 and mlp.widths[-1] == 3
    assert champion.max_abs_diff(mlp, resolution=32) <= 1e-9
    assert cppnlab.Mlp.from_text(mlp.to_text()) == mlp

    assert png_size(champion.render_png(64)) == (64, 64)
    assert champion.render_png(32) == mlp.render_png(32)
    assert mlp.sweep_png(1, 0, 0, 0.0, resolution=32) == mlp.render_png(32)

    flags = mlp.novelty(resolution=32)
    assert all(novel for layer, _, novel in flags if layer == 0)

    variances, directions = mlp.pca(1, resolution=16)
    assert all(a >= b for a, b in zip(variances, variances[1:]))
    assert len(directions) == len(variances)

    cfg = json.dumps({"iterations": 200, "resolution": 16, "optimizer": "adam", "learning_rate": 0.01, "trace_stride": 50})
    trained, trace = cppnlab.train(mlp, champion, cfg)
    assert trace[0][0] == 0 and trace[-1][0] == 200
    assert trace[-1][1] < trace[0][1], trace

    _, raw_trace = cppnlab.train_raw(champion, champion, cfg)
    assert raw_trace[-1][1] < raw_trace[0][1], raw_trace

    try:
        cppnlab.Genome.from_text("{}")
    except ValueError:
        pass
    else:
        raise AssertionError("malformed genome accepted")

    print(f"ok: champion {champion!r}, trained {trained!r}, mse {trace[0][1]:.4f} -> {trace[-1][1]:.4f}")


if __name__ == "__main__":
    main()
