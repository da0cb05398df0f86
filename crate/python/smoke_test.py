"""Smoke test for the Python extension.

Build first with `cargo build --release -p modsc-py`. The script copies the
compiled library into a temporary directory as `modsc.so` and imports it.
Set MODSC_LIB to use a specific library file.
"""

import importlib
import os
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def find_library():
    env = os.environ.get("MODSC_LIB")
    if env:
        return Path(env)
    names = ["libmodsc.so", "libmodsc.dylib", "modsc.dll"]
    for profile in ["release", "debug"]:
        for name in names:
            p = ROOT / "target" / profile / name
            if p.exists():
                return p
    sys.exit("extension not built; run `cargo build --release -p modsc-py`")


def load():
    lib = find_library()
    tmp = Path(tempfile.mkdtemp(prefix="modsc-py-"))
    suffix = ".pyd" if lib.suffix == ".dll" else ".so"
    shutil.copy(lib, tmp / f"modsc{suffix}")
    sys.path.insert(0, str(tmp))
    return importlib.import_module("modsc")


SMALL = """
seeds = [0, 1]
baseline_trials = 10

[structure]
d_x = 16
m = 3

[latent]
steps = 8
trajectories = 12

[jacobian]
samples = 48
"""


def main():
    m = load()

    g = m.StructuralGraph.generate(20, 4, seed=7)
    assert (g.d_x, g.d_z) == (20, 4)
    rows = g.rows()
    assert all(any(r) for r in rows)
    assert m.StructuralGraph.from_json(g.to_json()).rows() == rows
    labels = g.disjoint_clusters()
    assert len(labels) == 20 and len(g.overlapping_clusters()) == 4

    dec = m.Decoder(g, 3)
    z = [0.1, -0.4, 0.8, 0.3]
    x = dec.decode(z)
    jac = dec.jacobian(z)
    assert len(x) == 20 and len(jac) == 4 and len(jac[0]) == 20
    for i, row in enumerate(rows):
        for k, bit in enumerate(row):
            if not bit:
                assert jac[k][i] == 0.0

    h = 1e-6
    for k in range(4):
        zp = list(z)
        zm = list(z)
        zp[k] += h
        zm[k] -= h
        fd = [(a - b) / (2 * h) for a, b in zip(dec.decode(zp), dec.decode(zm))]
        assert max(abs(a - b) for a, b in zip(fd, jac[k])) < 1e-5

    graph, gram = m.instance_gram(0, SMALL)
    truth = graph.disjoint_clusters()
    c = m.self_expression(gram, 0.05)
    assert all(c[j][j] == 0.0 for j in range(len(c)))
    det = m.subspace_detection(c, truth)
    assert 0.0 <= det["strict_pass_fraction"] <= 1.0
    gap = m.eigengap(c, max_k=8)
    pred = m.spectral_cluster(c, gap["k"], seed=0)
    h_, c_, nmi = m.v_measure(pred, truth)
    assert h_ > 0.9, (h_, c_, nmi)

    cover = [[0, 1, 2], [2, 3, 4]]
    assert abs(m.onmi(cover, cover) - 1.0) < 1e-12
    assert abs(m.overlap_f1(cover, cover) - 1.0) < 1e-12
    assert abs(m.omega_index(cover, cover, 5) - 1.0) < 1e-12
    assert m.symnmf_cluster(c, graph.d_z, seed=1)
    assert m.saac_cluster(c, graph.d_z, seed=1)

    seed = m.run_seed(0, SMALL)
    rep = m.run_experiment(SMALL)
    assert [s["method"] for s in rep["summary"]] == ["SSC", "Random"]
    assert rep["seeds"][0] == seed

    try:
        m.run_experiment(SMALL.replace("d_x = 16", "d_x = 3"))
    except ValueError as e:
        assert "d_x" in str(e)
    else:
        raise AssertionError("infeasible sizes accepted")

    assert "[structure]" in m.config_template()
    ssc = rep["summary"][0]
    print(f"ok: SSC NMI {ssc['nmi']['mean']:.3f} on {len(rep['seeds'])} seeds, strict pass {det['strict_pass_fraction']:.2f}")


if __name__ == "__main__":
    main()
