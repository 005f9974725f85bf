"""Smoke test for the taxembed_py extension.

Build it first, e.g. `pip install --no-build-isolation -e crates/py`, then run
`python python/smoke_test.py` from the repository root.
"""

import math
import pathlib
import tempfile

import taxembed_py as tx

ROOT = pathlib.Path(__file__).resolve().parent.parent
DESK = ROOT / "configs" / "desk.toml"


def check(cond, msg):
    if not cond:
        raise SystemExit(f"FAIL: {msg}")
    print(f"ok  {msg}")


def main():
    enc = tx.Encoder(q=32)
    v = enc.encode("senior rust engineer")
    check(len(v) == 32 and abs(math.fsum(x * x for x in v) - 1.0) < 1e-12, "encoder output is unit length")
    check(abs(tx.cosine(v, [2 * x for x in v]) - 1.0) < 1e-9, "cosine is scale free")

    check(abs(tx.ce_loss([0.25] * 4, 2) - math.log(4)) < 1e-9, "uniform CE is ln 4")
    check(abs(tx.margin_triplet_loss([1.0, 0.0], [0.3, 0.4], [0.3, 0.4], 0.4) - 0.4) < 1e-12, "hinge with pos == neg is the margin")
    check(abs(tx.contrastive_loss_nomargin([1.0, 0.0], [0.0, 1.0], [[0.0, -1.0]]) - math.log(2)) < 1e-9, "symmetric contrastive is ln 2")

    try:
        tx.cosine([1.0], [1.0, 2.0])
    except tx.TaxembedError as e:
        check("dimension" in str(e), "dimension mismatch raises TaxembedError")
    else:
        raise SystemExit("FAIL: expected TaxembedError")

    with tempfile.TemporaryDirectory() as tmp:
        summary = tx.generate_dataset(tmp, config=str(DESK))
        check(summary["jobs"] == 200 and summary["carotenes"] == 20, "synthetic corpus has 200 jobs over 20 Carotenes")
        triplets, warnings = tx.mine_triplets(tmp, "soc-car", n_neg=3)
        check(len(triplets) == 20 * 3 and warnings == 0, "soc-car mining yields n_neg triplets per link")

        ex = tx.Experiment(config=str(DESK), data_dir=tmp)
        check(ex.split_sizes() == (120, 40, 40), "6:2:2 split")
        history = ex.train()
        check(1 <= len(history) <= 50, f"trained {len(history)} epochs")
        metrics = ex.evaluate("val")
        check(metrics["carotene_accuracy"] >= 0.9, f"validation Carotene accuracy {metrics['carotene_accuracy']:.3f}")
        rows = ex.ablate([3, 4], "val")
        check([r["label"] for r in rows] == ["full", "-lambda3", "-lambda4"], "ablation table rows")
        points = ex.projection()
        check(len(points) == 25 and {p[1] for p in points} == {"SOC", "CAR"}, "projection covers every node")
        ckpt = pathlib.Path(tmp) / "model.bin"
        ex.save_checkpoint(str(ckpt))
        ex.load_checkpoint(str(ckpt))
        check(ex.evaluate("val") == metrics, "checkpoint round trip keeps metrics")

    print("all smoke checks passed")


if __name__ == "__main__":
    main()
