import json

import numpy as np
import pytest

from divfig.render import SchemaError, main, render


@pytest.fixture()
def artifacts(tmp_path):
    rng = np.random.default_rng(0)
    decay = tmp_path / "decay_vanilla-MSA.csv"
    decay.write_text("layer,measured,bound\n0,10.0,10.0\n1,4.0,9.0\n")
    eff_a = tmp_path / "effdim_a.csv"
    eff_a.write_text("layer,d_eps\n0,12\n1,9\n")
    eff_b = tmp_path / "effdim_b.csv"
    eff_b.write_text("layer,d_eps\n0,11\n1,7\n")
    pca = tmp_path / "pca_layer0.json"
    pca.write_text(json.dumps({
        "layer": 0, "k": 3,
        "coordinates": rng.standard_normal((30, 3)).tolist(),
        "explained": 0.9,
        "tokens": rng.integers(0, 6, size=30).tolist(),
        "top_tokens": [0, 1, 2, 3, 4],
        "metadata": {"scope": "per-batch"},
    }))
    sal = tmp_path / "saliency.json"
    sal.write_text(json.dumps({
        "tokens": list(range(10)),
        "matrix": rng.uniform(0, 1, size=(10, 8)).tolist(),
        "target_position": 5,
        "all_zero": False,
        "normalization": "per-sample",
    }))
    return tmp_path, decay, [eff_a, eff_b], pca, sal


def test_decay_two_rows(artifacts, tmp_path):
    _, decay, _, _, _ = artifacts
    out = render("decay", [decay], tmp_path / "decay.png")
    assert out.exists() and out.stat().st_size > 0
    meta = json.loads((tmp_path / "decay.png.meta.json").read_text())
    assert meta["kind"] == "decay"
    assert meta["series"][0]["points"] == 2


def test_effdim_two_variants_single_chart(artifacts, tmp_path):
    _, _, effs, _, _ = artifacts
    render("effdim", effs, tmp_path / "effdim.png")
    meta = json.loads((tmp_path / "effdim.png.meta.json").read_text())
    assert len(meta["series"]) == 2


def test_pca_title_contains_explained(artifacts, tmp_path):
    _, _, _, pca, _ = artifacts
    render("pca3d", [pca], tmp_path / "pca.png")
    meta = json.loads((tmp_path / "pca.png.meta.json").read_text())
    assert "0.90" in meta["title"]
    assert meta["top_tokens"] == [0, 1, 2, 3, 4]


def test_saliency_heatmap(artifacts, tmp_path):
    _, _, _, _, sal = artifacts
    render("saliency", [sal], tmp_path / "sal.png")
    meta = json.loads((tmp_path / "sal.png.meta.json").read_text())
    assert meta["shape"] == [10, 8]


def test_deterministic_output(artifacts, tmp_path):
    _, decay, _, _, _ = artifacts
    a = render("decay", [decay], tmp_path / "a.png")
    b = render("decay", [decay], tmp_path / "b.png")
    assert a.read_bytes() == b.read_bytes()


def test_inputs_never_mutated(artifacts, tmp_path):
    _, _, _, pca, _ = artifacts
    before = pca.read_bytes()
    render("pca3d", [pca], tmp_path / "p.png")
    assert pca.read_bytes() == before


def test_schema_mismatch_fails_without_partial_file(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("foo,bar\n1,2\n")
    with pytest.raises(SchemaError):
        render("decay", [bad], tmp_path / "out.png")
    assert not (tmp_path / "out.png").exists()
    with pytest.raises(SchemaError):
        render("nope", [bad], tmp_path / "out.png")


def test_cli_exit_codes(artifacts, tmp_path):
    _, decay, _, _, _ = artifacts
    rc = main(["--kind", "decay", "--in", str(decay), "--out", str(tmp_path / "x.png")])
    assert rc == 0
    rc = main(["--kind", "decay", "--in", str(tmp_path / "missing.csv"),
               "--out", str(tmp_path / "y.png")])
    assert rc == 1
    assert not (tmp_path / "y.png").exists()
