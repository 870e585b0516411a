import json
import os

import pytest

import serialrep as sr

REPO_DATA = os.environ.get("SRP_REPO_DATA", os.path.join(os.path.dirname(__file__), "..", "..", "data"))


def test_grid_round_trip():
    g = sr.random_grid(11)
    assert g.size == 7
    assert sr.parse_grid(sr.serialize_grid(g)) == g
    assert sr.Grid(g.rows()) == g
    assert sr.hamming(g, g.complement()) == 49
    assert g.rotated90().rotated90().rotated90().rotated90() == g


def test_parse_errors_map_to_python():
    with pytest.raises(sr.Error, match="ragged-rows"):
        sr.parse_grid("010\n01\n010")
    with pytest.raises(ValueError):
        sr.Grid([[0, 2], [1, 1]])


def test_png_header():
    png = sr.render_png(sr.checkerboard(7), 20)
    assert png[:8] == b"\x89PNG\r\n\x1a\n"


def test_complexity_zeros_and_symmetry():
    for g in (sr.Grid([[0] * 7] * 7), sr.checkerboard(7)):
        assert sr.local_spatial_complexity(g) == 0.0
    assert sr.shannon_entropy(sr.Grid([[1] * 4] * 4)) == 0.0
    g = sr.random_grid(5)
    assert sr.local_spatial_complexity(g.mirrored()) == pytest.approx(sr.local_spatial_complexity(g), abs=1e-12)


def test_bdm_with_published_table():
    table = sr.load_ctm_table(os.path.join(REPO_DATA, "ctm_published_b2_d4x4.txt"), squares_only=True)
    assert table.provenance_tag.startswith("published")
    assert sr.bdm(sr.random_grid(3), table, "recursive") > 0.0
    with pytest.raises(sr.Error):
        sr.bdm(sr.random_grid(3), table, "maximal")


def test_aligned_model_has_matching_stationaries():
    m = sr.random_model(seed=4, grid_size=2, abstractions=3, vocabulary=2, flip_rate=0.1, aligned=True)
    uni = sr.stationary_distribution(m, "unimodal")
    multi = sr.stationary_distribution(m, "multimodal")
    assert len(uni["mass"]) == 16
    assert sum(uni["mass"]) == pytest.approx(1.0)
    assert sr.tv_distance(uni, multi) < 1e-9
    assert sr.tv_distance(sr.prior_predictive(m), uni) < 1e-9


def test_model_json_round_trip():
    m = sr.coarse_language_model()
    again = sr.AbstractionModel.from_json(m.to_json())
    assert again.to_json() == m.to_json()


def test_simulated_batch_and_stats():
    m = sr.coarse_language_model()
    uni = sr.simulate_batch(m, 20, "unimodal", seed=3, steps=5, workers=2)
    multi = sr.simulate_batch(m, 20, "multimodal", seed=3, steps=5)
    assert json.loads(uni[0])["seed_grid"] == json.loads(multi[0])["seed_grid"]
    assert uni == sr.simulate_batch(m, 20, "unimodal", seed=3, steps=5, workers=4)
    a = sr.mean_board_complexity(uni, "lsc")
    b = sr.mean_board_complexity(multi, "lsc")
    t = sr.pooled_t_test(a, b)
    assert t["df"] == 38
    assert 0.0 <= t["p"] <= 1.0


def test_t_test_fixture():
    t = sr.pooled_t_test([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
    assert t["t"] == pytest.approx(-1.0)
    assert t["df"] == 8


def test_anova_identity():
    values = [3, 5, 4, 6, 7, 9, 2, 4, 8, 10, 6, 5]
    a = ["h", "h", "h", "m", "m", "m"] * 2
    b = ["u"] * 6 + ["v"] * 6
    r = sr.two_way_anova(values, a, b)
    total = r["A"]["ss"] + r["B"]["ss"] + r["A x B"]["ss"] + r["ss_error"]
    assert total == pytest.approx(r["ss_total"], abs=1e-9)
    assert r["df_error"] == 8
