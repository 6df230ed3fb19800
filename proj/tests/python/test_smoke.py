import numpy as np
import pytest

import dynembed as de


@pytest.fixture(scope="module")
def fig1():
    spec = de.DsbmSpec.four_community_merge()
    series, latent, gram = de.simulate(spec, 400, 11)
    return spec, series, latent, gram


def test_simulation_shapes(fig1):
    spec, series, latent, gram = fig1
    assert series.num_nodes == 400
    assert series.num_times == 2
    assert latent.community.shape == (400, 2)
    a = series.adjacency(0)
    assert np.allclose(a, a.T)
    assert np.all(np.diag(a) == 0)
    assert len(gram) == 2 and gram[1].shape == (400, 400)


def test_simulation_is_seeded(fig1):
    spec, series, _, _ = fig1
    again, _, _ = de.simulate(spec, 400, 11)
    other, _, _ = de.simulate(spec, 400, 12)
    assert again == series
    assert not other == series


def test_uase_rows_and_dims(fig1):
    _, series, _, _ = fig1
    emb = de.embed(series, "uase", [4], seed=5)
    assert emb.dims == [4, 4]
    assert emb.Y[0].shape == (400, 4)
    assert emb.X.shape == (400, 4)


def test_independent_accepts_per_time_dims(fig1):
    _, series, _, _ = fig1
    emb = de.embed(series, "independent", [4, 3])
    assert emb.dims == [4, 3]


def test_theory_dimensions():
    params = de.construct_mrdpg(de.DsbmSpec.four_community_merge())
    assert params["d"] == 4
    assert params["dt"] == [4, 3]
    assert params["reconstruction_error"] < 1e-9


def test_noise_free_embedding_factorises_gram():
    spec = de.DsbmSpec.four_community_merge()
    _, _, gram = de.simulate(spec, 12, 2)
    y = de.noise_free_embedding(gram, 4)
    sigma = sum(yt.T @ yt for yt in y)
    assert np.allclose(sigma, np.diag(np.diag(sigma)), atol=1e-10)
    # P1^T P2 = Y1 Sigma Y2^T because X^T X = Sigma.
    assert np.allclose(gram[0].T @ gram[1], y[0] @ sigma @ y[1].T, atol=1e-10)


def test_stability_report_runs(fig1):
    spec, series, latent, _ = fig1
    emb = de.embed(series, "uase", [4], seed=1)
    rows = de.stability_report(emb, spec, latent, 0.1, [((3, 0), (3, 1)), ((0, 1), (1, 1))])
    assert len(rows) == 2
    for row in rows:
        assert row["kind"] == "exchangeable"
        assert row["gap_ratio"] >= 0.0


def test_gmm_separates_two_blobs():
    rng = np.random.default_rng(0)
    pts = np.vstack([rng.normal(0, 0.1, (100, 2)), rng.normal(3, 0.1, (100, 2))])
    fit = de.fit_gmm(pts, [1, 2, 3], restarts=3, seed=1)
    assert fit["G"] == 2
    labels = np.array(fit["labels"])
    assert len(set(labels[:100])) == 1 and len(set(labels[100:])) == 1
    assert labels[0] != labels[150]


def test_profile_likelihood_finds_elbow():
    d_hat, _ = de.profile_likelihood(np.array([10.0, 9.5, 9.0, 1.0, 0.9, 0.8, 0.7]))
    assert d_hat == 3


def test_errors_are_typed(fig1):
    _, series, _, _ = fig1
    with pytest.raises(de.InvalidArgument):
        de.embed(series, "bogus", [2])
    with pytest.raises(de.InvalidArgument):
        de.embed(series, "uase", [0])
    with pytest.raises(de.DataError):
        de.read_series("/nonexistent/dir")


def test_cli_in_process(tmp_path):
    code, out, _ = de.run_cli(["--version"])
    assert code == 0 and out.strip() == de.__version__
    code, _, err = de.run_cli(["embed"])
    assert code == 1
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text("K = 1\nT = 2\nB1 = 0.2\nB2 = 0.2\nn = 50\n")
    code, _, err = de.run_cli(["simulate", "--config", str(cfg), "--out", str(tmp_path / "sim")])
    assert code == 0, err
    assert (tmp_path / "sim" / "manifest.json").exists()
    g = de.read_series(str(tmp_path / "sim"))
    assert g.num_nodes == 50
