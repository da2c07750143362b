import json

import numpy as np
import pytest
from scipy.special import ndtr

from overlap_ad import bench
from overlap_ad.autonn import forward, init_network
from overlap_ad.bench import (
    ExperimentConfig,
    NetworkConfig,
    ResultRecord,
    TrainedModel,
    evaluate,
    load_dataset,
    prepare_split,
    read_records,
    report,
    run_suite,
    train,
)
from overlap_ad.data import LabeledDataset, write_csv
from overlap_ad.overlap import OverlapLossConfig, ScoreBatch, overlap_loss

FAST = dict(hidden_dim=8, epochs=3, batch_size=64)


@pytest.fixture(scope="module")
def clustered():
    return load_dataset({"synth": {"type": "clustered"}})


def test_config_round_trip_and_validation():
    cfg = ExperimentConfig(loss="hinge", network={"epochs": 7}, overlap={"N": 200})
    assert isinstance(cfg.network, NetworkConfig) and cfg.network.epochs == 7
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.config_hash() == cfg.config_hash()
    assert ExperimentConfig(loss="hinge", output="x.jsonl").config_hash() == ExperimentConfig(loss="hinge").config_hash()
    with pytest.raises(ValueError):
        ExperimentConfig(loss="nope")
    with pytest.raises(ValueError):
        ExperimentConfig(repeats=0)
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"loss": "overlap", "colour": 1})
    with pytest.raises(ValueError):
        ExperimentConfig(overlap={"strategy": "median"})


def test_batch_norm_auto():
    assert ExperimentConfig(loss="overlap").uses_batch_norm()
    assert not ExperimentConfig(loss="minus").uses_batch_norm()
    assert ExperimentConfig(loss="minus", network={"batch_norm": True}).uses_batch_norm()


def test_load_dataset_sources(tmp_path, clustered):
    assert len(clustered) == 1000 and clustered.n_anomalies == 50
    write_csv(clustered, tmp_path / "c.csv")
    from_csv = load_dataset({"path": str(tmp_path / "c.csv")})
    np.testing.assert_array_equal(from_csv.features, clustered.features)
    from_src = load_dataset({"synth": {"type": "local", "source": str(tmp_path / "c.csv"), "n_normals": 190}})
    assert len(from_src) == 200
    with pytest.raises(ValueError):
        load_dataset({"synth": {"type": "local", "bogus": 1}})
    with pytest.raises(ValueError):
        load_dataset({})


@pytest.mark.parametrize("loss", bench.LOSSES)
def test_train_every_loss(loss, clustered):
    cfg = ExperimentConfig(loss=loss, network=FAST, gamma_l=0.2)
    tr, te = prepare_split(clustered, cfg, 0)
    model, hist = train(cfg, tr, 0)
    assert len(hist.epoch_loss) == 3 and np.all(np.isfinite(hist.epoch_loss))
    roc, pr = evaluate(model, te)
    assert 0 <= roc <= 1 and 0 < pr <= 1


def test_training_is_deterministic(clustered):
    cfg = ExperimentConfig(loss="overlap", network=FAST)
    tr, _ = prepare_split(clustered, cfg, 1)
    m1, h1 = train(cfg, tr, 1)
    m2, h2 = train(cfg, tr, 1)
    assert h1.epoch_loss == h2.epoch_loss
    for k, v in m1.net.params().items():
        assert np.array_equal(v, getattr(m2.net, k))


def test_overlap_training_loss_stays_bounded(clustered):
    cfg = ExperimentConfig(loss="overlap", network=FAST)
    tr, _ = prepare_split(clustered, cfg, 0)
    _, hist = train(cfg, tr, 0)
    assert all(0 <= v <= 2 for v in hist.epoch_loss)


def test_overlap_defaults_on_clustered(clustered):
    cfg = ExperimentConfig(loss="overlap", repeats=1)
    tr, te = prepare_split(clustered, cfg, 0)
    model, hist = train(cfg, tr, 0)
    assert evaluate(model, te)[0] >= 0.99
    assert hist.epoch_loss[-1] < 0.1


def test_overlap_loss_floor_under_batch_norm():
    # a balanced batch normalized to unit variance can sit no further apart
    # than -1 and +1, so with unit bandwidth the loss cannot fall below
    # the tail mass of two unit Gaussians a distance 2 apart
    floor = 2 * ndtr(-1.0)
    rng = np.random.default_rng(0)
    for spread in (0.0, 0.05, 0.2):
        s_n = -np.sqrt(1 - spread**2) + spread * rng.standard_normal(128)
        s_a = np.sqrt(1 - spread**2) + spread * rng.standard_normal(128)
        loss, _ = overlap_loss(ScoreBatch(s_n, s_a), OverlapLossConfig(strategy="ensemble"))
        assert loss >= floor - 0.005


def test_untrained_zero_network_scores_half():
    net = init_network(2, 4, seed=0, batch_norm=False)
    for p in net.params().values():
        p[...] = 0
    ds = LabeledDataset(np.random.default_rng(0).normal(size=(20, 2)), np.r_[np.zeros(15), np.ones(5)])
    assert evaluate(TrainedModel(net, "hinge"), ds)[0] == 0.5


def test_degenerate_batches_abort_and_are_recorded(tmp_path):
    # constant features give identical scores, so every batch is degenerate
    X = np.ones((200, 2))
    y = np.r_[np.zeros(180), np.ones(20)]
    p = tmp_path / "flat.csv"
    write_csv(LabeledDataset(X, y), p)
    cfg = ExperimentConfig(loss="overlap", dataset={"path": str(p)}, network=FAST, repeats=2, gamma_l=0.5)
    out = tmp_path / "r.jsonl"
    recs = run_suite(cfg, out=out)
    assert [r.status for r in recs] == ["failed", "failed"]
    assert "degenerate" in recs[0].error
    assert len(read_records(out)) == 2


def test_run_suite_seeds_and_flush(tmp_path, clustered):
    cfg = ExperimentConfig(loss="minus", network=FAST, repeats=5, seed=10)
    out = tmp_path / "r.jsonl"
    recs = run_suite(cfg, out=out, dataset=clustered)
    assert [r.seed for r in recs] == [10, 11, 12, 13, 14]
    lines = out.read_text().splitlines()
    assert len(lines) == 5 and all(r.train_seconds is None for r in recs)
    assert read_records(out)[2] == recs[2]


def test_record_timing(clustered):
    cfg = ExperimentConfig(loss="minus", network=FAST, repeats=1, record_timing=True)
    (rec,) = run_suite(cfg, dataset=clustered)
    assert rec.train_seconds > 0


def _rec(loss, dataset, seed, pr):
    return ResultRecord("h", loss, dataset, loss, seed, 0.1, auc_roc=pr, auc_pr=pr, final_loss=0.0, param_change_norm=0.0)


def test_report_means_and_stars():
    recs = []
    for d in range(10):
        for s in range(3):
            recs.append(_rec("overlap", f"d{d}", s, 0.9 - 0.01 * s))
            recs.append(_rec("hinge", f"d{d}", s, 0.5 - 0.01 * d))
    recs.append(ResultRecord("h", "hinge", "d0", "hinge", 9, 0.1, status="failed", error="x"))
    rep = report(recs)
    row = next(r for r in rep["rows"] if r["loss"] == "overlap" and r["dataset"] == "d3")
    assert row["mean"] == pytest.approx(np.mean([0.9, 0.89, 0.88])) and row["n"] == 3
    hinge_d0 = next(r for r in rep["rows"] if r["loss"] == "hinge" and r["dataset"] == "d0")
    assert hinge_d0["n"] == 3
    (t,) = rep["tests"]
    assert t["p_value"] == 1 / 1024 and t["stars"] == "***" and t["n_pairs"] == 10
    assert "***" in bench.format_report(rep)


def test_report_identical_sets_are_not_testable():
    recs = [_rec(l, f"d{d}", 0, 0.3 + d / 10) for l in ("overlap", "minus") for d in range(5)]
    (t,) = report(recs)["tests"]
    assert t["p_value"] is None and t["stars"] == "n/a"


def test_stars():
    assert bench.stars(0.005) == "***" and bench.stars(0.03) == "**"
    assert bench.stars(0.07) == "*" and bench.stars(0.2) == ""


def test_dump_embeddings(tmp_path):
    cfg = ExperimentConfig(loss="ordinal", network=FAST, gamma_l=0.2)
    n = bench.dump_embeddings(cfg, tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert n == 300 and len(lines) == 301
    assert lines[0].split(",") == [f"h{j}" for j in range(8)] + ["score", "label"]


def test_eval_scores_do_not_depend_on_batch(clustered):
    cfg = ExperimentConfig(loss="overlap", network=FAST)
    tr, te = prepare_split(clustered, cfg, 0)
    model, _ = train(cfg, tr, 0)
    full = model.score(te.features)
    np.testing.assert_allclose(model.score(te.features[:7]), full[:7])
    s, _ = forward(model.net, te.features[:7], "eval")
    np.testing.assert_allclose(s, full[:7])
