import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cpfree_ofdm.detection import DetectorDivergence, OampNetParams, save_oamp_net
from cpfree_ofdm.estimation import ce_net_init, save_ce_net
from cpfree_ofdm.harness import cli
from cpfree_ofdm.harness.config import RunConfig, from_mapping, load_config
from cpfree_ofdm.harness.datasets import gen_dataset, load_dataset
from cpfree_ofdm.harness.link import Link, Receiver, detection_pairs, draw, simulate
from cpfree_ofdm.harness.report import emit_report, parse_csv, to_csv
from cpfree_ofdm.harness.sweep import MetricsRecord, load_receiver, run_point, run_sweep
from cpfree_ofdm.numerics import make_constellation

SMALL = dict(subcarriers=16, channel="exp", exp_taps=4, modulation="qpsk", layers=3, snr_db=[10.0, 20.0],
             min_errors=50, min_bits=2000, max_bits=20_000, chunk_frames=16, cov_samples=2000)


def small(**kw):
    return RunConfig(**{**SMALL, **kw})


# -- config --


def test_config_file_and_flags(tmp_path):
    f = tmp_path / "a.cfg"
    f.write_text("chain = lmmse_oamp   # detector chain\nsnr_db = 5, 15\nmax_bits = 1e6\ncyclic_prefix = yes\n")
    cfg = load_config(f)
    assert cfg.chain == "lmmse_oamp" and cfg.snr_db == [5.0, 15.0]
    assert cfg.max_bits == 1_000_000 and cfg.cyclic_prefix is True
    args = cli._parser().parse_args(["sweep", "--config", str(f), "--snr-db", "7", "--workers", "3"])
    from cpfree_ofdm.harness.config import config_from_args

    cfg2 = config_from_args(args)
    assert cfg2.snr_db == [7.0] and cfg2.workers == 3 and cfg2.chain == "lmmse_oamp"


def test_config_rejects_unknown_and_invalid():
    with pytest.raises(KeyError):
        from_mapping({"nosuch": "1"})
    with pytest.raises(ValueError):
        RunConfig(chain="zf")
    with pytest.raises(ValueError):
        from_mapping({"cyclic_prefix": "maybe"})


def test_dump_round_trip(tmp_path):
    cfg = small(chain="ls_oamp", beta=0.3)
    (tmp_path / "c.cfg").write_text(cfg.dump())
    assert load_config(tmp_path / "c.cfg") == cfg


def test_digest_ignores_worker_count():
    assert small(workers=4, output="x.csv").digest() == small().digest()
    assert small(seed=2).digest() != small().digest()


# -- link --


def test_lowbound_without_noise_is_error_free():
    for M in ("qpsk", "qam16", "qam64"):
        link = Link(small(chain="lowbound_cp", modulation=M))
        d = draw(link, 32, np.random.default_rng(0))
        d.noise[:] = 0
        out = simulate(Receiver(link, "lowbound_cp", 20.0), d)
        assert out.errors == 0 and out.bits == 32 * 16 * link.const.bits_per_symbol


@pytest.mark.parametrize("pilots", ["continuous", "comb"])
def test_noiseless_perfect_csi_oamp_recovers_bits(pilots):
    link = Link(small(csi="perfect", pilots=pilots, subcarriers=32, blocks_per_frame=3))
    d = draw(link, 16, np.random.default_rng(1))
    d.noise[:] = 0
    d.noise_pilot[:] = 0
    out = simulate(Receiver(link, "ls_oamp", 40.0), d)
    assert out.errors == 0


def test_receiver_requires_parameters():
    link = Link(small())
    with pytest.raises(ValueError):
        Receiver(link, "ai_receiver", 10.0)


def test_detection_pairs_on_grid():
    link = Link(small(modulation="qam16"))
    ds = detection_pairs(link, 20.0, 40, np.random.default_rng(2))
    c = make_constellation(16)
    assert np.all(np.isin(np.round(ds.u, 12), np.round(c.points, 12)))
    ps = ds.systems(link)
    assert ps.unknowns == 2 * link.N


# -- datasets --


def test_gen_dataset_deterministic(tmp_path):
    cfg = small(channel="sui3", subcarriers=64)
    a = gen_dataset("channel_pairs", cfg, 100, 5, tmp_path / "a.npz")
    b = gen_dataset("channel_pairs", cfg, 100, 5, tmp_path / "b.npz")
    assert a.read_bytes() == b.read_bytes()
    d = load_dataset(a)
    assert d["h_ls"].shape == (100, 128)
    assert np.all(d["taps"][:, [1, 2, 3, 5, 6, 7, 8, 9]] == 0)
    with pytest.raises(ValueError):
        gen_dataset("channel_pairs", cfg, 0, 5, tmp_path / "c.npz")


def test_gen_detection_pairs(tmp_path):
    path = gen_dataset("detection_pairs", small(), 30, 0, tmp_path / "d.npz")
    d = load_dataset(path)
    assert np.all(np.isin(np.round(d["u"], 12), np.round(make_constellation(4).points, 12)))


# -- sweep --


def test_budget_rule():
    cfg = small(chain="ls_ofdm")
    rec = run_point(cfg, 10.0)
    assert rec.errors >= cfg.min_errors and rec.bits >= cfg.min_bits
    capped = run_point(cfg.replace(min_errors=10**9, max_bits=5000), 30.0)
    assert capped.capped and capped.bits >= 5000
    assert 0 <= rec.ber <= 1


def test_sweep_deterministic_and_worker_independent(tmp_path):
    cfg = small(chain="lmmse_oamp", min_errors=20)
    a = to_csv(run_sweep(cfg))
    b = to_csv(run_sweep(cfg))
    c = to_csv(run_sweep(cfg.replace(workers=2)))
    assert a == b == c


def test_missing_parameter_file_is_an_error(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_receiver(small(chain="ai_receiver", cenet_params=str(tmp_path / "none_{snr}.txt")), 10.0)


def test_divergence_marks_point(monkeypatch):
    import cpfree_ofdm.harness.sweep as sweep

    def boom(rx, d):
        raise DetectorDivergence(2)

    monkeypatch.setattr(sweep, "simulate", boom)
    rec = run_point(small(chain="ls_oamp"), 10.0)
    assert rec.failed and math.isnan(rec.ber)


# -- report --


def test_report_round_trip(tmp_path):
    recs = [MetricsRecord("abc", 5.0, 0.1 + 1e-17, 1 / 3, 1000, 100, 0.0, 1),
            MetricsRecord("abc", 10.0, 0.01, float("nan"), 2000, 20, 1.25, 1),
            MetricsRecord("abc", 15.0, 0.0, 2e-5, 3000, 0, 0.0, 1)]
    paths = emit_report(recs, tmp_path / "out" / "s.csv")
    text = paths[0].read_text()
    assert len(text.splitlines()) == 4
    assert text.splitlines()[0] == "snr_db,ber,mse,bits,errors,seconds,seed,config"
    back = parse_csv(text)
    for r, s in zip(recs, back):
        for f in ("snr_db", "ber", "bits", "errors", "seconds", "seed", "config"):
            assert getattr(r, f) == getattr(s, f)
        assert (math.isnan(r.mse) and math.isnan(s.mse)) or r.mse == s.mse
    assert (tmp_path / "out" / "s.mse.dat").read_text().count("\n") == 3
    with pytest.raises(ValueError):
        emit_report([], tmp_path / "e.csv")


@given(st.lists(st.tuples(st.floats(-10, 60), st.integers(1, 10**7), st.floats(0, 1), st.floats(0, 10)),
                min_size=1, max_size=5))
@settings(max_examples=30, deadline=None)
def test_csv_parse_back_property(rows):
    recs = [MetricsRecord("cfg", snr, int(bits * frac) / bits, mse, bits, int(bits * frac), 0.0, 7)
            for snr, bits, frac, mse in rows]
    assert parse_csv(to_csv(recs)) == recs


def test_record_rejects_impossible_counts():
    with pytest.raises(ValueError):
        MetricsRecord("c", 0.0, 1.0, 0.0, 10, 11, 0.0, 1)


# -- CLI --


def test_cli_end_to_end(tmp_path, capsys):
    cfgfile = tmp_path / "r.cfg"
    body = small(chain="ai_receiver", train_count=300, val_count=100, epochs=2,
                 cenet_params=str(tmp_path / "ce_{snr}.txt"), oampnet_params=str(tmp_path / "on_{snr}.txt"),
                 output=str(tmp_path / "res" / "s.csv")).dump()
    cfgfile.write_text(body)
    base = ["--config", str(cfgfile)]
    assert cli.main(["train-ce", *base, "--out", str(tmp_path / "ce_{snr}.txt")]) == 0
    assert cli.main(["train-oamp", *base, "--out", str(tmp_path / "on_{snr}.txt"), "--batch-size", "20"]) == 0
    assert cli.main(["sweep", *base]) == 0
    first = (tmp_path / "res" / "s.csv").read_bytes()
    assert cli.main(["sweep", *base]) == 0
    assert (tmp_path / "res" / "s.csv").read_bytes() == first
    assert cli.main(["report", str(tmp_path / "res" / "s.csv")]) == 0
    assert cli.main(["sweep", *base, "--oampnet-params", str(tmp_path / "gone_{snr}.txt")]) == 2
    assert cli.main(["train-ce", *base, "--out", str(tmp_path / "ce.txt")]) == 2


def test_cli_sweep_exit_code_on_failure(tmp_path, monkeypatch):
    import cpfree_ofdm.harness.sweep as sweep

    def boom(rx, d):
        raise DetectorDivergence(1)

    monkeypatch.setattr(sweep, "simulate", boom)
    args = ["sweep", "--chain", "ls_oamp", "--subcarriers", "16", "--channel", "exp", "--exp-taps", "4",
            "--snr-db", "10", "--cov-samples", "500", "--output", str(tmp_path / "f.csv")]
    assert cli.main(args) == 1


def test_saved_parameter_files_load(tmp_path):
    link = Link(small())
    save_ce_net(ce_net_init(link.lmmse(10.0)), tmp_path / "ce_10.txt")
    save_oamp_net(OampNetParams.ones(3), tmp_path / "on_10.txt")
    rx = load_receiver(small(cenet_params=str(tmp_path / "ce_{snr}.txt"),
                             oampnet_params=str(tmp_path / "on_{snr}.txt")), 10.0)
    assert rx.estimator == "cenet" and rx.detector == "oampnet"


def test_mixed_snr_training_writes_one_file(tmp_path):
    out = tmp_path / "mixed.txt"
    args = ["train-ce", "--subcarriers", "16", "--channel", "exp", "--exp-taps", "4", "--cov-samples", "500",
            "--train-snr-db", "5,20,35", "--train-count", "300", "--val-count", "60", "--epochs", "2",
            "--out", str(out)]
    assert cli.main(args) == 0
    assert out.read_text().startswith("CENET v1 N=16")


def test_lazy_preparation_trains_identically():
    from cpfree_ofdm.detection import OampNetTrainConfig, oamp_net_train, prepare_system
    from cpfree_ofdm.harness.link import LazySystems

    link = Link(small(layers=2))
    tr = detection_pairs(link, 15.0, 60, np.random.default_rng(3))
    va = detection_pairs(link, 15.0, 30, np.random.default_rng(4))
    hyper = OampNetTrainConfig(lr=0.05, batch_size=20, epochs=6, eval_every=2)
    args = (link.oamp_config(), link.const, hyper)
    eager = oamp_net_train(prepare_system(tr.systems(link)), tr.u_real(), prepare_system(va.systems(link)),
                           va.u_real(), *args)
    lazy = oamp_net_train(LazySystems(tr, link), tr.u_real(), LazySystems(va, link), va.u_real(), *args)
    assert np.allclose(eager.params.vector(), lazy.params.vector(), rtol=1e-10, atol=1e-12)
    assert math.isclose(eager.best_val_loss, lazy.best_val_loss, rel_tol=1e-10)
