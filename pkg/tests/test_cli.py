import json
import os
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from pptflow.cli import CONFIG_SCHEMA, load_config, main
from pptflow.features import FEATURE_NAMES

FIXTURES = Path(__file__).parent / "fixtures"


def make_flow_csv(path, n_rows=240, seed=0):
    """Synthetic but schema-complete 12-feature flow series."""
    rng = np.random.default_rng(seed)
    t = np.arange(n_rows)
    df = pd.DataFrame({name: np.zeros(n_rows) for name in FEATURE_NAMES})
    df["second"] = t
    df["car"] = 5 + 2 * np.sin(2 * np.pi * t / 30) + rng.normal(0, 0.2, n_rows)
    df["G"] = df["car"] + 2.0
    df["k"] = df["G"] / 800.0
    df["q"] = df["car"]
    df["v_x"] = 25 + 3 * np.sin(2 * np.pi * t / 60) + rng.normal(0, 0.3, n_rows)
    df["R_s"] = df["k"] * 4.0
    df.to_csv(path, index=False)
    return df


SMALL_CONFIG = """
# minimal network for fast end-to-end runs
d_model = 8
d_ff = 16
heads = 2
top_k = 2
num_periodic_blocks = 1
num_decoder_layers = 1
kernel_sizes = 1,3
dropout = 0.0
agg_hidden = 4
epochs = 2
batch_size = 32
"""


class TestExtract:
    def run_extract(self, tmp_path, direction="positive_x",
                    tracks=None, tracks_meta=None):
        out = tmp_path / "flow.csv"
        code = main([
            "extract",
            "--meta", str(FIXTURES / "01_recordingMeta.csv"),
            "--tracks", str(tracks or FIXTURES / "01_tracks.csv"),
            "--tracks-meta", str(tracks_meta or FIXTURES / "01_tracksMeta.csv"),
            "--direction", direction,
            "--out", str(out),
        ])
        return code, out

    def test_matches_golden_exactly(self, tmp_path):
        code, out = self.run_extract(tmp_path)
        assert code == 0
        got = pd.read_csv(out).to_numpy(dtype=np.float64)
        want = pd.read_csv(
            FIXTURES / "golden_flow_positive_x.csv"
        ).to_numpy(dtype=np.float64)
        np.testing.assert_array_equal(got, want)
        sidecar = json.loads((tmp_path / "flow_stats.json").read_text())
        assert sidecar["direction"] == "positive_x"
        assert len(sidecar["mean"]) == 12

    def test_wrong_delimiter_is_schema_error(self, tmp_path):
        bad = tmp_path / "semi.csv"
        text = (FIXTURES / "01_tracks.csv").read_text().replace(",", ";")
        bad.write_text(text)
        code, out = self.run_extract(tmp_path, tracks=bad)
        assert code == 2
        assert not out.exists()

    def test_empty_direction_is_domain_error(self, tmp_path):
        meta_df = pd.read_csv(FIXTURES / "01_tracksMeta.csv")
        only_forward = tmp_path / "fwd_meta.csv"
        meta_df[meta_df["drivingDirection"] == 2].to_csv(only_forward, index=False)
        code, out = self.run_extract(tmp_path, direction="negative_x",
                                     tracks_meta=only_forward)
        assert code == 3
        assert not out.exists()

    def test_missing_file(self, tmp_path):
        code, out = self.run_extract(tmp_path,
                                     tracks=tmp_path / "nope.csv")
        assert code == 66
        assert not out.exists()


class TestDetectPeriods:
    def test_reports_dominant_period(self, tmp_path, capsys):
        t = np.arange(96)
        pd.DataFrame({
            "x": np.sin(2 * np.pi * t / 24),
        }).to_csv(tmp_path / "series.csv", index=False)
        out = tmp_path / "periods.json"
        code = main([
            "detect-periods", "--input", str(tmp_path / "series.csv"),
            "--k", "1", "--columns", "x", "--out", str(out),
        ])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["entries"][0]["p"] == 24
        assert report["entries"][0]["f"] == 4
        echoed = json.loads(capsys.readouterr().out)
        assert echoed == report

    def test_unknown_column(self, tmp_path):
        pd.DataFrame({"x": np.arange(32.0)}).to_csv(
            tmp_path / "series.csv", index=False
        )
        code = main([
            "detect-periods", "--input", str(tmp_path / "series.csv"),
            "--columns", "y",
        ])
        assert code == 2


class TestTrainPredictEvaluate:
    def test_end_to_end(self, tmp_path, capsys):
        data = tmp_path / "flow.csv"
        make_flow_csv(data)
        config = tmp_path / "net.cfg"
        config.write_text(SMALL_CONFIG)
        outdir = tmp_path / "run"
        code = main([
            "train", "--data", str(data), "--horizon", "15",
            "--config", str(config), "--seed", "0", "--out", str(outdir),
        ])
        assert code == 0
        ckpt = outdir / "model.ckpt"
        assert ckpt.exists()
        log_lines = (outdir / "training_log.jsonl").read_text().splitlines()
        assert len(log_lines) == 2
        for line in log_lines:
            record = json.loads(line)
            assert {"epoch", "lr", "train_loss", "val_mae"} <= set(record)

        forecast = tmp_path / "forecast.csv"
        code = main([
            "predict", "--checkpoint", str(ckpt),
            "--data", str(data), "--out", str(forecast),
        ])
        assert code == 0
        fdf = pd.read_csv(forecast)
        assert list(fdf.columns) == FEATURE_NAMES
        assert len(fdf) == 15
        targets = json.loads((tmp_path / "forecast_targets.json").read_text())
        assert targets["evaluation_targets"] == ["k", "v_x"]

        report_path = tmp_path / "report.json"
        code = main([
            "evaluate", "--pred", str(forecast), "--truth", str(forecast),
            "--out", str(report_path),
        ])
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["physical"]["mae"] == 0.0
        assert report["physical"]["rmse"] == 0.0

    def test_unknown_config_key_is_schema_error(self, tmp_path):
        data = tmp_path / "flow.csv"
        make_flow_csv(data)
        config = tmp_path / "net.cfg"
        config.write_text("d_modell = 8\n")
        outdir = tmp_path / "run"
        code = main([
            "train", "--data", str(data), "--horizon", "15",
            "--config", str(config), "--out", str(outdir),
        ])
        assert code == 2
        assert not outdir.exists()

    def test_corrupted_checkpoint_is_artifact_error(self, tmp_path):
        data = tmp_path / "flow.csv"
        make_flow_csv(data)
        bogus = tmp_path / "model.ckpt"
        bogus.write_bytes(b"GARBAGE" + b"\x00" * 64)
        forecast = tmp_path / "forecast.csv"
        code = main([
            "predict", "--checkpoint", str(bogus),
            "--data", str(data), "--out", str(forecast),
        ])
        assert code == 5
        assert not forecast.exists()

    def test_missing_data_file(self, tmp_path):
        forecast = tmp_path / "forecast.csv"
        code = main([
            "predict", "--checkpoint", str(tmp_path / "none.ckpt"),
            "--data", str(tmp_path / "none.csv"), "--out", str(forecast),
        ])
        assert code == 66
        assert not forecast.exists()


class TestCongestion:
    def test_scores_jammed_tail(self, tmp_path, capsys):
        n = 40
        pd.DataFrame({
            "k": np.linspace(0.0, 0.12, n),
            "v": np.linspace(12.0, 0.0, n),
        }).to_csv(tmp_path / "kv.csv", index=False)
        out = tmp_path / "congestion.csv"
        code = main([
            "congestion", "--input", str(tmp_path / "kv.csv"),
            "--out", str(out),
        ])
        assert code == 0
        df = pd.read_csv(out)
        assert list(df.columns) == ["t", "P", "label"]
        assert ((df["P"] >= 0) & (df["P"] <= 1)).all()
        assert df["P"].iloc[-1] > 0.75
        assert df["label"].iloc[-1] == "full"
        assert df["P"].iloc[-1] > df["P"].iloc[0]
        described = json.loads(capsys.readouterr().out)
        assert described["output_peaks"] == [0.0, 1 / 3, 2 / 3, 1.0]

    def test_negative_speeds_use_magnitude(self, tmp_path):
        pd.DataFrame({
            "k": [0.0, 0.06, 0.12],
            "v": [-12.0, -6.0, 0.0],
        }).to_csv(tmp_path / "kv.csv", index=False)
        out = tmp_path / "congestion.csv"
        assert main(["congestion", "--input", str(tmp_path / "kv.csv"),
                     "--out", str(out)]) == 0
        df = pd.read_csv(out)
        assert df["P"].iloc[-1] > df["P"].iloc[0]

    def test_missing_speed_column(self, tmp_path):
        pd.DataFrame({"k": [0.1, 0.2]}).to_csv(tmp_path / "kv.csv", index=False)
        code = main(["congestion", "--input", str(tmp_path / "kv.csv"),
                     "--out", str(tmp_path / "out.csv")])
        assert code == 2


class TestPlot:
    def test_writes_svg(self, tmp_path):
        pd.DataFrame({"v_x": np.sin(np.arange(50.0))}).to_csv(
            tmp_path / "series.csv", index=False
        )
        out = tmp_path / "chart.svg"
        code = main(["plot", "--input", str(tmp_path / "series.csv"),
                     "--columns", "v_x", "--out", str(out)])
        assert code == 0
        assert out.read_text().startswith("<svg")

    def test_empty_series_is_domain_error(self, tmp_path):
        (tmp_path / "empty.csv").write_text("v_x\n")
        out = tmp_path / "chart.svg"
        code = main(["plot", "--input", str(tmp_path / "empty.csv"),
                     "--out", str(out)])
        assert code == 3
        assert not out.exists()


class TestConfigLoading:
    def test_defaults(self):
        values = load_config(None)
        assert values["d_model"] == CONFIG_SCHEMA["d_model"][1]
        assert values["kernel_sizes"] == (1, 3, 5)

    def test_env_seed_override(self, tmp_path, monkeypatch):
        config = tmp_path / "c.cfg"
        config.write_text("seed = 3\n")
        monkeypatch.setenv("PPTFLOW_SEED", "99")
        assert load_config(config)["seed"] == 99

    def test_comments_and_blanks_ignored(self, tmp_path):
        config = tmp_path / "c.cfg"
        config.write_text("# comment\n\nheads = 2\n")
        assert load_config(config)["heads"] == 2

    def test_bad_value_type(self, tmp_path):
        from pptflow.errors import DataSchemaError
        config = tmp_path / "c.cfg"
        config.write_text("heads = many\n")
        with pytest.raises(DataSchemaError):
            load_config(config)
