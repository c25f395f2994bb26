import json

from bikevolume.cli import main
from bikevolume.reports import write_config_comparison, write_skewness_report


class TestSkewnessReport:
    def test_table_shape(self, tmp_path):
        skews = {
            "no": 5.408, "sqrt": 2.674, "log": 0.74,
            "quantile": -0.64, "yeo_johnson": 0.26, "box_cox": 0.18,
        }
        csv_path, md_path = write_skewness_report(tmp_path, skews)
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "transform,no,sqrt,log,quantile,yeo_johnson,box_cox"
        values = lines[1].split(",")
        assert values[0] == "skewness"
        assert float(values[1]) == 5.408
        md = md_path.read_text()
        assert md.startswith("| transform |")


class TestConfigComparison:
    def test_two_arm_table(self, tmp_path):
        rows = []
        for label in "ABCDEFGHIJ":
            rows.append({"label": label, "early_stopping": True, "rmse": 20.0})
            rows.append({"label": label, "early_stopping": False, "rmse": 21.0})
        path = write_config_comparison(tmp_path, rows)
        lines = path.read_text().splitlines()
        assert lines[0].split(",") == ["gcn_configuration"] + list("ABCDEFGHIJ")
        assert lines[1].startswith("rmse_without_early_stopping")
        assert lines[2].startswith("rmse_with_early_stopping")
        assert len(lines) == 3


class TestGridSearchCommand:
    def test_emits_scores_optima_and_gcn_arms(self, tmp_path):
        config = {
            "data": {"synthetic": {"n_nodes": 120, "n_days": 5}},
            "train": {"max_epochs": 6, "patience": 6},
            "grid_search": {
                "folds": 3,
                "families": ["lr"],
                "gcn_labels": ["A", "B"],
                "grids": {"lr": [{"alpha": 0.1}, {"alpha": 1.0}]},
            },
        }
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps(config), encoding="utf-8")
        out = tmp_path / "out"
        assert main(["grid-search", "--config", str(cfg), "--out", str(out)]) == 0

        best = json.loads((out / "best_params.json").read_text())
        assert best["lr"]["alpha"] in (0.1, 1.0)

        scores = (out / "cv_scores.csv").read_text().splitlines()
        assert scores[0] == "model,params_json,fold,rmse"
        assert len(scores) == 1 + 2 * 3  # grid points x folds

        gcn_rows = (out / "gcn_config_scores.csv").read_text().splitlines()
        assert gcn_rows[0] == "label,early_stopping,rmse"
        assert len(gcn_rows) == 1 + 2 * 2  # labels x arms

        wide = (out / "gcn_config_comparison.csv").read_text().splitlines()
        assert wide[0] == "gcn_configuration,A,B"
        assert len(wide) == 3

    def test_deterministic_per_seed(self, tmp_path):
        config = {
            "data": {"synthetic": {"n_nodes": 100, "n_days": 5}},
            "grid_search": {"folds": 3, "families": ["lr"], "gcn_labels": [],
                            "grids": {"lr": [{"alpha": 0.1}, {"alpha": 10.0}]}},
        }
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps(config), encoding="utf-8")
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["grid-search", "--config", str(cfg), "--seed", "3", "--out", str(out1)]) == 0
        assert main(["grid-search", "--config", str(cfg), "--seed", "3", "--out", str(out2)]) == 0
        assert (out1 / "cv_scores.csv").read_bytes() == (out2 / "cv_scores.csv").read_bytes()
