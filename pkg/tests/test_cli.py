import json
import os

import pytest

from wavemaps.cli import UsageError, main, parse_config


def read_manifest(out_dir):
    with open(os.path.join(out_dir, "manifest.json")) as fh:
        return json.load(fh)


class TestParseConfig:
    def test_values_comments_and_blanks(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("# selfsim run\nn = 2\nrho_max = 4.0  # wide\n\n")
        assert parse_config(p) == {"n": "2", "rho_max": "4.0"}

    def test_malformed_line_reports_lineno(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("n = 2\njust words\n")
        with pytest.raises(UsageError, match="2"):
            parse_config(p)

    def test_duplicate_key_rejected(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("n = 2\nn = 3\n")
        with pytest.raises(UsageError, match="duplicate"):
            parse_config(p)


class TestResolution:
    def test_flag_beats_file_beats_default(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("n = 1\nrho_max = 3.0\n")
        out = tmp_path / "out"
        rc = main(["selfsim", "--config", str(cfg), "--n", "0",
                   "--out", str(out)])
        assert rc == 0
        snap = read_manifest(out)["config_snapshot"]
        assert snap["n"] == {"value": 0, "source": "flag"}
        assert snap["rho_max"] == {"value": 3.0, "source": "file"}

    def test_unknown_config_key_is_usage_error(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("n = 0\nbogus = 1\n")
        out = tmp_path / "out"
        rc = main(["selfsim", "--config", str(cfg), "--out", str(out)])
        assert rc == 2
        assert "usage error" in read_manifest(out)["status"]

    def test_missing_required_key(self, tmp_path):
        out = tmp_path / "out"
        rc = main(["selfsim", "--out", str(out)])
        assert rc == 2

    def test_bad_value_type(self, tmp_path):
        out = tmp_path / "out"
        rc = main(["selfsim", "--n", "two", "--out", str(out)])
        assert rc == 2


class TestRuns:
    def test_selfsim_outputs_and_digests(self, tmp_path):
        out = tmp_path / "out"
        rc = main(["selfsim", "--n", "0", "--out", str(out)])
        assert rc == 0
        manifest = read_manifest(out)
        names = {os.path.basename(o["path"]) for o in manifest["outputs"]}
        assert "profile_f0.csv" in names
        assert "selfsim.json" in names
        for o in manifest["outputs"]:
            assert len(o["sha256"]) == 64

    def test_selfsim_deterministic(self, tmp_path):
        digests = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["selfsim", "--n", "0", "--out", str(out)]) == 0
            manifest = read_manifest(out)
            digests.append({os.path.basename(o["path"]): o["sha256"]
                            for o in manifest["outputs"]})
        assert digests[0] == digests[1]

    def test_static_figure_data(self, tmp_path):
        out = tmp_path / "out"
        rc = main(["figdata", "--figure", "3", "--out", str(out)])
        assert rc == 0
        assert (out / "fig3_static.csv").exists()

    def test_unknown_figure_is_usage_error(self, tmp_path):
        out = tmp_path / "out"
        assert main(["figdata", "--figure", "9", "--out", str(out)]) == 2

    def test_bad_grid_value(self, tmp_path):
        out = tmp_path / "out"
        rc = main(["evolve", "--grid", "16x512", "--out", str(out)])
        assert rc == 2

    def test_no_subcommand_is_usage_error(self):
        assert main([]) == 2

    def test_unknown_subcommand_is_usage_error(self):
        assert main(["frobnicate"]) == 2

    def test_manifest_written_on_scientific_failure(self, tmp_path):
        # rho_max below the profile's own domain: extend_exterior refuses
        out = tmp_path / "out"
        rc = main(["selfsim", "--n", "0", "--rho-max", "-1.0",
                   "--out", str(out)])
        assert rc == 1
        assert "scientific failure" in read_manifest(out)["status"]

    def test_evolve_small_run(self, tmp_path):
        out = tmp_path / "out"
        rc = main(["evolve", "--family", "gaussian", "--A", "0.001",
                   "--grid", "8,128", "--t-end", "2.0", "--out", str(out)])
        assert rc == 0
        with open(out / "report.json") as fh:
            report = json.load(fh)
        assert report["blew_up"] is False
