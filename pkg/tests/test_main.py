# -*- coding: utf-8 -*-
"""
twogridcdm メインモジュールのテスト
"""

import json

import pytest
from click.testing import CliRunner

from src.integrator.timegrid import TimeMesh
from src.main import EXIT_DIVERGED, EXIT_ERROR, EXIT_OK, cli, main


@pytest.fixture(autouse=True)
def isolated_env(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("LOG_LEVEL", raising=False)
    monkeypatch.delenv("CDM_LINEAR_METHOD", raising=False)


def _write(path, data):
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


class TestSelftest:
    """selftest コマンドのテスト"""

    def test_selftest_passes(self):
        """自己検査が成功すると終了コード0を返すこと"""
        assert main(["selftest"]) == EXIT_OK

    def test_selftest_with_seed(self):
        """シードを変えても自己検査が成功すること"""
        assert main(["--seed", "9", "selftest"]) == EXIT_OK


class TestMeshGen:
    """mesh-gen コマンドのテスト"""

    def test_random_mesh(self, tmp_path):
        """ランダム格子の CSV が書き出されること"""
        output = tmp_path / "mesh.csv"

        code = main(["--seed", "3", "mesh-gen", "--kind", "random", "-T", "2.0", "-N", "30", "-o", str(output)])

        assert code == EXIT_OK
        mesh = TimeMesh.from_csv(output)
        assert mesh.n_steps == 30
        assert mesh.final_time == pytest.approx(2.0)

    def test_default_output(self, tmp_path):
        """出力先を省略すると --out 配下に書き出されること"""
        code = main(["--out", str(tmp_path / "out"), "mesh-gen", "--kind", "uniform", "-T", "1", "-N", "4"])

        assert code == EXIT_OK
        assert (tmp_path / "out" / "mesh_uniform_N4.csv").exists()

    def test_invalid_steps(self):
        """不正な引数は終了コード1を返すこと"""
        assert main(["mesh-gen", "-T", "1", "-N", "0"]) == EXIT_ERROR


class TestExperimentCommands:
    """実験コマンドのテスト"""

    def test_converge_space(self, tmp_path):
        """収束表が計算され CSV が書き出されること"""
        config = _write(tmp_path / "space.json", {
            "name": "cli_space",
            "problem": "sec62",
            "schemes": ["nonlinear", "two_grid"],
            "ratio": 2,
            "rows": [{"n_fine": 8, "n_time": 4}, {"n_fine": 12, "n_time": 4}],
        })

        code = main(["--out", str(tmp_path / "out"), "converge-space", "--config", str(config)])

        assert code == EXIT_OK
        assert (tmp_path / "out" / "cli_space.csv").exists()

    def test_expected_divergence(self, tmp_path):
        """想定された発散は終了コード2を返すこと"""
        config = _write(tmp_path / "blowup.json", {
            "name": "cli_blowup",
            "problem": "case3",
            "schemes": ["imex"],
            "study": "time",
            "expect_divergence": True,
            "rows": [{"n_fine": 8, "n_time": 4}],
        })

        code = main(["--out", str(tmp_path / "out"), "compare", "--config", str(config)])

        assert code == EXIT_DIVERGED

    def test_unexpected_divergence(self, tmp_path):
        """想定外の発散は終了コード1を返すこと"""
        config = _write(tmp_path / "blowup.json", {
            "name": "cli_blowup",
            "problem": "case3",
            "schemes": ["imex"],
            "study": "time",
            "rows": [{"n_fine": 8, "n_time": 4}],
        })

        code = main(["--out", str(tmp_path / "out"), "converge-time", "--config", str(config)])

        assert code == EXIT_ERROR

    def test_invalid_config(self, tmp_path):
        """検証に失敗する設定は終了コード1を返すこと"""
        config = _write(tmp_path / "bad.json", {"name": "bad", "problem": "heat", "rows": []})

        assert main(["converge-space", "--config", str(config)]) == EXIT_ERROR

    def test_missing_config(self, tmp_path):
        """存在しない設定ファイルは終了コード1を返すこと"""
        assert main(["converge-space", "--config", str(tmp_path / "none.json")]) == EXIT_ERROR

    def test_invalid_environment(self, monkeypatch):
        """不正な環境設定は終了コード1を返すこと"""
        monkeypatch.setenv("CDM_LINEAR_METHOD", "gmres")

        assert main(["selftest"]) == EXIT_ERROR


class TestHelp:
    """ヘルプ表示のテスト"""

    def test_help_lists_commands(self):
        """全サブコマンドがヘルプに表示されること"""
        result = CliRunner().invoke(cli, ["--help"])

        assert result.exit_code == 0
        for command in ("converge-space", "converge-time", "compare", "allen-cahn", "mesh-gen", "selftest"):
            assert command in result.output
