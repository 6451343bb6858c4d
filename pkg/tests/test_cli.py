import json

import httpx
import pytest

from graphsim.cli import main
from graphsim.config import ConfigError, load_config, parse_config
from helpers import FAST, FIXTURES, clone_corpus, tree_bytes, write_config

KEY_ENV = "GRAPHSIM_TEST_KEY"


def counting_transport(sent):
    body = json.loads((FIXTURES / "chat_json.json").read_text())

    def handler(request):
        sent.append(request)
        return httpx.Response(200, json=body)

    return httpx.MockTransport(handler)


def live_body(rpm=60_000):
    return FAST + f'\n[rater]\napi_key_env = "{KEY_ENV}"\nrpm = {rpm}\n'


# -- config --------------------------------------------------------------------


def test_config_defaults_and_relative_output(tmp_path):
    cfg = load_config(write_config(tmp_path / "sub"))
    assert cfg.out == (tmp_path / "sub" / "out").resolve()
    assert cfg.corpus.instances_per_cell == 1 and cfg.corpus.base_seed == 20241008
    assert cfg.pairing == "within_stratum" and cfg.rater.kind == "mock"


def test_config_json_equivalent(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"version": 1, "output_dir": "out", "corpus": {"instances_per_cell": 1}}))
    assert load_config(path) == load_config(write_config(tmp_path))


@pytest.mark.parametrize(
    "data",
    [
        {},  # version missing
        {"version": 2},
        {"version": 1, "colour": "red"},
        {"version": 1, "corpus": {"instance_per_cell": 3}},
        {"version": 1, "rater": {"rpm": 0}},
        {"version": 1, "corpus": {"generators": ["GNM", "GNM"]}},
        {"version": 1, "base_dir": "/tmp"},
    ],
)
def test_config_rejections(data):
    with pytest.raises(ConfigError):
        parse_config(data)


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("version = = 1")
    with pytest.raises(ConfigError):
        load_config(bad)


# -- exit codes ----------------------------------------------------------------


def test_config_error_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path, "\nsurprise = true\n")
    assert main(["generate", "--config", str(cfg)]) == 2
    assert "surprise" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_bad_jobs_exits_2(fast_config):
    assert main(["generate", "--config", str(fast_config), "--jobs", "0", "-q"]) == 2


def test_missing_stage_input_exits_1(fast_config, capsys):
    for stage in ("render", "measure", "rate", "correlate", "report"):
        assert main([stage, "--config", str(fast_config), "-q"]) == 1
    assert "generate" in capsys.readouterr().err


def test_usage_error_exits_2():
    assert main(["frobnicate"]) == 2
    assert main(["generate"]) == 2


# -- stages --------------------------------------------------------------------


def test_generate_writes_corpus(fast_config, capsys):
    assert main(["generate", "--config", str(fast_config), "-q"]) == 0
    corpus = fast_config.parent / "out" / "corpus"
    assert len(list((corpus / "graphs").glob("*.json"))) == 48
    assert (corpus / "manifest.json").exists() and (corpus / "density_report.csv").exists()
    assert not (corpus / "images").exists()
    log = (fast_config.parent / "out" / "run.log").read_text()
    assert "stage=generate" in log


def test_dry_run_writes_nothing(tmp_path, capsys):
    cfg = write_config(tmp_path, FAST)
    before = tree_bytes(tmp_path)
    for stage in ("generate", "run-all", "rate"):
        assert main([stage, "--config", str(cfg), "--dry-run"]) == 0
    assert tree_bytes(tmp_path) == before
    out = capsys.readouterr().out
    assert "graphs: 48" in out and "enumerated=72" in out


def test_dry_run_live_shows_cost(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(KEY_ENV, "sk-test")
    cfg = write_config(tmp_path, live_body())
    assert main(["rate", "--config", str(cfg), "--rater", "live", "--dry-run", "--max-pairs", "10"]) == 0
    out = capsys.readouterr().out
    assert "pairs to rate this run: 10" in out and "estimated live cost: $0.10" in out
    assert not (tmp_path / "out").exists()


def test_staged_run_matches_run_all(built_fast, tmp_path, capsys):
    cfg = clone_corpus(built_fast, tmp_path)
    for stage in ("render", "measure"):
        assert main([stage, "--config", str(cfg), "-q"]) == 0
    assert main(["rate", "--config", str(cfg), "--rater", "mock", "-q"]) == 0
    assert "rated=72" in capsys.readouterr().out
    assert main(["correlate", "--config", str(cfg), "-q"]) == 0
    lines = (tmp_path / "out" / "correlations.csv").read_text().splitlines()
    assert len(lines) == 73
    assert main(["report", "--config", str(cfg), "-q"]) == 0
    ref = built_fast.parent / "out"
    for name in ("records.csv", "correlations.csv", "heatmap.svg", "findings.md"):
        assert (tmp_path / "out" / name).read_bytes() == (ref / name).read_bytes(), name


def test_live_without_credential_exits_2_without_traffic(built_fast, tmp_path, monkeypatch, capsys):
    monkeypatch.delenv(KEY_ENV, raising=False)
    cfg = clone_corpus(built_fast, tmp_path)
    cfg.write_text(cfg.read_text() + f'\n[rater]\napi_key_env = "{KEY_ENV}"\n')
    sent = []
    argv = ["rate", "--config", str(cfg), "--rater", "live", "--confirm-cost", "-q"]
    assert main(argv, transport=counting_transport(sent)) == 2
    assert sent == [] and KEY_ENV in capsys.readouterr().err
    assert main(argv + ["--dry-run"], transport=counting_transport(sent)) == 2


def test_live_without_confirmation_exits_2(built_fast, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(KEY_ENV, "sk-test")
    cfg = clone_corpus(built_fast, tmp_path)
    cfg.write_text(cfg.read_text() + f'\n[rater]\napi_key_env = "{KEY_ENV}"\nrpm = 60000\n')
    sent = []
    assert main(["rate", "--config", str(cfg), "--rater", "live", "-q"], transport=counting_transport(sent)) == 2
    assert sent == [] and "--confirm-cost" in capsys.readouterr().err
    argv = ["rate", "--config", str(cfg), "--rater", "live", "--confirm-cost", "--max-pairs", "4", "-q"]
    assert main(argv, transport=counting_transport(sent)) == 0
    assert len(sent) == 4 and "rated=4" in capsys.readouterr().out
