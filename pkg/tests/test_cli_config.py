import json

import pytest
from hypothesis import given, strategies as st

from snippetfuzz.cli import main
from snippetfuzz.config import NOSNIPPET, CampaignConfig, ConfigError
from snippetfuzz.framing import Framing
from snippetfuzz.mock import builtin_corpus, load_profile, serve
from snippetfuzz.message import save_seed_corpus
from snippetfuzz.mutation import MutationConfig
from snippetfuzz.transport import TargetConfig


@given(st.integers(-2 ** 63, 2 ** 63), st.sampled_from(["snippet", "nosnippet"]),
       st.one_of(st.none(), st.floats(0, 1e6)), st.one_of(st.none(), st.integers(0, 10 ** 9)),
       st.lists(st.binary(max_size=8), max_size=4), st.integers(1, 10 ** 6))
def test_config_round_trip(seed, mode, tb, eb, dictionary, havoc):
    cfg = CampaignConfig(seed, TargetConfig("10.0.0.2", 80, "udp", Framing.parse("len:2:little")),
                         "c.json", mode, tb, eb, MutationConfig(dictionary=dictionary, havoc_budget=havoc),
                         "out", "10.0.0.2:80")
    assert CampaignConfig.from_dict(json.loads(cfg.dumps())) == cfg


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="mandatory"):
        CampaignConfig.from_dict({"mode": "snippet"})
    with pytest.raises(ConfigError):
        CampaignConfig(rng_seed=1, mode="both")
    with pytest.raises(ConfigError):
        CampaignConfig(rng_seed=True)
    with pytest.raises(ConfigError):
        CampaignConfig(rng_seed=1, exec_budget=-1)
    with pytest.raises(ConfigError):
        CampaignConfig.from_dict({"rng_seed": 1, "colour": "red"})
    path = tmp_path / "c.json"
    path.write_text(CampaignConfig(3, mode=NOSNIPPET).dumps())
    assert CampaignConfig.load(path).mode == NOSNIPPET


def test_fuzz_replay_eval(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["fuzz", "--target", "inproc:jsonlike_fault", "--rng-seed", "2", "--exec-budget", "2500",
                 "--out", str(out)])
    assert code == 1
    assert "crashes: 1" in capsys.readouterr().out
    for name in ("report.json", "summary.txt", "timeline.csv", "findings.jsonl", "config.json"):
        assert (out / name).exists()
    assert main(["replay", str(out / "findings.jsonl"), "--check", str(out / "report.json")]) == 1
    assert "matches" in capsys.readouterr().out
    assert main(["eval-seg", str(out / "report.json"), "inproc:jsonlike"]) == 0
    assert "median" in capsys.readouterr().out


def test_clean_run_exits_zero(tmp_path):
    assert main(["fuzz", "--target", "inproc:jsonlike", "--rng-seed", "1", "--exec-budget", "200",
                 "--out", str(tmp_path)]) == 0


def test_infer_prints_partitions(tmp_path, capsys):
    ann = tmp_path / "ann.jsonl"
    assert main(["infer", "--target", "inproc:jsonlike", "--seed", "on", "--label", "--annotations", str(ann)]) == 0
    text = capsys.readouterr().out
    assert text.startswith("on#0 (11 bytes)") and "round 0:" in text
    truth = tmp_path / "truth.jsonl"
    truth.write_text(json.dumps({"seed": "on", "message_index": 0, "labels": "00110111100"}) + "\n")
    assert main(["eval-seg", str(ann), str(truth)]) == 0
    assert "on#0" in capsys.readouterr().out


def test_config_error_exit_codes(tmp_path, capsys):
    assert main(["fuzz", "--target", "inproc:jsonlike", "--rng-seed", "1"]) == 2
    assert main(["fuzz", "--target", "nowhere", "--rng-seed", "1", "--exec-budget", "5"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["fuzz", "--target", "127.0.0.1:9", "--corpus", str(bad), "--rng-seed", "1",
                 "--exec-budget", "5"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["fuzz", "--target", "inproc:jsonlike"])
    assert exc.value.code == 2


def test_unreachable_exit_code(tmp_path):
    corpus = tmp_path / "c.json"
    save_seed_corpus(builtin_corpus("keyvalue"), corpus)
    assert main(["fuzz", "--target", "127.0.0.1:1", "--corpus", str(corpus), "--rng-seed", "1",
                 "--exec-budget", "5", "--out", str(tmp_path / "o")]) == 3


def test_fuzz_over_tcp_with_control_restarts(tmp_path):
    corpus = tmp_path / "c.json"
    save_seed_corpus(builtin_corpus("jsonlike_fault"), corpus)
    with serve(load_profile("jsonlike_fault")) as server:
        code = main(["fuzz", "--target", f"127.0.0.1:{server.port}", "--corpus", str(corpus),
                     "--control-port", str(server.control_port), "--rng-seed", "1", "--exec-budget", "40",
                     "--probe-interval-ms", "5", "--response-timeout-ms", "100", "--boot-wait-ms", "10",
                     "--out", str(tmp_path / "o")])
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["stats"]["executions"] == 40
    assert report["transmissions"]["reconciled"]
    assert code in (0, 1)
