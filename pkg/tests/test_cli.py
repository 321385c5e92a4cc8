import json

import pytest

from heightspin import cli, network
from heightspin.cli import ConfigError, _suite_configs, main, parse_config


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def report(out_dir, name):
    return json.loads((out_dir / f"{name}.json").read_text())


def test_empty_config_is_a_parse_error(tmp_path, capsys):
    assert main(["--config", write(tmp_path, ""), "--out", str(tmp_path)]) == 2
    assert "empty configuration" in capsys.readouterr().err


@pytest.mark.parametrize(
    "text",
    [
        'kind = "duality"\ncolour = 3\n',
        'kind = "duality"\n[params]\nbeta = 1.0\n',
        'kind = "teleport"\n',
        'kind = "bernstein"\npotential = "cubic:l=1"\n',
        'kind = "duality"\n[budget]\nmax_intermediate = 1e99\n',
        'kind = "duality"\nschema = 9\n',
        'kind = = "duality"\n',
    ],
)
def test_bad_configs_fail_closed(tmp_path, text):
    assert main(["--config", write(tmp_path, text), "--out", str(tmp_path)]) == 2


def test_missing_config_and_bad_flags(tmp_path):
    assert main(["--config", str(tmp_path / "nope.toml")]) == 2
    assert main(["--out", str(tmp_path)]) == 2
    assert main(["--config", write(tmp_path, 'kind = "surgery"\n'), "--threads", "0"]) == 2


def test_duality_passes(tmp_path, capsys):
    cfg = write(tmp_path, 'kind = "duality"\n[graph]\nkind = "square"\nL = 1\n[params]\nbetas = [1.0]\n')
    assert main(["--config", cfg, "--out", str(tmp_path)]) == 0
    doc = report(tmp_path, "duality")
    assert doc["pass"] and doc["experiment"] == "duality" and doc["statement"]
    rep = doc["reports"][0]
    assert rep["pass"] and rep["details"]["relative_error"] < 1e-6
    assert "PASS" in capsys.readouterr().out


def test_bernstein_pass_and_fail(tmp_path):
    good = write(tmp_path, 'kind = "bernstein"\npotential = "power:l=1.0,a=1.5"\n', "g.toml")
    bad = write(tmp_path, 'kind = "bernstein"\npotential = "power:l=1.0,a=3.0"\n', "b.toml")
    assert main(["--config", good, "--out", str(tmp_path / "g")]) == 0
    assert main(["--config", bad, "--out", str(tmp_path / "b")]) == 1
    rep = report(tmp_path / "b", "bernstein")["reports"][0]
    assert not rep["pass"]
    assert rep["details"]["offending"] and all(len(kt) == 2 for kt in rep["details"]["offending"])


def test_budget_exit(tmp_path):
    cfg = write(tmp_path, 'kind = "duality"\n[graph]\nL = 2\n[params]\nbetas = [1.0]\n[budget]\nmax_intermediate = 100\n')
    old = network.MAX_INTERMEDIATE
    assert main(["--config", cfg, "--out", str(tmp_path)]) == 3
    assert network.MAX_INTERMEDIATE == old


def test_env_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("HEIGHTSPIN_CONFIG", write(tmp_path, 'kind = "surgery"\n'))
    monkeypatch.setenv("HEIGHTSPIN_OUT", str(tmp_path / "env"))
    monkeypatch.setenv("HEIGHTSPIN_SEED", "17")
    assert main([]) == 0
    assert report(tmp_path / "env", "surgery")["seed"] == 17
    # flags win over the environment
    assert main(["--seed", "3", "--out", str(tmp_path / "flag")]) == 0
    assert report(tmp_path / "flag", "surgery")["seed"] == 3
    monkeypatch.setenv("HEIGHTSPIN_SEED", "x")
    assert main([]) == 2


def test_reports_deterministic_apart_from_timestamp(tmp_path):
    cfg = write(tmp_path, 'kind = "rsd"\nseed = 5\n[params]\ninstances = 3\nannealed = 1\n')
    for d in ("a", "b"):
        assert main(["--config", cfg, "--out", str(tmp_path / d)]) == 0
    a = (tmp_path / "a" / "rsd.json").read_text().splitlines()
    b = (tmp_path / "b" / "rsd.json").read_text().splitlines()
    diff = [(x, y) for x, y in zip(a, b) if x != y]
    assert len(a) == len(b) and all('"timestamp"' in x for x, _ in diff)


def test_floats_have_17_digits(tmp_path):
    cfg = write(tmp_path, 'kind = "surgery"\n')
    main(["--config", cfg, "--out", str(tmp_path)])
    text = (tmp_path / "surgery.json").read_text()
    assert format(1e-9, ".17g") in text


def test_parse_config_merges_defaults():
    cfg = parse_config({"kind": "depinning", "params": {"Ls": [2, 4]}})
    assert cfg.params["Ls"] == [2, 4] and cfg.params["lams"] == [0.2, 5.0]
    with pytest.raises(ConfigError):
        parse_config({"kind": "depinning", "seed": -1})


def test_every_kind_has_statement_and_runner():
    assert set(cli.KINDS) == set(cli.STATEMENTS) == set(cli.RUNNERS) == set(cli.PARAMS)


def test_full_suite_has_one_member_per_criterion():
    members = _suite_configs("full", 0)
    assert len(members) == 12
    for _, datas in members:
        for d in datas:
            parse_config(d)
    with pytest.raises(ConfigError):
        _suite_configs("nightly", 0)


@pytest.mark.slow
def test_smoke_suite_and_fault_injection(tmp_path, capsys):
    assert main(["--suite", "smoke", "--out", str(tmp_path / "ok")]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == len(_suite_configs("smoke", 0)) and all(l.startswith("PASS") for l in lines)
    assert main(["--suite", "smoke", "--out", str(tmp_path / "bad"), "--inject", "stiffness-tol"]) == 1
    out = capsys.readouterr().out
    assert any(l.startswith("FAIL") and "stiffness" in l for l in out.splitlines())
