import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from beamforge import cli
from beamforge.convergence import SweepConfig
from beamforge.errors import ConfigError

EXAMPLE = """
problem: cusp
orders: [1, 3]
epsilons: [0.0625, 0.03125, 0.015625]
times: [0.25, 1.0]
eta: {1: .inf, 3: 0.1}
"""


def test_parse_example():
    cfg = cli.parse_config(EXAMPLE)
    assert cfg.orders == (1, 3) and cfg.times == (0.25, 1.0)
    assert cfg.eta == {1: math.inf, 3: 0.1}
    assert cfg.norm == "energy" and cfg.fit_tail == 4
    assert cli.parse_config("eta: 0.2\norders: [2, 3]").eta == {2: 0.2, 3: 0.2}


def test_unknown_keys_and_bad_types_are_all_reported():
    with pytest.raises(ConfigError) as info:
        cli.parse_config("colour: red\norders: [one]\ntol: fast")
    text = "\n".join(info.value.problems)
    assert "colour: unknown key" in text and "orders" in text and "tol" in text
    with pytest.raises(ConfigError):
        cli.parse_config("[1, 2")


configs = st.builds(
    SweepConfig,
    problem=st.sampled_from(["single_beam", "cusp", "schrodinger_free", "init_data"]),
    orders=st.lists(st.sampled_from([1, 2, 3]), min_size=1, max_size=3, unique=True).map(sorted).map(tuple),
    epsilons=st.integers(3, 6).flatmap(lambda a: st.integers(a + 2, 9).map(
        lambda b: tuple(2.0**-e for e in range(a, b + 1)))),
    times=st.sampled_from([(0.0,), (0.25, 1.0), (0.0, 0.5, 0.75)]),
    spacing=st.sampled_from([0.25, 0.5]),
    tol=st.sampled_from([1e-9, 1e-10]),
)


@settings(max_examples=40, deadline=None)
@given(configs)
def test_serialize_round_trip(cfg):
    r = cli.resolve(cfg)
    assert cli.parse_config(cli.serialize_config(r)) == r


def test_fail_fast_on_bad_config(tmp_path, monkeypatch):
    called = []
    monkeypatch.setattr(cli, "run_sweep", lambda *a, **k: called.append(1))
    bad = tmp_path / "bad.yaml"
    bad.write_text("orders: [7]\nepsilons: [0.1, 0.2]\n")
    out = tmp_path / "out"
    assert cli.main(["cusp", "--config", str(bad), "--out", str(out)]) == 2
    assert not called
    doc = json.loads((out / "failure.json").read_text())
    assert doc["error"] == "ConfigError" and len(doc["problems"]) >= 2
    assert cli.main(["cusp", "--epsilon-max", "0.1", "--out", str(out)]) == 2
    other = tmp_path / "other.yaml"
    other.write_text("problem: single_beam\n")
    assert cli.main(["cusp", "--config", str(other), "--out", str(out)]) == 2


def test_flags_override_config(tmp_path):
    p = cli._build_parser()
    path = tmp_path / "c.yaml"
    path.write_text("orders: [1]\nnorm: energy\n")
    args = p.parse_args(["single-beam", "--config", str(path), "--orders", "2,3",
                         "--epsilon-max", "0.125", "--epsilon-min", "0.03125", "--eta", "inf",
                         "--times", "0.5"])
    cfg = cli._config_for(args)
    assert cfg.orders == (2, 3) and cfg.epsilons == (0.125, 0.0625, 0.03125)
    assert cfg.eta == {2: math.inf, 3: math.inf} and cfg.times == (0.5,)


def test_nonsqueeze_command(tmp_path, capsys):
    out = tmp_path / "ns"
    assert cli.main(["nonsqueeze", "--t", "0", "--pairs", "500", "--out", str(out)]) == 0
    lo, hi = map(float, (out / "nonsqueeze.txt").read_text().split())
    assert 1 - 1e-12 <= lo <= hi <= 3.01
    assert json.loads((out / "manifest.json").read_text())["extra"]["pairs"] == 500


def test_small_init_data_run(tmp_path):
    out = tmp_path / "init"
    code = cli.main(["init-data", "--k", "1", "--epsilon-max", "0.0625", "--epsilon-min",
                     "0.015625", "--out", str(out)])
    assert code == 0
    rows = (out / "records.csv").read_text().splitlines()
    assert rows[0] == "k,epsilon,time,kind,abs,ref,rel" and len(rows) == 4
    summary = (out / "summary.txt").read_text()
    assert summary.startswith("k=1 t=0 slope=")
    assert cli.parse_config((out / "config.yaml").read_text()).problem == "init_data"
