import csv
import subprocess
import sys

import numpy as np
import pytest

from piccolo.cli import main
from piccolo.config import expand, load, loads, set_path
from piccolo.errors import ConfigError
from piccolo.experiment import TRACE_COLUMNS, fmt
from piccolo.render import series

BASE = """
[problem]
type = "synthetic"
set = "simplex"
dim = 4
base = [0.1, 0.2, 0.3, 0.4]
amplitude = 0.2
jitter = 0.2
sigma_g = 0.2
sigma_ghat = 0.1

[algorithm]
name = "AdaGrad"
eta = 0.5

[meta]
mode = "{mode}"
model = "{model}"

[run]
N = {N}
seeds = {seeds}
seed = 3
"""


def write_cfg(tmp_path, name="c.toml", mode="piccolo", model="oracle", N=30, seeds=2, extra=""):
    path = tmp_path / name
    path.write_text(BASE.format(mode=mode, model=model, N=N, seeds=seeds) + extra)
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- config ------------------------------------------------------------------------------

def test_defaults_and_round_trip(tmp_path):
    cfg = load(write_cfg(tmp_path))
    assert cfg.algorithm.name == "AdaGrad" and cfg.run.N == 30 and cfg.meta.fp_max_iters == 20
    assert loads(cfg.dumps()) == cfg


@pytest.mark.parametrize("text, path", [
    ("[problem]\nfoo = 1\n", "problem.foo"),
    ("[widgets]\n", "widgets"),
    ("[run]\nN = 0\n", "run.N"),
    ("[run]\nN = \"ten\"\n", "run.N"),
    ("[meta]\nmode = \"greedy\"\n", "meta.mode"),
    ("[problem]\ndim = 3\nbase = [1.0]\n", "problem.base"),
    ("[sweep]\n\"run.N\" = []\n", "sweep.run.N"),
    ("[sweep]\n\"run.bogus\" = [1]\n", "sweep.run.bogus"),
])
def test_config_errors_are_path_qualified(text, path):
    with pytest.raises(ConfigError, match=path.replace(".", r"\.")):
        loads(text)


def test_sweep_expansion_order():
    cfg = loads('[sweep]\n"run.N" = [10, 20]\n[sweep.meta]\nmode = ["piccolo", "dyna"]\n')
    points = [p for p, _ in expand(cfg)]
    assert points == [{"run.N": 10, "meta.mode": "piccolo"}, {"run.N": 10, "meta.mode": "dyna"},
                      {"run.N": 20, "meta.mode": "piccolo"}, {"run.N": 20, "meta.mode": "dyna"}]
    assert all(not c.sweep for _, c in expand(cfg))


def test_set_path_rejects_invalid_value():
    with pytest.raises(ConfigError):
        set_path(loads(""), "algorithm.eta", -1.0)


def test_fmt_full_precision():
    assert fmt(0.1) == "0.10000000000000001" and float(fmt(1 / 3)) == 1 / 3
    assert fmt(None) == "" and fmt(7) == "7" and fmt("ok") == "ok"


# -- run ---------------------------------------------------------------------------------

def test_run_single_round(tmp_path):
    assert main(["run", "--config", str(write_cfg(tmp_path, N=1, seeds=1)), "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "trace.csv")
    assert len(rows) == 1
    assert (tmp_path / "o" / "trace.csv").read_text().splitlines()[0] == ",".join(TRACE_COLUMNS)


def test_run_outputs_and_reruns_identical(tmp_path):
    cfg = write_cfg(tmp_path)
    for d in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
    for f in ("trace.csv", "report.csv", "meta.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    rows = read_csv(tmp_path / "a" / "trace.csv")
    assert len(rows) == 60 and {r["seed"] for r in rows} == {"0", "1"}
    report = read_csv(tmp_path / "a" / "report.csv")
    assert [r["status"] for r in report] == ["ok", "ok"] and all(r["audit_passed"] == "1" for r in report)
    for r in rows:
        for c in TRACE_COLUMNS:
            if r[c]:
                assert np.isfinite(float(r[c]))


def test_seed_override_changes_trace(tmp_path):
    cfg = write_cfg(tmp_path, seeds=1)
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", str(2**64 - 1)])
    assert (tmp_path / "a" / "trace.csv").read_bytes() != (tmp_path / "b" / "trace.csv").read_bytes()
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "c"), "--seed", str(2**64)]) == 2


def test_model_free_equals_zero_model_losses(tmp_path):
    cols = []
    for mode, model in (("model_free", "oracle"), ("piccolo", "zero")):
        out = tmp_path / mode
        assert main(["run", "--config", str(write_cfg(tmp_path, f"{mode}.toml", mode, model)), "--out", str(out)]) == 0
        cols.append([r["loss"] for r in read_csv(out / "trace.csv")])
    assert cols[0] == cols[1]


def test_meta_round_trip_reproduces_run(tmp_path):
    main(["run", "--config", str(write_cfg(tmp_path)), "--out", str(tmp_path / "a")])
    text = (tmp_path / "a" / "meta.txt").read_text()
    assert 'version = "' in text
    resolved = tmp_path / "resolved.toml"
    resolved.write_text(text.split("\n[library]")[0])
    main(["run", "--config", str(resolved), "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()


def test_thread_count_does_not_change_bytes(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, seeds=4)
    monkeypatch.setenv("PICCOLO_THREADS", "1")
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")])
    monkeypatch.setenv("PICCOLO_THREADS", "4")
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()


def test_unknown_key_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text("[problem]\nfoo = 1\n")
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "problem.foo" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "none.toml"), "--out", str(tmp_path / "o")]) == 2


def test_run_rejects_sweep_config(tmp_path):
    cfg = write_cfg(tmp_path, extra='\n[sweep]\n"run.N" = [5, 10]\n')
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_abort_exit_code(tmp_path):
    # a huge step on a box with unbounded coordinates overflows to inf
    path = tmp_path / "boom.toml"
    path.write_text('[problem]\nset = "box"\ndim = 2\nbase = [1e300, 1e300]\nlower = [-inf, -inf]\n'
                    'upper = [inf, inf]\n[algorithm]\nname = "BasicMD"\neta = 1e300\n'
                    '[run]\nN = 3\naudit = false\n')
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 3
    report = read_csv(tmp_path / "o" / "report.csv")
    assert report[0]["status"] == "aborted" and report[0]["abort_round"] == "1"


# -- sweep -------------------------------------------------------------------------------

def test_sweep_directories_and_slope(tmp_path):
    cfg = write_cfg(tmp_path, seeds=1, extra='\n[sweep]\n"run.N" = [20, 40, 80]\n"meta.mode" = ["piccolo", "model_free"]\n')
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    dirs = sorted(p.name for p in (tmp_path / "s").iterdir() if p.is_dir())
    assert dirs == [f"run{i:03d}" for i in range(6)]
    rows = read_csv(tmp_path / "s" / "sweep.csv")
    assert len(rows) == 6 and "slope" in rows[0]
    by_mode = {}
    for r in rows:
        by_mode.setdefault(r["meta.mode"], set()).add(r["slope"])
    assert all(len(v) == 1 and "" not in v for v in by_mode.values())


def test_sweep_empty_list_exit_code(tmp_path):
    cfg = write_cfg(tmp_path, extra='\n[sweep]\n"run.N" = []\n')
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 2
    assert main(["sweep", "--config", str(write_cfg(tmp_path, "plain.toml")), "--out", str(tmp_path / "t")]) == 2


# -- audit -------------------------------------------------------------------------------

def test_audit_verb(tmp_path, capsys):
    out = tmp_path / "o"
    main(["run", "--config", str(write_cfg(tmp_path)), "--out", str(out)])
    assert main(["audit", "--trace", str(out / "trace.csv"), "--states", str(out / "states")]) == 0
    assert capsys.readouterr().out.count("PASS") == 2


def test_audit_detects_tampered_trace(tmp_path):
    out = tmp_path / "o"
    main(["run", "--config", str(write_cfg(tmp_path, seeds=1)), "--out", str(out)])
    rows = read_csv(out / "trace.csv")
    rows[-1]["bound_slack"] = "123.0"
    with open(out / "bad.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, TRACE_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    assert main(["audit", "--trace", str(out / "bad.csv"), "--states", str(out / "states")]) == 1
    assert main(["audit", "--trace", str(out / "nope.csv"), "--states", str(out / "states")]) == 2


# -- render ------------------------------------------------------------------------------

def test_render_single_series(tmp_path):
    out = tmp_path / "o"
    main(["run", "--config", str(write_cfg(tmp_path, seeds=1)), "--out", str(out)])
    assert main(["render", "--in", str(out / "trace.csv"), "--col", "regret_avg", "--out", str(tmp_path / "a.svg")]) == 0
    svg = (tmp_path / "a.svg").read_text()
    assert svg.startswith("<svg") and svg.count("<polyline") == 1


def test_render_band_over_seeds(tmp_path):
    out = tmp_path / "o"
    main(["run", "--config", str(write_cfg(tmp_path, seeds=8)), "--out", str(out)])
    data = series(out / "trace.csv", "regret_avg")
    xs, med, lo, hi = data["regret_avg"]
    assert len(xs) == 30 and np.all(lo <= med) and np.all(med <= hi)
    main(["render", "--in", str(out / "trace.csv"), "--col", "regret_avg", "--out", str(tmp_path / "b.svg")])
    svg = (tmp_path / "b.svg").read_text()
    assert svg.count("<polyline") == 1 and svg.count('class="band"') == 1


def test_render_missing_column(tmp_path):
    out = tmp_path / "o"
    main(["run", "--config", str(write_cfg(tmp_path, N=3, seeds=1)), "--out", str(out)])
    assert main(["render", "--in", str(out / "trace.csv"), "--col", "nope", "--out", str(tmp_path / "c.svg")]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "piccolo", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("piccolo ")


def test_unbounded_regularizer_runs_without_audit(tmp_path, capsys):
    cfg = write_cfg(tmp_path, extra="")
    text = cfg.read_text().replace('name = "AdaGrad"', 'name = "FTRL"\ngeometry = "entropy"')
    cfg.write_text(text)
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    assert all(r["bound_slack"] == "" for r in read_csv(out / "trace.csv"))
    assert main(["audit", "--trace", str(out / "trace.csv"), "--states", str(out / "states")]) == 0
    assert "not audited" in capsys.readouterr().out
