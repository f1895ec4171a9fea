import argparse
import json

import pytest

from tables import TABLE_S1_CSV
from voikit.cli import build_parser, main

CONFIG = """\
model = beta-binomial
n_list = 10, 50, 250
psa.samples = 600
population.incidence = 1000
population.horizon = 10
population.discount = 0.035
cost.fixed = 50000
cost.per_participant = 800
"""


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "bb.cfg"
    path.write_text(CONFIG, encoding="utf-8")
    return str(path)


def run(capsysbinary, *argv):
    code = main(list(argv))
    out, err = capsysbinary.readouterr()
    return code, out, err.decode()


def error_record(err):
    return json.loads(err.strip().splitlines()[-1])


class TestHappyPath:
    def test_ga_curve(self, capsysbinary, cfg):
        code, out, _ = run(capsysbinary, "evsi", "--config", cfg, "--method", "ga", "--n", "10,50,250",
                           "--seed", "1")
        lines = out.decode().splitlines()
        assert code == 0 and lines[0] == "method,N,evsi,se" and len(lines) == 4

    def test_psa_then_evpi(self, capsysbinary, cfg, tmp_path):
        psa = tmp_path / "psa.csv"
        assert main(["psa", "--config", cfg, "--seed", "3", "--samples", "200", "--out", str(psa)]) == 0
        assert psa.read_text().startswith("sim,p.resp,q.gain,c.trt,qaly.t1,cost.t1")
        code, out, _ = run(capsysbinary, "evpi", "--psa", str(psa), "--lambda", "10000", "--format", "json")
        assert code == 0 and json.loads(out)[0]["kind"] == "EVPI"

    def test_evppi_writes_augmented(self, capsysbinary, cfg, tmp_path):
        aug = tmp_path / "aug.csv"
        code, out, _ = run(capsysbinary, "evppi", "--config", cfg, "--seed", "4", "--aug-out", str(aug))
        assert code == 0 and out.startswith(b"kind,value,mc_se\nEVPPI,")
        assert "enb.t2" in aug.read_text().splitlines()[0]

    def test_table_layout_input(self, capsysbinary, tmp_path):
        psa = tmp_path / "s1.csv"
        psa.write_text(TABLE_S1_CSV)
        code, out, _ = run(capsysbinary, "curves", "--psa", str(psa), "--lambdas", "20000,100000")
        assert code == 0 and len(out.decode().splitlines()) == 1 + 2 * 3

    def test_ess_and_enbs(self, capsysbinary, cfg):
        code, out, _ = run(capsysbinary, "ess", "--config", cfg, "--method", "direct", "--seed", "1")
        assert code == 0 and out.decode().splitlines()[1] == "p.resp,direct,20.0"
        code, out, _ = run(capsysbinary, "enbs", "--config", cfg, "--seed", "2")
        assert code == 0 and out.decode().splitlines()[0] == "N,evsi_pp,evsi_pop,cost,enbs"

    def test_enbs_from_evsi_file(self, capsysbinary, tmp_path):
        evsi = tmp_path / "evsi.csv"
        evsi.write_text("method,N,evsi,se\nga,1,100.0,\nga,25,500.0,\nga,100,1000.0,\n")
        code, out, _ = run(capsysbinary, "enbs", "--evsi", str(evsi), "--incidence", "1", "--horizon", "1",
                           "--per-participant-cost", "10", "--format", "json")
        assert code == 0 and json.loads(out)["optimal_N"] == 25

    def test_not_worthwhile_note(self, capsysbinary, tmp_path):
        evsi = tmp_path / "evsi.csv"
        evsi.write_text("method,N,evsi,se\nga,10,0.0,\n")
        code, _, err = run(capsysbinary, "enbs", "--evsi", str(evsi), "--incidence", "1", "--horizon", "1",
                           "--fixed-cost", "5")
        assert code == 0 and "research not worthwhile" in err


class TestExitCodes:
    def test_no_command(self, capsysbinary):
        code, _, err = run(capsysbinary)
        assert code == 2 and error_record(err)["error"] == "UsageError"

    def test_bad_choice(self, capsysbinary, cfg):
        code, _, err = run(capsysbinary, "evsi", "--config", cfg, "--method", "xx", "--seed", "1")
        assert code == 2 and error_record(err)["exit_code"] == 2

    def test_seed_required(self, capsysbinary, cfg):
        code, _, _ = run(capsysbinary, "evsi", "--config", cfg, "--method", "ga")
        assert code == 2

    def test_missing_lambda(self, capsysbinary, tmp_path):
        psa = tmp_path / "s1.csv"
        psa.write_text(TABLE_S1_CSV)
        code, _, err = run(capsysbinary, "evpi", "--psa", str(psa))
        assert code == 2 and "threshold" in err

    def test_unreadable_psa(self, capsysbinary):
        code, _, err = run(capsysbinary, "evpi", "--psa", "/no/such/file.csv", "--lambda", "1")
        assert code == 3 and error_record(err)["error"] == "DataError"

    def test_malformed_psa(self, capsysbinary, tmp_path):
        psa = tmp_path / "bad.csv"
        psa.write_text("p,qaly.t1,cost.t1,qaly.t2,cost.t2\n1,2,x,4,5\n2,2,3,4,5\n")
        code, _, err = run(capsysbinary, "evpi", "--psa", str(psa), "--lambda", "1")
        assert code == 3 and error_record(err)["error"] == "ParseError"

    def test_seven_outcomes(self, capsysbinary, tmp_path):
        path = tmp_path / "seven.cfg"
        path.write_text("model = beta-binomial\n" + "".join(f"outcome.o{i} = binomial p.resp\n" for i in range(7)))
        code, _, err = run(capsysbinary, "evsi", "--config", str(path), "--method", "rb", "--seed", "1",
                           "--samples", "300")
        assert code == 4 and "five or six" in err and error_record(err)["error"] == "DimensionError"

    def test_enbs_needs_seed_to_compute_evsi(self, capsysbinary, cfg):
        code, _, err = run(capsysbinary, "enbs", "--config", cfg)
        assert code == 2 and "--seed" in err

    def test_bad_q(self, capsysbinary, cfg):
        code, _, _ = run(capsysbinary, "evsi", "--config", cfg, "--method", "mm", "--q", "30", "--seed", "1")
        assert code == 3


class TestGrammar:
    def test_every_flag_is_documented(self):
        parser = build_parser()
        sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        assert set(sub.choices) == {"psa", "evpi", "evppi", "evsi", "ess", "enbs", "curves"}
        for name, p in sub.choices.items():
            text = p.format_help()
            for action in p._actions:
                for flag in action.option_strings:
                    assert flag in text, (name, flag)
                assert action.help is not None or action.option_strings == ["-h", "--help"], (name, action.dest)

    @pytest.mark.parametrize("command", ["psa", "evpi", "evppi", "evsi", "ess", "enbs", "curves"])
    def test_help_exits_cleanly(self, capsysbinary, command):
        code, out, _ = run(capsysbinary, command, "--help")
        assert code == 0 and b"--threads" in out

    @pytest.mark.parametrize("command", ["psa", "evppi", "evsi", "ess"])
    def test_stochastic_commands_require_seed(self, command):
        sub = next(a for a in build_parser()._actions if isinstance(a, argparse._SubParsersAction))
        seed = next(a for a in sub.choices[command]._actions if "--seed" in a.option_strings)
        assert seed.required


class TestDeterminism:
    @pytest.mark.parametrize("argv", [
        ["evsi", "--method", "is", "--n", "10,50"],
        ["evsi", "--method", "mm", "--n", "50"],
        ["evsi", "--method", "oracle", "--n", "20", "--outer", "100", "--inner", "100"],
        ["evppi"],
    ])
    def test_threads_do_not_change_output(self, tmp_path, cfg, argv):
        outputs = []
        for i, threads in enumerate(["1", "4", "1", "4"]):
            out = tmp_path / f"out{i}"
            assert main(argv + ["--config", cfg, "--seed", "7", "--threads", threads, "--out", str(out)]) == 0
            outputs.append(out.read_bytes())
        assert all(o == outputs[0] for o in outputs)
