import pytest

from voikit.config import build_config, load_config, parse_config
from voikit.errors import DataError, FormatError

EXAMPLE = """\
# a study of response rates
model = beta-binomial
lambda = 12000
prior.p.resp = beta 3 7
outcome.responders = binomial p.resp
n = 40
n_list = 10, 50, 250
psa.samples = 5000   # inline comment
population.incidence = 1000
population.horizon = 10
population.discount = 0.035
cost.fixed = 50000
cost.per_participant = 800
n0.p.resp = 10
"""


def factory():
    from voikit import builtin
    return builtin.get_model("linear-normal")


def not_a_model():
    return 42


class TestParse:
    def test_example(self):
        cfg = build_config(parse_config(EXAMPLE))
        assert cfg.model_name == "beta-binomial" and cfg.lam == 12000.0
        assert cfg.model.spec("p.resp").a == 3 and cfg.model.spec("p.resp").b == 7
        assert cfg.design.sample_size == 40 and cfg.design.outcomes[0].name == "responders"
        assert cfg.phi == ("p.resp",) and cfg.n_list == (10, 50, 250) and cfg.psa_samples == 5000
        assert cfg.population.multiplier == pytest.approx(1000 * sum(1.035**-y for y in range(10)))
        assert cfg.cost(10) == 58000.0 and cfg.n0 == {"p.resp": 10.0}

    def test_builtin_defaults(self):
        cfg = build_config(parse_config("model = dr-tox\n"))
        assert cfg.lam == 100000.0 and cfg.design.phi_names == ("p.dr.t1",) and cfg.design.sample_size == 50

    def test_module_factory(self):
        cfg = build_config(parse_config("model = test_config:factory\n"))
        assert cfg.model.name == "linear-normal"

    @pytest.mark.parametrize("text,match", [
        ("colour = blue\n", "unknown key"),
        ("n = 1\nn = 2\n", "twice"),
        ("just words\n", "key = value"),
        ("lambda = lots\n", "number"),
        ("model = beta-binomial\nprior.p.resp = beta 1\n", "family a b"),
        ("model = beta-binomial\noutcome.k = binomial p.resp size=3\n", "bad option"),
    ])
    def test_format_errors(self, text, match):
        with pytest.raises(FormatError, match=match):
            build_config(parse_config(text))

    @pytest.mark.parametrize("text", [
        "model = no-such-model\n",
        "model = test_config:missing\n",
        "model = test_config:not_a_model\n",
        "prior.x = beta 1 1\n",
        "model = beta-binomial\noutcome.k = binomial nope\n",
    ])
    def test_data_errors(self, text):
        with pytest.raises(DataError):
            build_config(parse_config(text))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="cannot read"):
            load_config(tmp_path / "absent.cfg")

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(EXAMPLE, encoding="utf-8")
        assert load_config(path).lam == 12000.0
