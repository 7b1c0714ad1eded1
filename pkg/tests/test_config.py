import pytest

from sparsepose.config import RunConfig, parse_kv
from sparsepose.errors import ConfigError
from sparsepose.ik import IkConfig


def test_parse_kv_strips_comments_and_blanks():
    text = "# header\n\nembed_dim = 32  # trailing\nlr=1e-3\n"
    assert parse_kv(text) == {"embed_dim": "32", "lr": "1e-3"}
    with pytest.raises(ConfigError, match="line 2"):
        parse_kv("lr = 1\nbogus\n")


def test_defaults_when_no_file():
    cfg = RunConfig.load(None)
    assert cfg.model.embed_dim == 256 and cfg.train.window == 40 and cfg.ik == IkConfig()


def test_keys_route_to_their_sections():
    cfg = RunConfig.from_kv(
        parse_kv(
            "embed_dim=32\nnum_heads=4\nwindow=10\nmax_iters=1e3\nno_stabilizer=yes\n"
            "lambda_ori=0.5\nik_iters=7\nik_optimizer=gd\nskeleton=s.txt\n"
        )
    )
    assert cfg.model.embed_dim == 32 and cfg.model.window == 10 and cfg.train.window == 10
    assert cfg.train.max_iters == 1000 and cfg.train.no_stabilizer is True
    assert cfg.train.loss_weights.ori == 0.5 and cfg.train.loss_weights.fk == 1.0
    assert cfg.ik == IkConfig(iters=7, optimizer="gd")
    assert cfg.skeleton == "s.txt"


@pytest.mark.parametrize("text", ["colour=blue", "max_iters=2.5", "no_fk_loss=maybe", "embed_dim=30\nnum_heads=8"])
def test_bad_values(text):
    with pytest.raises(ConfigError):
        RunConfig.from_kv(parse_kv(text))
