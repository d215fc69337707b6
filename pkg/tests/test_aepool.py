import json

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fforge.aepool import (
    MANIFEST_SCHEMA,
    AutoencoderConfig,
    ChainSpec,
    Family,
    Loss,
    Upsampling,
    build_network,
    build_pool,
    chain_apply,
    enumerate_configs,
    fingerprint_residual,
    grammar_size,
    load_pool,
    train_autoencoder,
)
from fforge.errors import PoolExhausted, UnknownMember
from fforge.synthdata import SynthConfig, gen_real

IMAGES = [gen_real(SynthConfig(seed=11), v, f) for v in range(4) for f in range(4)]
TRAIN, VAL = IMAGES[:12], IMAGES[12:]


@pytest.fixture(scope="module")
def pool(tmp_path_factory):
    out = tmp_path_factory.mktemp("pool")
    return build_pool(3, TRAIN, VAL, seed=0, out_dir=out, max_epochs=3, min_steps_per_epoch=5), out


def test_grammar():
    configs = enumerate_configs(grammar_size())
    assert grammar_size() == 192 and len(set((c.family, c.depth, c.kernel, c.upsampling, c.loss) for c in configs)) == 192
    first = configs[0]
    assert (first.family, first.depth, first.kernel, first.upsampling, first.loss) == (
        Family.ConvAE, 6, 3, Upsampling.Nearest, Loss.MAE)
    keys = [c.complexity_key for c in configs]
    assert keys == sorted(keys)
    assert all(0.03 <= c.threshold_T <= 0.25 for c in configs)


def test_thresholds_independent_of_limit():
    assert enumerate_configs(5, seed=3) == enumerate_configs(40, seed=3)[:5]


@pytest.mark.parametrize("kwargs", [dict(depth=7), dict(depth=14), dict(kernel=4), dict(threshold_T=0.3)])
def test_config_validation(kwargs):
    base = dict(family=Family.UNet, depth=8, kernel=5, upsampling=Upsampling.Bilinear, loss=Loss.MSE)
    with pytest.raises(ValueError):
        AutoencoderConfig(**{**base, **kwargs})


@pytest.mark.parametrize("config", enumerate_configs(192)[::23], ids=lambda c: c.tag)
def test_network_preserves_shape(config):
    import torch

    net = build_network(config).eval()
    with torch.no_grad():
        out = net(torch.rand(2, 3, 40, 36))
    assert out.shape == (2, 3, 40, 36) and float(out.min()) >= 0 and float(out.max()) <= 1


def test_shallow_config_stops_early():
    cfg = AutoencoderConfig(Family.ConvAE, 6, 3, Upsampling.Nearest, Loss.MAE, 0.25, seed=3)
    trained = train_autoencoder(cfg, TRAIN, VAL)
    assert trained.epochs_run == 1  # observed at desk scale
    assert trained.heldout_mae < 0.25 and trained.accepted


def test_training_deterministic_and_capped():
    cfg = AutoencoderConfig(Family.UNet, 6, 3, Upsampling.ConvTranspose, Loss.MSE, 0.03, seed=9)
    a = train_autoencoder(cfg, TRAIN, VAL, max_epochs=2, min_steps_per_epoch=3)
    b = train_autoencoder(cfg, TRAIN, VAL, max_epochs=2, min_steps_per_epoch=3)
    assert a.checksum == b.checksum and a.history == b.history
    assert train_autoencoder(cfg, TRAIN, VAL, max_epochs=500, min_steps_per_epoch=0).epochs_run <= 50


def test_training_needs_enough_images():
    cfg = enumerate_configs(1)[0]
    with pytest.raises(ValueError):
        train_autoencoder(cfg, TRAIN[:7], VAL)


def test_pool_members_and_balance(pool):
    p, _ = pool
    assert p.pool_size == 3 and all(m.accepted for m in p.members)
    assert all(0.001 < m.heldout_mae < 0.30 for m in p.members)
    counts = p.family_counts()
    assert abs(counts["ConvAE"] - counts["UNet"]) <= 1


def test_pool_exhausted():
    with pytest.raises(PoolExhausted):
        build_pool(200, TRAIN, VAL, max_epochs=1, min_steps_per_epoch=0)


def test_manifest_schema_and_round_trip(pool):
    p, out = pool
    doc = json.loads((out / "manifest.json").read_text())
    jsonschema.validate(doc, MANIFEST_SCHEMA)
    loaded = load_pool(out)
    assert [m.checksum for m in loaded.members] == [m.checksum for m in p.members]
    assert loaded.to_dict(include_timestamp=False) == p.to_dict(include_timestamp=False)
    np.testing.assert_array_equal(loaded[1].reconstruct(IMAGES[0]), p[1].reconstruct(IMAGES[0]))


def test_empty_chain_identity(pool):
    p, _ = pool
    np.testing.assert_array_equal(chain_apply(IMAGES[2], p, ChainSpec.of()), IMAGES[2])
    assert fingerprint_residual(IMAGES[2], p, ChainSpec.of()).mae == 0


def test_single_and_two_step_chains(pool):
    p, _ = pool
    x = IMAGES[5]
    np.testing.assert_array_equal(chain_apply(x, p, ChainSpec.of(1)), p[1].reconstruct(x))
    np.testing.assert_array_equal(chain_apply(x, p, ChainSpec.of(2, 0)), p[0].reconstruct(p[2].reconstruct(x)))
    stats = fingerprint_residual(x, p, ChainSpec.of(0))
    assert 0.001 < stats.mae < 0.45


@settings(max_examples=10, deadline=None)
@given(st.permutations([0, 1, 2]), st.integers(0, 15))
def test_chain_associativity(pool, order, k):
    p, _ = pool
    x = IMAGES[k]
    whole = chain_apply(x, p, ChainSpec.of(*order))
    split = chain_apply(chain_apply(x, p, ChainSpec.of(*order[:2])), p, ChainSpec.of(order[2]))
    np.testing.assert_array_equal(whole, split)


def test_random_and_full_selection(pool):
    p, _ = pool
    for s in range(30):
        idx = ChainSpec.random(3, s).resolve(len(p))
        assert 1 <= len(idx) <= 3 and len(set(idx)) == len(idx)
        assert idx == ChainSpec.random(3, s).resolve(len(p))
    assert ChainSpec.full().resolve(len(p)) == (0, 1, 2)


@pytest.mark.parametrize("indices", [(3,), (-1,), (0, 0)])
def test_unknown_member(pool, indices):
    p, _ = pool
    with pytest.raises(UnknownMember):
        chain_apply(IMAGES[0], p, ChainSpec.of(*indices))
