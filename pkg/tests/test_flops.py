import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lookupvit import flops
from lookupvit.config import ModelConfig
from lookupvit.errors import ConfigurationError, ContractError
from lookupvit import tensor as T

import oracles


def test_vit_block_small_and_b16():
    assert flops.vit_block_macs(1, 1) == 14
    assert flops.vit_block_macs(196, 768) == 1_446_273_024


def test_lookup_block_small_and_b16():
    assert flops.lookup_block_macs(1, 1, 1) == 24
    assert flops.lookup_block_macs(196, 25, 768) == 695_855_616


def test_lookup_rejects_more_compressed_than_lookup_tokens():
    with pytest.raises(ConfigurationError):
        flops.lookup_block_macs(4, 5, 8)


@given(st.integers(1, 400), st.integers(1, 400), st.integers(1, 64))
@settings(max_examples=80, deadline=None)
def test_closed_forms_match_matmul_enumeration(n, m, d):
    m = min(m, n)
    d = 2 * d
    assert flops.vit_block_macs(n, d) == oracles.vit_block_macs(n, d) == 2 * n * n * d + 12 * n * d * d
    want = (3 * n * m + 2 * m * m) * d + (4 * n + 15 * m) * d * d
    assert flops.lookup_block_macs(n, m, d) == oracles.lookup_block_macs(n, m, d) == want


def test_terms_sum_to_total_and_flops_double():
    terms = flops.lookup_block_terms(196, 25, 768)
    assert sum(terms.values()) == flops.lookup_block_macs(196, 25, 768)
    rep = flops.lookup_report(196, 25, 768, 12)
    assert rep.flops == 2 * rep.macs == 2 * 12 * 695_855_616


def test_cross_overhead_decomposition():
    for n, m, d in [(196, 196, 768), (49, 49, 64), (196, 25, 768), (16, 4, 16)]:
        over = flops.cross_overhead(n, m, d)
        assert flops.lookup_block_macs(n, m, d) == flops.vit_block_macs(m, d) + sum(over.values())


def test_doubling_width_quadruples_d_squared_terms():
    a = flops.lookup_block_terms(196, 25, 64)
    b = flops.lookup_block_terms(196, 25, 128)
    for key in ("projections", "mlp_compressed", "mlp_lookup"):
        assert b[key] == 4 * a[key]
    for key in ("attention_quadratic", "attention_cross"):
        assert b[key] == 2 * a[key]


def test_lookup_cheaper_whenever_inequality_holds():
    for n, m, d in itertools.product([16, 64, 196, 576], [1, 4, 9, 25, 49, 100], [64, 384, 768, 1024]):
        if m > n:
            continue
        if 2 * n * n + 12 * n * d > 3 * n * m + 2 * m * m + (4 * n + 15 * m) * d:
            assert flops.lookup_block_macs(n, m, d) < flops.vit_block_macs(n, d)


def test_sweep_is_monotone_in_size_and_grid():
    rows = flops.scaling_sweep([224, 288, 384, 512], [(3, 3), (5, 5), (7, 7), (10, 10)])
    look = [r for r in rows if not r.is_vit]
    for g in [(3, 3), (5, 5), (7, 7), (10, 10)]:
        series = [r.gflops for r in look if (r.grid_h, r.grid_w) == g]
        assert series == sorted(series)
    for size in [224, 288, 384, 512]:
        series = [r.gflops for r in look if r.size == size]
        assert series == sorted(series)


def test_sweep_rejects_indivisible_size():
    with pytest.raises(ConfigurationError):
        flops.scaling_sweep([225], [(5, 5)])


def test_csv_layout():
    text = flops.to_csv(flops.preset_rows("b16-224"), flops.REFERENCE_GFLOPS["b16-224"])
    lines = text.strip().splitlines()
    assert lines[0] == flops.CSV_HEADER + ",reference_gflops"
    assert lines[1].startswith("224,0,0,196,0,768,12,") and lines[1].endswith(",35.1")
    assert len(lines) == 6


def test_overheads_flag_adds_embed_and_heads():
    plain = flops.scaling_sweep([224], [(5, 5)])
    full = flops.scaling_sweep([224], [(5, 5)], include_overheads=True)
    embed = flops.patch_embed_macs(196, (16, 16), 3, 768)
    assert full[1].gmacs * 1e9 == pytest.approx(plain[1].gmacs * 1e9 + embed + 2 * 768 * 1000)


def test_empirical_requires_instrumentation():
    with pytest.raises(ContractError):
        T.active_counters()


TOY = ModelConfig(image_size=(16, 16), patch=(4, 4), dim=16, depth=1, heads=2,
                  compressed_grids=((2, 2),), num_classes=3)


def test_toy_empirical_matches_formula_exactly():
    rep = flops.empirical_macs(TOY)
    assert rep.per_block[0] == flops.lookup_block_terms(16, 4, 16)
    assert rep.macs == flops.lookup_block_macs(16, 4, 16)


@pytest.mark.parametrize("changes", [
    {"output_proj": False},
    {"no_infuse": True},
    {"no_infuse": True, "output_proj": False},
    {"no_lookup_tokens": True},
    {"depth": 3, "compressed_grids": ((1, 3),)},
    {"image_size": (24, 16), "compressed_grids": ((3, 2),), "p": 2, "q": 4},
])
def test_empirical_matches_analytic_for_variants(changes):
    cfg = TOY.replace(**changes)
    rep = flops.empirical_macs(cfg)
    want = flops.analytic_block_terms(cfg)
    for block in rep.per_block:
        assert {k: v for k, v in block.items() if v or want.get(k)} == {k: v for k, v in want.items() if v}


def test_analytic_variants_by_hand():
    n, m, d = 16, 4, 16
    base = flops.analytic_block_terms(TOY)
    assert base == flops.lookup_block_terms(n, m, d)
    no_o = flops.analytic_block_terms(TOY.replace(output_proj=False))
    assert no_o["projections"] == base["projections"] - (m + n) * d * d
    no_inf = flops.analytic_block_terms(TOY.replace(no_infuse=True))
    assert no_inf["projections"] == base["projections"] - (m + n) * d * d
    assert no_inf["attention_cross"] == 2 * n * m * d
    both = flops.analytic_block_terms(TOY.replace(no_infuse=True, output_proj=False))
    assert both["projections"] == base["projections"] - (2 * m + n) * d * d
