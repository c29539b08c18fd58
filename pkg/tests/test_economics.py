import pytest

from gridforge.consts import TOU_PEAK, TOU_SHOULDER, TOU_VALLEY
from gridforge.economics import (
    annualization_factor,
    default_tariff,
    make_tariff,
    penetration_rate,
    tou_price,
)
from gridforge.errors import CaseValidationError
from gridforge.models import AevFleet


def test_annualization_factor_reference_value():
    assert annualization_factor(0.08, 10) == pytest.approx(0.149029, abs=1e-6)


def test_annualization_factor_single_year():
    # 一年寿命时等于 1 + d
    assert annualization_factor(0.08, 1) == pytest.approx(1.08)


@pytest.mark.parametrize("d, years", [(0.0, 10), (-0.1, 10), (0.08, 0)])
def test_annualization_factor_rejects_bad_input(d, years):
    with pytest.raises(ValueError):
        annualization_factor(d, years)


@pytest.mark.parametrize(
    "t, price",
    [
        (1, TOU_VALLEY),
        (6, TOU_VALLEY),
        (7, TOU_SHOULDER),
        (8, TOU_SHOULDER),
        (9, TOU_PEAK),
        (14, TOU_PEAK),
        (15, TOU_SHOULDER),
        (18, TOU_SHOULDER),
        (19, TOU_PEAK),
        (21, TOU_PEAK),
        (22, TOU_SHOULDER),
        (23, TOU_SHOULDER),
        (24, TOU_VALLEY),
    ],
)
def test_tou_price_table(t, price):
    assert tou_price(t) == price


@pytest.mark.parametrize("t", [0, 25])
def test_tou_price_out_of_range(t):
    with pytest.raises(ValueError):
        tou_price(t)


def test_default_tariff_covers_day():
    tariff = default_tariff()
    assert tariff.periods == 24
    assert tariff.charge_price == tariff.price == tariff.discharge_subsidy
    assert sum(1 for p in tariff.price if p == TOU_PEAK) == 9


def test_default_tariff_wraps_for_longer_horizons():
    tariff = default_tariff(48)
    assert tariff.price[:24] == tariff.price[24:]


def test_make_tariff_rejects_non_positive_price():
    with pytest.raises(CaseValidationError):
        make_tariff([0.5, 0.0, 0.5])


def test_make_tariff_rejects_length_mismatch():
    with pytest.raises(CaseValidationError):
        make_tariff([0.5, 0.6], charge_price=[0.5])


def test_penetration_rate(demo6):
    fleet = demo6.scenarios[0].fleet
    expected = sum(v.e_max * v.window_length for v in fleet) / demo6.total_load_energy()
    assert penetration_rate(fleet, demo6) == pytest.approx(expected)
    assert penetration_rate(AevFleet(), demo6) == 0.0
