import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from birads_mc.core import BENIGN_CONSISTENT, MAPPER_OUTPUTS, BiRadsCategory as B, Pathology
from birads_mc.errors import ValidationError
from birads_mc.network import PredictiveDistribution
from birads_mc.uncertainty import (
    BandThresholds,
    MapperConfig,
    assign_birads,
    binary_entropy,
    default_b2_epsilon,
    derive_thresholds,
    map_birads_from_entropy,
    map_birads_from_prob,
    predictive_entropy,
)

# base-2 binary entropies evaluated with mpmath at 30 digits
H_002 = 0.141440542541820645
H_010 = 0.468995593589281221
H_005 = 0.286396957115956129
H_097 = 0.194391857831576161


def dist(p):
    return PredictiveDistribution.from_malignant(p)


def label_of(p):
    return Pathology.MALIGNANT if p >= 0.5 else Pathology.BENIGN


class TestEntropy:
    def test_base_two_maximum(self):
        assert predictive_entropy(PredictiveDistribution(0.5, 0.5)) == 1.0

    @pytest.mark.parametrize("p", [0.0, 1.0])
    def test_certain(self, p):
        assert predictive_entropy(dist(p)) == 0.0

    @pytest.mark.parametrize("p,h", [(0.02, H_002), (0.1, H_010), (0.05, H_005), (0.97, H_097)])
    def test_against_high_precision(self, p, h):
        assert binary_entropy(p) == pytest.approx(h, abs=1e-15)

    @given(st.floats(0.0, 1.0))
    def test_symmetry_exact(self, p):
        assert predictive_entropy(PredictiveDistribution(p, 1 - p)) == predictive_entropy(PredictiveDistribution(1 - p, p))

    @given(st.floats(0.0, 1.0))
    def test_maximum_at_half(self, p):
        assert binary_entropy(p) <= 1.0


class TestThresholds:
    def test_values(self):
        th = derive_thresholds()
        assert th.h_b3 == pytest.approx(0.1414, abs=5e-4)
        assert th.h_b4a == pytest.approx(0.4690, abs=5e-4)
        assert th.h_b5 == pytest.approx(0.2864, abs=5e-4)
        assert th.log_base == 2

    def test_edges_are_bit_identical_to_sweep_points(self):
        th = derive_thresholds()
        assert th.h_b3 == predictive_entropy(dist(0.02))
        assert th.h_b4a == predictive_entropy(dist(0.10))
        assert th.h_b5 == predictive_entropy(dist(0.95))

    @pytest.mark.parametrize("eps", [0.0, 0.005, 0.01, 0.0199])
    def test_ordering(self, eps):
        th = derive_thresholds(eps)
        assert th.h_b2 < th.h_b3 < th.h_b4a and th.h_b5 < th.h_b4a

    def test_bad_ordering_rejected(self):
        with pytest.raises(ValidationError):
            BandThresholds(h_b2=0.2, h_b3=0.1, h_b4a=0.469, h_b5=0.286)

    @pytest.mark.parametrize("T,eps", [(100, 0.005), (1000, 0.0005), (10, 0.01), (1, 0.01)])
    def test_default_b2_epsilon(self, T, eps):
        assert default_b2_epsilon(T) == pytest.approx(eps)

    def test_epsilon_must_stay_below_b3_edge(self):
        with pytest.raises(ValidationError):
            MapperConfig(b2_prob_epsilon=0.02)

    def test_header_fields(self):
        doc = MapperConfig.for_passes(100).to_json()
        assert doc["b2_prob_epsilon"] == 0.005 and doc["log_base"] == 2
        assert doc["tie_break_at_half"] == "Malignant"


class TestProbabilityMapper:
    @pytest.mark.parametrize(
        "p,expected",
        [
            (0.0, B.B2), (0.005, B.B2), (0.0051, B.B3), (0.02, B.B3), (0.0201, B.B4a), (0.05, B.B4a),
            (0.1, B.B4a), (0.1001, B.B4b), (0.4999, B.B4b), (0.5, B.B4c), (0.9499, B.B4c),
            (0.95, B.B5), (0.97, B.B5), (1.0, B.B5),
        ],
    )
    def test_examples(self, p, expected):
        assert map_birads_from_prob(dist(p), MapperConfig.for_passes(100)) is expected

    def test_monotone_over_grid(self):
        cfg = MapperConfig()
        orders = [map_birads_from_prob(dist(p), cfg).order for p in np.linspace(0, 1, 10_001)]
        assert all(a <= b for a, b in zip(orders, orders[1:]))
        assert set(orders) == {b.order for b in MAPPER_OUTPUTS}

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_monotone_pairs(self, a, b):
        lo, hi = sorted((a, b))
        assert map_birads_from_prob(dist(lo)).order <= map_birads_from_prob(dist(hi)).order

    @given(st.floats(0, 1))
    def test_band_consistency(self, p):
        assert (map_birads_from_prob(dist(p)) in BENIGN_CONSISTENT) == (p < 0.5)


class TestEntropyMapper:
    @pytest.mark.parametrize(
        "label,H,expected",
        [
            (Pathology.MALIGNANT, 0.19, B.B5),
            (Pathology.MALIGNANT, H_005, B.B5),
            (Pathology.MALIGNANT, 0.2865, B.B4c),
            (Pathology.MALIGNANT, 1.0, B.B4c),
            (Pathology.BENIGN, 0.0, B.B2),
            (Pathology.BENIGN, 0.1, B.B3),
            (Pathology.BENIGN, 0.3, B.B4a),
            (Pathology.BENIGN, 0.9, B.B4b),
        ],
    )
    def test_examples(self, label, H, expected):
        assert map_birads_from_entropy(label, H) is expected

    def test_cross_check_example(self):
        assert map_birads_from_entropy(Pathology.MALIGNANT, 0.19) is map_birads_from_prob(dist(0.97))

    @pytest.mark.parametrize("H", [-0.1, 1.5])
    def test_out_of_range(self, H):
        with pytest.raises(ValidationError):
            map_birads_from_entropy(Pathology.BENIGN, H)

    @pytest.mark.parametrize("T", [1, 10, 100, 1000])
    def test_branch_agreement_grid(self, T):
        cfg = MapperConfig.for_passes(T)
        for p in np.linspace(0, 1, 10_001):
            d = dist(float(p))
            assert map_birads_from_entropy(label_of(p), predictive_entropy(d), cfg) is map_birads_from_prob(d, cfg), p

    @given(st.floats(0, 1))
    def test_assign_matches_prob_mapper(self, p):
        assert assign_birads(dist(p)) is map_birads_from_prob(dist(p))
