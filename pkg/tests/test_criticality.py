import math

import numpy as np
import pytest

from wavemaps.cauchy import EvolutionConfig, InitialDataSpec
from wavemaps.criticality import (
    BisectionRecord,
    FamilySpec,
    KReport,
    Outcome,
    bisect,
    classify_run,
    lyapunov_K,
    monitor_K,
)
from wavemaps.errors import BracketError
from wavemaps.grid import ProfileTable, RadialGrid
from wavemaps.selfsim import find_profile
from wavemaps.similarity import SimilarityState


RHO = np.linspace(0.0, 1.0, 2001)

# Oracle for K on the linear ramp u = pi*rho/2, from an independent
# quadrature (scipy.integrate.quad on the closed-form integrand) run before
# this module was written.
K_RAMP = -0.19817983155224958


def table(f, df=None):
    return ProfileTable(RHO, f(RHO), None if df is None else df(RHO))


class TestLyapunovK:
    def test_ground_profile_closed_form(self):
        rep = lyapunov_K(table(lambda x: 2 * np.arctan(x)))
        assert not rep.divergent
        assert rep.value == pytest.approx(math.pi / 4 - 1, abs=1e-10)

    def test_linear_ramp_quad_oracle(self):
        rep = lyapunov_K(table(lambda x: math.pi / 2 * x))
        assert not rep.divergent
        assert rep.value == pytest.approx(K_RAMP, abs=1e-10)

    def test_equator_map_vanishes(self):
        rep = lyapunov_K(table(lambda x: math.pi / 2 + 0 * x))
        assert not rep.divergent
        assert rep.value == pytest.approx(0.0, abs=1e-12)

    def test_wrong_boundary_value_flags_divergent(self):
        rep = lyapunov_K(table(lambda x: x))  # u(1) = 1 != pi/2
        assert rep.divergent
        assert rep.value == -math.inf

    def test_partial_cover_rejected(self):
        half = np.linspace(0.0, 0.5, 300)
        with pytest.raises(ValueError):
            lyapunov_K(ProfileTable(half, half))

    def test_ground_profile_below_excited(self):
        # f0 is the stable attractor and sits lowest: K[f0] < K[f1].
        k0 = lyapunov_K(table(lambda x: 2 * np.arctan(x))).value
        f1 = find_profile(1).interior
        k1 = lyapunov_K(ProfileTable(RHO, f1(RHO))).value
        assert k0 < k1

    @pytest.mark.parametrize("n", [0, 1])
    def test_stationarity_at_profiles(self, n):
        prof = find_profile(n).interior
        base = np.asarray(prof(RHO))
        rng = np.random.default_rng(42 + n)
        for _ in range(20):
            a, b, c = rng.uniform(0.5, 3.0, size=3)
            bump = np.sin(math.pi * RHO) ** 2 * np.sin(a + b * RHO + c * RHO**2)
            eps = 1e-5
            kp = lyapunov_K(ProfileTable(RHO, base + eps * bump)).value
            km = lyapunov_K(ProfileTable(RHO, base - eps * bump)).value
            assert abs((kp - km) / (2 * eps)) < 1e-6


class TestMonitorK:
    def test_gauge_orbit_values_and_order(self):
        grid = RadialGrid(3.0, 512)
        rho = grid.nodes()
        states = []
        for tau, eps in ((0.0, 0.0), (1.0, 0.01)):
            u = 2 * np.arctan(rho / (1 + eps * math.exp(tau)))
            states.append(SimilarityState(tau, grid, u, np.zeros_like(u)))
        values, monotone = monitor_K(states)
        assert values[0] == pytest.approx(math.pi / 4 - 1, abs=1e-6)
        assert isinstance(monotone, bool)

    def test_divergent_entry_propagates(self):
        grid = RadialGrid(3.0, 512)
        rho = grid.nodes()
        u = np.where(rho > 0, 1.0, 0.0)  # u(1) far from pi/2
        states = [SimilarityState(0.0, grid, u * 0.0, np.zeros_like(u)),
                  SimilarityState(1.0, grid, u, np.zeros_like(u))]
        values, _ = monitor_K(states)
        assert values[1] == -math.inf


class TestFamilySpec:
    def test_at_substitutes_parameter(self):
        base = InitialDataSpec("gaussian", {"A": 0.1, "r0": 2.0, "s": 1.0})
        fam = FamilySpec(base, "A", 0.0, 1.0)
        assert fam.at(0.5).params["A"] == 0.5
        assert fam.at(0.5).params["r0"] == 2.0

    def test_unknown_parameter_rejected(self):
        base = InitialDataSpec("gaussian", {"A": 0.1, "r0": 2.0, "s": 1.0})
        with pytest.raises(ValueError):
            FamilySpec(base, "Q", 0.0, 1.0)

    def test_inverted_bracket_rejected(self):
        base = InitialDataSpec("gaussian", {"A": 0.1, "r0": 2.0, "s": 1.0})
        with pytest.raises(ValueError):
            FamilySpec(base, "A", 1.0, 0.0)


def synthetic_classifier(threshold):
    def classify(spec, cfg):
        return Outcome.BLOWUP if spec.params["A"] > threshold else Outcome.DISPERSE
    return classify


class TestBisectSynthetic:
    BASE = InitialDataSpec("gaussian", {"A": 0.1, "r0": 2.0, "s": 1.0})
    CFG = EvolutionConfig(grid=RadialGrid(8.0, 128), t_end=1.0)

    def test_converges_to_threshold(self):
        fam = FamilySpec(self.BASE, "A", 0.01, 0.9)
        rec = bisect(fam, 1e-10, self.CFG, classify=synthetic_classifier(0.3))
        assert rec.achieved_gap <= 1e-10
        assert rec.p_star == pytest.approx(0.3, rel=1e-9)

    def test_record_is_monotone(self):
        fam = FamilySpec(self.BASE, "A", 0.01, 0.9)
        rec = bisect(fam, 1e-8, self.CFG, classify=synthetic_classifier(0.3))
        disp = [p for p, o, _ in rec.iterations if o is Outcome.DISPERSE]
        blow = [p for p, o, _ in rec.iterations if o is Outcome.BLOWUP]
        assert max(disp) < min(blow)

    def test_reparameterization_invariance(self):
        # classify via A = p**3: recovered critical data agrees to 1e-10
        def classify(spec, cfg):
            return (Outcome.BLOWUP if spec.params["A"] ** 3 > 0.027
                    else Outcome.DISPERSE)
        fam = FamilySpec(self.BASE, "A", 0.01, 0.9)
        rec = bisect(fam, 1e-12, self.CFG, classify=classify)
        assert rec.p_star**3 == pytest.approx(0.027, rel=1e-9)

    def test_invalid_bracket_raises(self):
        fam = FamilySpec(self.BASE, "A", 0.5, 0.9)  # both sides blow up
        with pytest.raises(BracketError):
            bisect(fam, 1e-8, self.CFG, classify=synthetic_classifier(0.3))

    def test_rel_tol_floor(self):
        fam = FamilySpec(self.BASE, "A", 0.01, 0.9)
        with pytest.raises(ValueError):
            bisect(fam, 1e-13, self.CFG, classify=synthetic_classifier(0.3))

    def test_undecided_warns_and_moves_toward_blowup(self):
        def classify(spec, cfg):
            a = spec.params["A"]
            if 0.29 < a < 0.31:
                return Outcome.UNDECIDED
            return Outcome.BLOWUP if a > 0.3 else Outcome.DISPERSE
        fam = FamilySpec(self.BASE, "A", 0.01, 0.9)
        with pytest.warns(UserWarning):
            rec = bisect(fam, 1e-6, self.CFG, classify=classify)
        # conservative advance keeps p_star at or below the undecided band
        assert rec.p_star <= 0.31


class TestClassifyRun:
    def test_vacuum_disperses(self):
        spec = InitialDataSpec("gaussian", {"A": 0.0, "r0": 2.0, "s": 1.0})
        cfg = EvolutionConfig(grid=RadialGrid(8.0, 256), t_end=10.0)
        assert classify_run(spec, cfg) is Outcome.DISPERSE

    def test_small_gaussian_disperses(self):
        spec = InitialDataSpec("gaussian", {"A": 0.001, "r0": 2.0, "s": 1.0})
        cfg = EvolutionConfig(grid=RadialGrid(16.0, 512), t_end=30.0,
                              dissipation=0.02)
        assert classify_run(spec, cfg) is Outcome.DISPERSE

    def test_kink_blows_up(self):
        spec = InitialDataSpec("kink", {"s": 1.0})
        cfg = EvolutionConfig(grid=RadialGrid(16.0, 512), t_end=20.0)
        assert classify_run(spec, cfg) is Outcome.BLOWUP


class TestRecordTypes:
    def test_transient_fit_needs_five_samples(self):
        from wavemaps.criticality import TransientFit
        with pytest.raises(ValueError):
            TransientFit(6.3, ((0.0, 1.0),) * 4, 0.0)

    def test_bisection_record_fields(self):
        rec = BisectionRecord(((0.1, Outcome.DISPERSE, {}),), 0.1, 1e-10)
        assert rec.p_star == 0.1
