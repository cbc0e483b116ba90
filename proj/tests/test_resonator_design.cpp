#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "nvodmr/resonator_design.hpp"

using namespace nvodmr;
using namespace nvodmr::resonator;

namespace {

ResonanceCurve synthetic_curve(double f0, double q, double amplitude, int points, double noise, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    ResonanceCurve c;
    const double half_span = 3.0 * f0 / q;
    for (int k = 0; k < points; ++k) {
        const double f = f0 - half_span + 2.0 * half_span * k / (points - 1);
        const double x = f / f0 - 1.0;
        const double y = amplitude / std::sqrt(1.0 + 4.0 * q * q * x * x);
        c.push_back({f, y * (1.0 + noise * g(rng))});
    }
    return c;
}

}  // namespace

TEST(BesselZeros, MatchTabulatedValues) {
    // Abramowitz & Stegun table 9.5.
    EXPECT_NEAR(bessel_zero(0, 1), 2.404825557695773, 1e-10);
    EXPECT_NEAR(bessel_zero(1, 1), 3.831705970207512, 1e-10);
    EXPECT_NEAR(bessel_zero(2, 1), 5.135622301840683, 1e-10);
    EXPECT_NEAR(bessel_zero(0, 2), 5.520078110286311, 1e-10);
    EXPECT_NEAR(bessel_prime_zero(0, 1), 3.831705970207512, 1e-10);
    EXPECT_NEAR(bessel_prime_zero(1, 1), 1.841183781340659, 1e-10);
    EXPECT_THROW(bessel_zero(0, 0), InvalidParameter);
    EXPECT_THROW(bessel_zero(11, 1), InvalidParameter);
}

TEST(CavityFrequency, Tm110TableGeometry) {
    CylindricalCavity c;  // 4.8 mm diameter, 1.0 mm length
    const double expected = 299792458.0 * 3.83171 / (2.0 * M_PI * 2.4e-3);
    EXPECT_NEAR(cavity_frequency(c), expected, 1e-5 * expected);
    EXPECT_NEAR(cavity_frequency(c), 76.2e9, 0.005 * 76.2e9);
}

TEST(CavityFrequency, LengthIndependentForTmNm0) {
    for (const char* name : {"TM010", "TM110", "TM210", "TM020"}) {
        CylindricalCavity c;
        c.mode = parse_mode(name);
        const double f = cavity_frequency(c);
        c.length *= 0.5;
        EXPECT_EQ(cavity_frequency(c), f) << name;
        c.length *= 7.3;
        EXPECT_EQ(cavity_frequency(c), f) << name;
    }
}

TEST(CavityFrequency, DoublingRadiusHalvesFrequency) {
    for (const char* name : {"TM010", "TM110", "TM120"}) {
        CylindricalCavity c;
        c.mode = parse_mode(name);
        const double f = cavity_frequency(c);
        c.radius *= 2.0;
        EXPECT_NEAR(cavity_frequency(c), 0.5 * f, 1e-12 * f) << name;
    }
}

TEST(CavityFrequency, Te011IncludesAxialTerm) {
    CylindricalCavity c;
    c.mode = parse_mode("TE011");
    c.radius = 2.4e-3;
    c.length = 4.8e-3;
    const double kr = 3.831705970207512 / c.radius;
    const double kz = M_PI / c.length;
    EXPECT_NEAR(cavity_frequency(c), 299792458.0 * std::hypot(kr, kz) / (2 * M_PI), 1e3);
}

TEST(CavityFrequency, UnsupportedModesRejected) {
    EXPECT_THROW(parse_mode("TE010"), InvalidParameter);
    EXPECT_THROW(parse_mode("TM100"), InvalidParameter);
    EXPECT_THROW(parse_mode("XX110"), InvalidParameter);
    EXPECT_THROW(parse_mode("TM11"), InvalidParameter);
    CylindricalCavity c;
    c.radius = -1.0;
    EXPECT_THROW(cavity_frequency(c), InvalidParameter);
}

TEST(QOverV, DesignAspectRatios) {
    EXPECT_NEAR(cavity_q_over_v_ratio(5.0, 1.0, 2.4e-3), 15.0 / 7.0, 1e-12);
    EXPECT_NEAR(cavity_q_over_v_ratio(3.0, 3.0, 1e-3), 1.0, 1e-15);
    EXPECT_THROW(cavity_q_over_v_ratio(0.0, 1.0, 1e-3), InvalidParameter);
}

TEST(QOverV, AgreesWithConductorQOverVolume) {
    // Second route: explicit Q_c and V at both lengths.
    for (double aspect1 : {0.5, 2.0, 5.0, 9.0}) {
        CylindricalCavity a, b;
        a.length = 2.0 * a.radius / aspect1;
        b.length = 2.0 * b.radius / 1.0;
        const double ratio = (cavity_conductor_q(a) / a.volume()) / (cavity_conductor_q(b) / b.volume());
        EXPECT_NEAR(cavity_q_over_v_ratio(aspect1, 1.0, a.radius), ratio, 1e-12 * ratio);
    }
}

TEST(QOverV, MonotoneInFirstAspect) {
    double prev = 0.0;
    for (double aspect = 0.1; aspect < 20.0; aspect += 0.1) {
        const double r = cavity_q_over_v_ratio(aspect, 1.0, 2.4e-3);
        EXPECT_GT(r, prev);
        prev = r;
    }
}

TEST(ConductorQ, Tm010MatchesTextbookForm) {
    CylindricalCavity c;
    c.mode = parse_mode("TM010");
    const double f = cavity_frequency(c);
    const double rs = std::sqrt(2 * M_PI * f * 4e-7 * M_PI * c.conductor_resistivity / 2.0);
    const double eta = 376.730313;
    EXPECT_NEAR(cavity_conductor_q(c), 2.404825557695773 * eta / (2.0 * rs * (1.0 + c.radius / c.length)), 1e-3);
    c.mode = parse_mode("TE011");
    EXPECT_THROW(cavity_conductor_q(c), InvalidParameter);
}

TEST(SkinDepth, CopperValues) {
    EXPECT_NEAR(skin_depth(1.68e-8, 75e9), 240e-9, 0.05 * 240e-9);
    EXPECT_NEAR(skin_depth(1.68e-8, 75e9), 238e-9, 1e-9);
    EXPECT_NEAR(skin_depth(1.68e-8, 100e6), 6.5e-6, 0.05 * 6.5e-6);
    EXPECT_THROW(skin_depth(0.0, 1e9), InvalidParameter);
    EXPECT_THROW(skin_depth(1e-8, -1.0), InvalidParameter);
}

TEST(SkinDepth, InverseSquareRootLaw) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> lf(6.0, 11.0);
    for (int k = 0; k < 200; ++k) {
        const double f1 = std::pow(10.0, lf(rng)), f2 = std::pow(10.0, lf(rng));
        EXPECT_NEAR(skin_depth(1.68e-8, f1) / skin_depth(1.68e-8, f2), std::sqrt(f2 / f1), 1e-12 * std::sqrt(f2 / f1));
    }
    EXPECT_NEAR(skin_depth(1.68e-8, 4e9), 0.5 * skin_depth(1.68e-8, 1e9), 1e-20);
}

TEST(Efficiency, ConversionPairs) {
    const auto to_mhz = [](double mt) { return rabi_efficiency_from_field(mt * 1e-3) / 1e6; };
    EXPECT_NEAR(to_mhz(1.36), 27.0, 0.01 * 27.0);
    EXPECT_NEAR(to_mhz(1.68), 33.3, 0.01 * 33.3);
    EXPECT_NEAR(to_mhz(5.3), 105.0, 0.01 * 105.0);
    EXPECT_NEAR(to_mhz(0.87), 17.6, 0.03 * 17.6);
    EXPECT_EQ(to_mhz(0.0), 0.0);
    EXPECT_THROW(rabi_efficiency_from_field(-1.0), InvalidParameter);
    EXPECT_THROW(field_efficiency_from_rabi(-1.0), InvalidParameter);
}

TEST(Efficiency, RoundTripIsIdentity) {
    std::mt19937_64 rng(37);
    std::uniform_real_distribution<double> c(0.0, 1e-2);
    for (int k = 0; k < 500; ++k) {
        const double x = c(rng);
        EXPECT_NEAR(field_efficiency_from_rabi(rabi_efficiency_from_field(x)), x, 1e-12 * x);
    }
}

TEST(Efficiency, FromMeasurement) {
    EXPECT_NEAR(efficiency_from_measurement(300e3, 0.16), 0.75e6, 1e-6);
    EXPECT_EQ(efficiency_from_measurement(0.0, 1.0), 0.0);
    EXPECT_NEAR(efficiency_from_measurement(1e6, 4.0), 0.5 * efficiency_from_measurement(1e6, 1.0), 1e-9);
    EXPECT_THROW(efficiency_from_measurement(1e6, 0.0), InvalidParameter);
}

TEST(LossBudget, Combination) {
    EXPECT_NEAR(combine_quality_factors({192.0, 891.0, 204.0}), 89.0, 0.5);
    EXPECT_DOUBLE_EQ(combine_quality_factors({std::nullopt, 250.0, std::nullopt}), 250.0);
    EXPECT_NEAR(combine_quality_factors({100.0, 100.0, std::nullopt}), 50.0, 1e-12);
    EXPECT_THROW(combine_quality_factors({}), InvalidParameter);
    EXPECT_THROW(combine_quality_factors({100.0, -1.0, std::nullopt}), InvalidParameter);
}

TEST(LossBudget, PropertyBelowSmallestChannel) {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> q(1.0, 5000.0);
    for (int k = 0; k < 500; ++k) {
        const double a = q(rng), b = q(rng), c = q(rng);
        const double total = combine_quality_factors({a, b, c});
        EXPECT_LT(total, std::min({a, b, c}));
    }
}

TEST(Cpw, HalfwaveEstimate) {
    const double f = cpw_halfwave_estimate(CpwResonator::wide_waist());
    EXPECT_NEAR(f, 299792458.0 / (2.0 * 1085e-6 * std::sqrt(1.95)), 1.0);
    // Within a factor 1.5 of the E-band design frequency.
    EXPECT_GT(f, 75e9 / 1.5);
    EXPECT_LT(f, 75e9 * 1.5);
}

TEST(Cpw, ScalingAndSuperstrate) {
    auto r = CpwResonator::wide_waist();
    const double f_air = cpw_halfwave_estimate(r);
    r.superstrate_constant = diamond_permittivity;
    EXPECT_LT(cpw_halfwave_estimate(r), f_air);
    r = CpwResonator::narrow_waist();
    const double f2 = cpw_halfwave_estimate(r);
    r.resonator_length *= 2.0;
    EXPECT_NEAR(cpw_halfwave_estimate(r), 0.5 * f2, 1e-6);
    r.dielectric_constant = 0.5;
    EXPECT_THROW(cpw_halfwave_estimate(r), InvalidParameter);
}

TEST(LorentzianFit, NoiselessRoundTrip) {
    const auto curve = synthetic_curve(76e9, 56.0, 0.75e6, 41, 0.0, 1);
    const auto fit = fit_lorentzian(curve);
    EXPECT_NEAR(fit.f0, 76e9, 1e-3 * 76e9);
    EXPECT_NEAR(fit.q, 56.0, 1e-3 * 56.0);
    EXPECT_NEAR(fit.amplitude, 0.75e6, 1e-3 * 0.75e6);
    EXPECT_LT(fit.residual_norm, 1e-3);
}

TEST(LorentzianFit, NoisyCurves) {
    for (double q : {39.0, 48.0}) {
        const auto fit = fit_lorentzian(synthetic_curve(75e9, q, 10e6, 61, 0.05, static_cast<std::uint64_t>(q)));
        EXPECT_NEAR(fit.q, q, 0.1 * q);
    }
}

TEST(LorentzianFit, ScaleEquivariant) {
    auto curve = synthetic_curve(74e9, 48.0, 3e6, 51, 0.03, 5);
    const auto a = fit_lorentzian(curve);
    for (auto& s : curve) {
        s.response *= 7.5;
    }
    const auto b = fit_lorentzian(curve);
    EXPECT_NEAR(b.amplitude, 7.5 * a.amplitude, 1e-6 * b.amplitude);
    EXPECT_NEAR(b.f0, a.f0, 1e-9 * a.f0);
    EXPECT_NEAR(b.q, a.q, 1e-6 * a.q);
}

TEST(LorentzianFit, Failures) {
    ResonanceCurve flat;
    for (int k = 0; k < 20; ++k) {
        flat.push_back({75e9 + k * 1e8, 1.0});
    }
    EXPECT_THROW(fit_lorentzian(flat), FitFailure);
    // Monotone tail of a resonance far outside the sampled window.
    ResonanceCurve tail;
    for (int k = 0; k < 20; ++k) {
        const double f = 70e9 + k * 1e8;
        tail.push_back({f, amplitude_lorentzian(f, 80e9, 56.0, 1.0)});
    }
    EXPECT_THROW(fit_lorentzian(tail), FitFailure);
    EXPECT_THROW(fit_lorentzian(ResonanceCurve(3, {1.0, 1.0})), FitFailure);
    ResonanceCurve unsorted = synthetic_curve(75e9, 50.0, 1.0, 11, 0.0, 1);
    std::swap(unsorted[2], unsorted[3]);
    EXPECT_THROW(fit_lorentzian(unsorted), FitFailure);
}
