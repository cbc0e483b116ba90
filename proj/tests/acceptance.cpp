// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "nvodmr/cli.hpp"
#include "oracles.hpp"

using namespace nvodmr;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
    std::printf("[%s] %2d %-28s %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
    if (!ok) {
        ++failures;
    }
}

/// Mean wall time per call in seconds.
double time_per_call(const std::function<void()>& f, int calls = 1000) {
    const auto start = std::chrono::steady_clock::now();
    for (int k = 0; k < calls; ++k) {
        f();
    }
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / calls;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

bool within(double v, double target, double rel) { return std::abs(v - target) <= rel * std::abs(target); }

volatile double sink = 0.0;

void loss_budget() {
    const double q = resonator::combine_quality_factors({192.0, 891.0, 204.0});
    const double t = time_per_call([] { sink = resonator::combine_quality_factors({192.0, 891.0, 204.0}); });
    report(1, "loss budget", std::abs(q - 89.0) <= 0.5 && t < 1e-3, fmt("Q = %.4f, %.2e s/call", q, t));
}

void skin_depth() {
    const double hi = resonator::skin_depth(constants::copper_resistivity, 75e9);
    const double lo = resonator::skin_depth(constants::copper_resistivity, 100e6);
    const double t = time_per_call([] { sink = resonator::skin_depth(constants::copper_resistivity, 75e9); });
    report(2, "skin depth", within(hi, 240e-9, 0.05) && within(lo, 6.5e-6, 0.05) && t < 1e-3,
           fmt("75 GHz: %.1f nm, 100 MHz: %.3f um, %.2e s/call", hi * 1e9, lo * 1e6, t));
}

void efficiency() {
    const auto mhz = [](double mt) { return resonator::rabi_efficiency_from_field(mt * 1e-3) / 1e6; };
    const bool ok = within(mhz(1.36), 27.0, 0.01) && within(mhz(1.68), 33.3, 0.01) && within(mhz(5.3), 105.0, 0.01) &&
                    within(mhz(0.87), 17.6, 0.03);
    const double t = time_per_call([] { sink = resonator::rabi_efficiency_from_field(1.36e-3); });
    report(3, "efficiency conversion", ok && t < 1e-3,
           fmt("%.3f %.3f %.3f %.3f MHz/sqrtW, %.2e s/call", mhz(1.36), mhz(1.68), mhz(5.3), mhz(0.87), t));
}

void cavity() {
    resonator::CylindricalCavity c;
    c.radius = 2.4e-3;
    const double f = resonator::cavity_frequency(c);
    bool invariant = true;
    for (double d : {0.1e-3, 0.48e-3, 1e-3, 2.4e-3, 4.8e-3, 10e-3}) {
        c.length = d;
        invariant = invariant && resonator::cavity_frequency(c) == f;
    }
    const double ratio = resonator::cavity_q_over_v_ratio(5.0, 1.0, 2.4e-3);
    report(4, "cavity", within(f, 76.2e9, 0.005) && invariant && within(ratio, 15.0 / 7.0, 1e-9),
           fmt("TM110 %.4f GHz, length-invariant %s, Q/V ratio %.12f", f / 1e9, invariant ? "yes" : "no", ratio));
}

void spin_model() {
    const spin::NvParameters p;
    const auto table = spin::transitions(p, spin::StaticField::axial(2.78), spin::TransitionKind::electron);
    const double lm = spin::find_electron_line(table, -1, -1).frequency;
    const double l0 = spin::find_electron_line(table, -1, 0).frequency;
    const double lp = spin::find_electron_line(table, -1, 1).frequency;
    const double s1 = std::abs(l0 - lm), s2 = std::abs(lp - l0);
    const bool manifold = std::abs(l0 - 75.05e9) <= 10e6;
    const bool spacing = std::abs(s1 - 2.16e6) <= 1e3 && std::abs(s2 - 2.16e6) <= 1e3;

    // Slope of E(+1) - E(-1) about 2.78 T, per m_I.
    const auto splitting = [&](double b, int mi) {
        const auto t = spin::transitions(p, spin::StaticField::axial(b), spin::TransitionKind::electron);
        // Line frequencies are |E(+-1) - E(0)| and E(-1) < E(0) here, so the sum is E(+1) - E(-1).
        return spin::find_electron_line(t, 1, mi).frequency + spin::find_electron_line(t, -1, mi).frequency;
    };
    double worst = 0.0;
    const double db = 1e-4;
    for (int mi : {-1, 0, 1}) {
        const double slope = (splitting(2.78 + db, mi) - splitting(2.78 - db, mi)) / (2.0 * db);  // Hz/T
        worst = std::max(worst, std::abs(slope / 56.06e9 - 1.0));
    }
    report(5, "spin model", manifold && spacing && worst <= 1e-6,
           fmt("0->-1 at %.4f GHz, spacings %.4f / %.4f kHz off 2.16 MHz, slope rel err %.2e", l0 / 1e9,
               (s1 - 2.16e6) / 1e3, (s2 - 2.16e6) / 1e3, worst));
}

void rabi_round_trip() {
    std::vector<double> t, y;
    std::mt19937_64 rng(906);
    std::normal_distribution<double> noise(0.0, 0.05);
    for (int k = 0; k <= 100; ++k) {
        t.push_back(5e-6 * k / 100.0);
        y.push_back(dynamics::rabi_population({0.0, 906e3, t.back()}) + noise(rng));
    }
    const auto fit = dynamics::fit_rabi_oscillation(t, y);
    const double r = dynamics::rabi_from_b1(spin::NvParameters{}, 1.36e-3);
    report(6, "rabi round trip", within(fit.frequency, 906e3, 0.01) && within(r, 26.96e6, 0.005),
           fmt("fit %.2f kHz, rabi_from_b1(1.36 mT) = %.4f MHz", fit.frequency / 1e3, r / 1e6));
}

void lorentzian() {
    const double f0 = 75e9;
    int worst_ok = 0, total = 0;
    double worst_q = 0.0, worst_f = 0.0;
    for (double q : {39.0, 48.0, 56.0}) {
        for (int rep = 0; rep < 100; ++rep) {
            std::mt19937_64 rng(static_cast<std::uint64_t>(q) * 1000 + rep);
            std::normal_distribution<double> g(0.0, 1.0);
            resonator::ResonanceCurve c;
            const double half = 3.0 * f0 / q;
            // 201-point sweep over f0 +- 3 f0/Q.
            for (int k = 0; k < 201; ++k) {
                const double f = f0 - half + 2.0 * half * k / 200.0;
                c.push_back({f, resonator::amplitude_lorentzian(f, f0, q, 1.0) * (1.0 + 0.05 * g(rng))});
            }
            ++total;
            try {
                const auto fit = resonator::fit_lorentzian(c);
                const double eq = std::abs(fit.q / q - 1.0), ef = std::abs(fit.f0 / f0 - 1.0);
                worst_q = std::max(worst_q, eq);
                worst_f = std::max(worst_f, ef);
                worst_ok += eq <= 0.10 && ef <= 5e-4;
            } catch (const FitFailure&) {
                worst_q = std::max(worst_q, 1.0);
            }
        }
    }
    report(7, "lorentzian fitting", worst_ok == total,
           fmt("%d/%d fits in tolerance, worst |dQ/Q| %.4f, worst |df0/f0| %.2e", worst_ok, total, worst_q, worst_f));
}

void hmm_oracle() {
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(8);
    double ll_err = 0.0, path_err = 0.0;
    int mismatched = 0, cases = 0;
    for (int model = 0; model < 100; ++model) {
        const auto h = oracle::random_hmm(rng);
        readout::TwoStatePoissonHmm m;
        m.transition = h.t;
        m.means = h.means;
        m.initial = h.initial;
        for (std::size_t n = 1; n <= 10; ++n) {
            const auto trace = readout::synthesize_trace(m, n, rng());
            const auto e = oracle::enumerate_paths(h, trace.counts);
            const auto post = readout::forward_backward(m, trace.counts);
            const auto path = readout::viterbi(m, trace.counts);
            ll_err = std::max(ll_err, std::abs(post.log_likelihood - e.log_likelihood) / std::max(1.0, std::abs(e.log_likelihood)));
            const double lp = readout::path_log_probability(m, trace.counts, path);
            path_err = std::max(path_err, std::abs(lp - e.best_log_probability) / std::max(1.0, std::abs(e.best_log_probability)));
            // Distinct paths only need to agree when the optimum is not (numerically) tied.
            if (path != e.best_path && e.best_log_probability - e.runner_up_log_probability > 1e-10) {
                ++mismatched;
            }
            ++cases;
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report(8, "hmm oracle equivalence", ll_err <= 1e-10 && path_err <= 1e-10 && mismatched == 0 && secs < 10.0,
           fmt("%d traces, max rel dlogL %.1e, max rel dlogP(path) %.1e, %d path mismatches, %.2f s", cases, ll_err,
               path_err, mismatched, secs));
}

void readout_round_trip() {
    const auto truth = readout::TwoStatePoissonHmm::symmetric(0.995, 120.0, 40.0);
    const auto trace = readout::synthesize_trace(truth, 100'000, 2015);
    const auto a = cli::analyze_trace(trace);
    const double true_t1 = trace.bin_duration / (1.0 - 0.995);
    const bool means = within(a.em.model.means[0], 120.0, 0.02) && within(a.em.model.means[1], 40.0, 0.02);
    bool ci = false;
    std::string dwell = "no dwell estimate";
    if (a.dwell) {
        const auto& hi = a.dwell->high;
        const auto& lo = a.dwell->low;
        ci = hi.ci_low <= true_t1 && true_t1 <= hi.ci_high && lo.ci_low <= true_t1 && true_t1 <= lo.ci_high;
        dwell = fmt("T1 high %.3f [%.3f, %.3f] s (%zu), low %.3f [%.3f, %.3f] s (%zu), true %.3f s", hi.t1, hi.ci_low,
                    hi.ci_high, hi.segments, lo.t1, lo.ci_low, lo.ci_high, lo.segments, true_t1);
    }
    const bool sep = a.histogram.separability > readout::separability_threshold;
    report(9, "readout round trip", means && ci && sep,
           fmt("means %.3f / %.3f, separability %.3f; ", a.em.model.means[0], a.em.model.means[1],
               a.histogram.separability) + dwell);
}

void flip_scaling() {
    const double s = dynamics::nuclear_flip_probability_scaling(0.65, 2.78);
    report(10, "flip-rate scaling", std::abs(s - 0.0547) <= 1e-4, fmt("%.6f (%.1fx suppression)", s, 1.0 / s));
}

void determinism() {
    const auto dir = std::filesystem::temp_directory_path() / "nvodmr_acceptance";
    std::filesystem::create_directories(dir);
    cli::RunOptions opt;
    opt.seed = 77;
    const auto run = [&](const std::string& tag) {
        const auto sim = cli::cmd_trace_simulate(config::Config::parse("n_bins=20000\n"), opt);
        const auto trace_path = dir / ("trace_" + tag + ".csv");
        io::write_file_atomic(trace_path, sim.primary);
        config::Config c;
        c.set("input_path", trace_path.string());
        const auto report_path = dir / ("report_" + tag + ".json");
        io::write_file_atomic(report_path, cli::cmd_trace_analyze(c, opt).primary);
        return std::make_pair(io::read_file(trace_path.string()), io::read_file(report_path.string()));
    };
    const auto first = run("a");
    const auto second = run("b");
    std::filesystem::remove_all(dir);
    report(11, "determinism", first.first == second.first && first.second == second.second,
           fmt("trace %zu bytes %s, report %zu bytes %s", first.first.size(),
               first.first == second.first ? "identical" : "DIFFER", first.second.size(),
               first.second == second.second ? "identical" : "DIFFER"));
}

}  // namespace

int main() {
    const std::function<void()> criteria[] = {loss_budget, skin_depth,         efficiency,  cavity,
                                              spin_model,  rabi_round_trip,    lorentzian,  hmm_oracle,
                                              readout_round_trip, flip_scaling, determinism};
    int id = 0;
    for (const auto& c : criteria) {
        ++id;
        try {
            c();
        } catch (const std::exception& e) {
            report(id, "exception", false, e.what());
        }
    }
    std::printf("%d of 11 criteria passed\n", 11 - failures);
    return failures == 0 ? 0 : 1;
}
