#pragma once

// Quantum-jump analysis of binned single-shot readout traces: a two-state
// Markov chain with Poisson photon emissions.
//
// State 0 is the high-fluorescence level (m_I = -1, 0), state 1 the low
// level (m_I = +1). All recursions are normalised per bin so traces of 10^6
// bins and more stay finite.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "nvodmr/error.hpp"

namespace nvodmr::readout {

using Count = std::int64_t;
using State = std::uint8_t;

inline constexpr State high_state = 0;
inline constexpr State low_state = 1;

struct PhotonTrace {
    std::vector<Count> counts;
    double bin_duration = 10e-3;              ///< [s]
    std::optional<std::vector<State>> states; ///< ground truth, synthetic traces only

    void validate() const {
        nvodmr::detail::require_positive(bin_duration, "bin duration");
        for (Count c : counts) {
            if (c < 0) {
                throw InvalidParameter("photon counts must be non-negative");
            }
        }
        if (states && states->size() != counts.size()) {
            throw InvalidParameter("state sequence length differs from counts");
        }
    }
};

struct TwoStatePoissonHmm {
    std::array<std::array<double, 2>, 2> transition{{{0.99, 0.01}, {0.01, 0.99}}};  ///< per bin, row-stochastic
    std::array<double, 2> means{120.0, 40.0};   ///< counts/bin, {high, low}
    std::array<double, 2> initial{0.5, 0.5};

    static TwoStatePoissonHmm symmetric(double stay, double mean_high, double mean_low) {
        TwoStatePoissonHmm m;
        m.transition = {{{stay, 1.0 - stay}, {1.0 - stay, stay}}};
        m.means = {mean_high, mean_low};
        return m;
    }

    [[nodiscard]] double stay(State s) const { return transition[s][s]; }

    /// Equal means are accepted: they describe a trace without contrast.
    void validate() const {
        for (const auto& row : transition) {
            for (double p : row) {
                nvodmr::detail::require_finite(p, "transition probability");
                if (p < 0.0 || p > 1.0) {
                    throw InvalidParameter("transition probabilities must lie in [0, 1]");
                }
            }
            if (std::abs(row[0] + row[1] - 1.0) > 1e-12) {
                throw InvalidParameter("transition matrix rows must sum to 1");
            }
        }
        nvodmr::detail::require_non_negative(means[low_state], "low emission mean");
        nvodmr::detail::require_finite(means[high_state], "high emission mean");
        if (means[high_state] < means[low_state] || !(means[high_state] > 0.0)) {
            throw InvalidParameter("need mean_high >= mean_low >= 0 and mean_high > 0");
        }
        for (double p : initial) {
            if (!(p >= 0.0 && p <= 1.0)) {
                throw InvalidParameter("initial probabilities must lie in [0, 1]");
            }
        }
        if (std::abs(initial[0] + initial[1] - 1.0) > 1e-12) {
            throw InvalidParameter("initial distribution must sum to 1");
        }
    }
};

/// log Poisson(k; lambda); lambda = 0 puts all mass on k = 0.
inline double poisson_log_pmf(Count k, double lambda) {
    if (lambda == 0.0) {
        return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    }
    const double kd = static_cast<double>(k);
    return kd * std::log(lambda) - lambda - std::lgamma(kd + 1.0);
}

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

inline PhotonTrace synthesize_trace(const TwoStatePoissonHmm& model, std::size_t n_bins, std::uint64_t seed,
                                    double bin_duration = 10e-3) {
    model.validate();
    if (n_bins < 1) {
        throw InvalidParameter("n_bins must be >= 1");
    }
    nvodmr::detail::require_positive(bin_duration, "bin duration");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    // A zero mean is never sampled (see below); the placeholder keeps the
    // distribution's precondition mean > 0.
    const auto make = [](double mean) { return std::poisson_distribution<Count>(mean > 0.0 ? mean : 1.0); };
    std::array<std::poisson_distribution<Count>, 2> emit{make(model.means[0]), make(model.means[1])};

    PhotonTrace trace;
    trace.bin_duration = bin_duration;
    trace.counts.resize(n_bins);
    std::vector<State> states(n_bins);
    State s = uniform(rng) < model.initial[0] ? high_state : low_state;
    for (std::size_t t = 0; t < n_bins; ++t) {
        if (t > 0) {
            s = uniform(rng) < model.transition[s][0] ? high_state : low_state;
        }
        states[t] = s;
        // Poisson(0) is the point mass at zero.
        trace.counts[t] = model.means[s] > 0.0 ? emit[s](rng) : 0;
    }
    trace.states = std::move(states);
    return trace;
}

// ---------------------------------------------------------------------------
// Forward-backward
// ---------------------------------------------------------------------------

struct Posterior {
    std::vector<std::array<double, 2>> state_probability;  ///< per bin, sums to 1
    double log_likelihood = 0.0;
};

namespace detail {

struct ForwardBackwardWork {
    Posterior posterior;
    std::array<std::array<double, 2>, 2> expected_transitions{};  ///< summed xi
};

inline ForwardBackwardWork forward_backward_impl(const TwoStatePoissonHmm& model, std::span<const Count> counts,
                                                 bool want_transitions) {
    const std::size_t n = counts.size();
    if (n == 0) {
        throw InvalidParameter("trace is empty");
    }
    // Per-bin emissions rescaled by their maximum; the offset goes into the
    // log-likelihood.
    std::vector<std::array<double, 2>> emission(n);
    std::vector<double> offset(n);
    for (std::size_t t = 0; t < n; ++t) {
        const double l0 = poisson_log_pmf(counts[t], model.means[0]);
        const double l1 = poisson_log_pmf(counts[t], model.means[1]);
        const double m = std::max(l0, l1);
        if (!std::isfinite(m)) {
            throw InvalidParameter("count at bin " + std::to_string(t) + " is impossible under both states");
        }
        offset[t] = m;
        emission[t] = {std::exp(l0 - m), std::exp(l1 - m)};
    }

    const auto& tr = model.transition;
    std::vector<std::array<double, 2>> alpha(n);
    std::vector<double> scale(n);
    double log_likelihood = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        std::array<double, 2> a;
        if (t == 0) {
            a = {model.initial[0] * emission[0][0], model.initial[1] * emission[0][1]};
        } else {
            const auto& p = alpha[t - 1];
            a = {(p[0] * tr[0][0] + p[1] * tr[1][0]) * emission[t][0],
                 (p[0] * tr[0][1] + p[1] * tr[1][1]) * emission[t][1]};
        }
        const double c = a[0] + a[1];
        if (!(c > 0.0)) {
            throw InvalidParameter("trace has zero likelihood under the model (bin " + std::to_string(t) + ")");
        }
        scale[t] = c;
        alpha[t] = {a[0] / c, a[1] / c};
        log_likelihood += std::log(c) + offset[t];
    }

    ForwardBackwardWork work;
    auto& post = work.posterior.state_probability;
    post.resize(n);
    std::array<double, 2> beta{1.0, 1.0};
    for (std::size_t t = n; t-- > 0;) {
        if (t + 1 < n) {
            const auto& e = emission[t + 1];
            const double c = scale[t + 1];
            const std::array<double, 2> next{e[0] * beta[0], e[1] * beta[1]};
            if (want_transitions) {
                for (int i = 0; i < 2; ++i) {
                    for (int j = 0; j < 2; ++j) {
                        work.expected_transitions[i][j] += alpha[t][i] * tr[i][j] * next[j] / c;
                    }
                }
            }
            beta = {(tr[0][0] * next[0] + tr[0][1] * next[1]) / c, (tr[1][0] * next[0] + tr[1][1] * next[1]) / c};
        }
        const double g0 = alpha[t][0] * beta[0];
        const double g1 = alpha[t][1] * beta[1];
        const double norm = g0 + g1;
        post[t] = {g0 / norm, g1 / norm};
    }
    work.posterior.log_likelihood = log_likelihood;
    return work;
}

}  // namespace detail

inline Posterior forward_backward(const TwoStatePoissonHmm& model, std::span<const Count> counts) {
    model.validate();
    return detail::forward_backward_impl(model, counts, false).posterior;
}

inline Posterior forward_backward(const TwoStatePoissonHmm& model, const PhotonTrace& trace) {
    return forward_backward(model, std::span<const Count>(trace.counts));
}

// ---------------------------------------------------------------------------
// Viterbi
// ---------------------------------------------------------------------------

/// Joint log-probability of a state path and the observed counts.
inline double path_log_probability(const TwoStatePoissonHmm& model, std::span<const Count> counts,
                                   std::span<const State> states) {
    if (counts.size() != states.size() || counts.empty()) {
        throw InvalidParameter("path and trace lengths differ");
    }
    double lp = std::log(model.initial[states[0]]) + poisson_log_pmf(counts[0], model.means[states[0]]);
    for (std::size_t t = 1; t < counts.size(); ++t) {
        lp += std::log(model.transition[states[t - 1]][states[t]]) +
              poisson_log_pmf(counts[t], model.means[states[t]]);
    }
    return lp;
}

/// Most likely state path. Exact ties resolve to the high-fluorescence state.
inline std::vector<State> viterbi(const TwoStatePoissonHmm& model, std::span<const Count> counts) {
    model.validate();
    const std::size_t n = counts.size();
    if (n == 0) {
        throw InvalidParameter("trace is empty");
    }
    std::array<std::array<double, 2>, 2> log_t;
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            log_t[i][j] = std::log(model.transition[i][j]);
        }
    }
    std::vector<std::array<State, 2>> back(n);
    std::array<double, 2> delta{std::log(model.initial[0]) + poisson_log_pmf(counts[0], model.means[0]),
                                std::log(model.initial[1]) + poisson_log_pmf(counts[0], model.means[1])};
    for (std::size_t t = 1; t < n; ++t) {
        std::array<double, 2> next;
        for (int j = 0; j < 2; ++j) {
            const double from_high = delta[0] + log_t[0][j];
            const double from_low = delta[1] + log_t[1][j];
            const bool pick_low = from_low > from_high;
            back[t][j] = pick_low ? low_state : high_state;
            next[j] = (pick_low ? from_low : from_high) + poisson_log_pmf(counts[t], model.means[j]);
        }
        delta = next;
    }
    if (!std::isfinite(std::max(delta[0], delta[1]))) {
        throw InvalidParameter("trace has zero likelihood under the model");
    }
    std::vector<State> path(n);
    path[n - 1] = delta[1] > delta[0] ? low_state : high_state;
    for (std::size_t t = n - 1; t > 0; --t) {
        path[t - 1] = back[t][path[t]];
    }
    return path;
}

inline std::vector<State> viterbi(const TwoStatePoissonHmm& model, const PhotonTrace& trace) {
    return viterbi(model, std::span<const Count>(trace.counts));
}

struct Run {
    State state = high_state;
    std::size_t length = 0;

    friend bool operator==(const Run&, const Run&) = default;
};

inline std::vector<Run> run_length_encode(std::span<const State> states) {
    std::vector<Run> runs;
    for (State s : states) {
        if (!runs.empty() && runs.back().state == s) {
            ++runs.back().length;
        } else {
            runs.push_back({s, 1});
        }
    }
    return runs;
}

// ---------------------------------------------------------------------------
// Parameter estimation (Baum-Welch)
// ---------------------------------------------------------------------------

/// Counts at the given quantile (nearest-rank).
inline double count_quantile(std::span<const Count> counts, double q) {
    if (counts.empty()) {
        throw InvalidParameter("trace is empty");
    }
    std::vector<Count> sorted(counts.begin(), counts.end());
    const auto k = static_cast<std::size_t>(std::clamp(q, 0.0, 1.0) * static_cast<double>(sorted.size() - 1));
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
    return static_cast<double>(sorted[k]);
}

namespace detail {

/// Separates equal starting means by one Poisson standard deviation.
inline std::array<double, 2> separate_means(double mean) {
    const double spread = std::max(std::sqrt(std::max(mean, 0.0)), 0.5);
    return {mean + spread, std::max(mean - spread, 0.0)};
}

inline bool means_degenerate(const std::array<double, 2>& m) {
    return !(m[0] - m[1] > 1e-9 * std::max(m[0], 1.0));
}

}  // namespace detail

/// 20th/80th percentile means, stay probability 0.99, uniform start.
inline TwoStatePoissonHmm default_initialization(std::span<const Count> counts) {
    return TwoStatePoissonHmm::symmetric(0.99, count_quantile(counts, 0.8), count_quantile(counts, 0.2));
}

struct EmOptions {
    int max_iterations = 500;
    double relative_tolerance = 1e-9;
    /// Allowed log-likelihood decrease per iteration, relative, from rounding.
    double monotonicity_slack = 1e-12;
};

struct EmResult {
    TwoStatePoissonHmm model;
    std::vector<double> log_likelihood;  ///< per iteration, starting with the initial model
    int iterations = 0;
    bool converged = false;
    bool monotone = true;            ///< log-likelihood never decreased
    bool restarted = false;          ///< degenerate start was perturbed
    bool boundary_stay = false;      ///< a stay probability reached 1
};

inline EmResult estimate_parameters(std::span<const Count> counts, TwoStatePoissonHmm init,
                                    const EmOptions& opt = {}) {
    if (counts.size() < 100) {
        throw InsufficientStatistics("parameter estimation needs >= 100 bins, got " + std::to_string(counts.size()));
    }
    EmResult result;
    if (detail::means_degenerate(init.means)) {
        init.means = detail::separate_means(0.5 * (init.means[0] + init.means[1]));
        result.restarted = true;
    }
    init.validate();

    TwoStatePoissonHmm model = init;
    for (int it = 0; it <= opt.max_iterations; ++it) {
        const auto work = detail::forward_backward_impl(model, counts, true);
        const double ll = work.posterior.log_likelihood;
        if (!result.log_likelihood.empty()) {
            const double prev = result.log_likelihood.back();
            if (ll < prev - opt.monotonicity_slack * std::abs(prev)) {
                result.monotone = false;
            }
            result.log_likelihood.push_back(ll);
            if ((ll - prev) <= opt.relative_tolerance * std::abs(prev)) {
                result.converged = true;
                break;
            }
        } else {
            result.log_likelihood.push_back(ll);
        }
        if (it == opt.max_iterations) {
            break;
        }

        // M step.
        const auto& post = work.posterior.state_probability;
        std::array<double, 2> occupancy{0.0, 0.0};
        std::array<double, 2> weighted{0.0, 0.0};
        std::array<double, 2> occupancy_head{0.0, 0.0};  // excludes the last bin
        for (std::size_t t = 0; t < post.size(); ++t) {
            for (int s = 0; s < 2; ++s) {
                occupancy[s] += post[t][s];
                weighted[s] += post[t][s] * static_cast<double>(counts[t]);
                if (t + 1 < post.size()) {
                    occupancy_head[s] += post[t][s];
                }
            }
        }
        TwoStatePoissonHmm next = model;
        next.initial = post.front();
        for (int s = 0; s < 2; ++s) {
            if (occupancy[s] > 0.0) {
                next.means[s] = weighted[s] / occupancy[s];
            }
            const double row = work.expected_transitions[s][0] + work.expected_transitions[s][1];
            if (occupancy_head[s] > 0.0 && row > 0.0) {
                next.transition[s][0] = work.expected_transitions[s][0] / row;
                next.transition[s][1] = 1.0 - next.transition[s][0];
            }
        }
        model = next;
        ++result.iterations;
    }

    if (model.means[0] < model.means[1]) {
        std::swap(model.means[0], model.means[1]);
        std::swap(model.initial[0], model.initial[1]);
        std::swap(model.transition[0][0], model.transition[1][1]);
        std::swap(model.transition[0][1], model.transition[1][0]);
    }
    result.boundary_stay = model.stay(0) > 1.0 - 1e-6 || model.stay(1) > 1.0 - 1e-6;
    result.model = model;
    return result;
}

inline EmResult estimate_parameters(std::span<const Count> counts, const EmOptions& opt = {}) {
    return estimate_parameters(counts, default_initialization(counts), opt);
}

// ---------------------------------------------------------------------------
// Histogram mixture fit
// ---------------------------------------------------------------------------

/// Separation |lambda_high - lambda_low| / sqrt(lambda_high) above which the
/// two count distributions are called separable.
inline constexpr double separability_threshold = 3.0;

struct HistogramFit {
    double weight_high = 0.5;
    double weight_low = 0.5;
    double mean_high = 0.0;
    double mean_low = 0.0;
    double g_statistic = 0.0;  ///< 2 sum o ln(o/e) over occupied histogram bins
    double separability = 0.0;
    bool separable = false;
    int iterations = 0;
};

inline HistogramFit fit_two_poissonians(std::span<const Count> counts, int max_iterations = 20000,
                                        double tolerance = 1e-13) {
    if (counts.size() < 100) {
        throw InsufficientStatistics("histogram fit needs >= 100 bins, got " + std::to_string(counts.size()));
    }
    Count max_count = 0;
    for (Count c : counts) {
        if (c < 0) {
            throw InvalidParameter("photon counts must be non-negative");
        }
        max_count = std::max(max_count, c);
    }
    std::vector<double> histogram(static_cast<std::size_t>(max_count) + 1, 0.0);
    for (Count c : counts) {
        histogram[static_cast<std::size_t>(c)] += 1.0;
    }
    const double total = static_cast<double>(counts.size());

    std::array<double, 2> mean{count_quantile(counts, 0.8), count_quantile(counts, 0.2)};
    if (detail::means_degenerate(mean)) {
        mean = detail::separate_means(mean[0]);
    }
    std::array<double, 2> weight{0.5, 0.5};

    HistogramFit fit;
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iterations; ++it) {
        std::array<double, 2> resp_sum{0.0, 0.0};
        std::array<double, 2> resp_k{0.0, 0.0};
        double ll = 0.0;
        for (std::size_t k = 0; k < histogram.size(); ++k) {
            if (histogram[k] == 0.0) {
                continue;
            }
            const auto kc = static_cast<Count>(k);
            const double l0 = std::log(weight[0]) + poisson_log_pmf(kc, mean[0]);
            const double l1 = std::log(weight[1]) + poisson_log_pmf(kc, mean[1]);
            const double m = std::max(l0, l1);
            const double e0 = std::exp(l0 - m);
            const double e1 = std::exp(l1 - m);
            const double norm = e0 + e1;
            ll += histogram[k] * (m + std::log(norm));
            const double r0 = e0 / norm;
            resp_sum[0] += histogram[k] * r0;
            resp_sum[1] += histogram[k] * (1.0 - r0);
            resp_k[0] += histogram[k] * r0 * static_cast<double>(k);
            resp_k[1] += histogram[k] * (1.0 - r0) * static_cast<double>(k);
        }
        for (int s = 0; s < 2; ++s) {
            weight[s] = resp_sum[s] / total;
            if (resp_sum[s] > 0.0) {
                mean[s] = resp_k[s] / resp_sum[s];
            }
        }
        // Keep both weights strictly inside (0, 1) so the logs stay finite.
        weight[0] = std::clamp(weight[0], 1e-300, 1.0);
        weight[1] = 1.0 - weight[0];
        if (weight[1] <= 0.0) {
            weight[1] = 1e-300;
        }
        fit.iterations = it + 1;
        if (std::isfinite(prev_ll) && ll - prev_ll <= tolerance * std::abs(prev_ll)) {
            break;
        }
        prev_ll = ll;
    }

    if (mean[0] < mean[1]) {
        std::swap(mean[0], mean[1]);
        std::swap(weight[0], weight[1]);
    }
    fit.weight_high = weight[0];
    fit.weight_low = 1.0 - weight[0];
    fit.mean_high = mean[0];
    fit.mean_low = mean[1];

    double g = 0.0;
    for (std::size_t k = 0; k < histogram.size(); ++k) {
        if (histogram[k] == 0.0) {
            continue;
        }
        const auto kc = static_cast<Count>(k);
        const double expected = total * (fit.weight_high * std::exp(poisson_log_pmf(kc, fit.mean_high)) +
                                         fit.weight_low * std::exp(poisson_log_pmf(kc, fit.mean_low)));
        g += 2.0 * histogram[k] * std::log(histogram[k] / expected);
    }
    fit.g_statistic = g;
    fit.separability = fit.mean_high > 0.0 ? (fit.mean_high - fit.mean_low) / std::sqrt(fit.mean_high) : 0.0;
    fit.separable = fit.separability > separability_threshold;
    return fit;
}

// ---------------------------------------------------------------------------
// Dwell times
// ---------------------------------------------------------------------------

struct DwellEstimate {
    double t1 = 0.0;        ///< mean dwell time [s]
    double ci_low = 0.0;    ///< 68.27 % interval [s]
    double ci_high = 0.0;
    std::size_t segments = 0;
};

struct DwellTimes {
    DwellEstimate high;
    DwellEstimate low;
};

inline constexpr std::size_t min_dwell_segments = 10;

namespace detail {

/// Exponential-mean estimate with the exact chi-square interval
/// [2S / chi2_{2n}(0.8413), 2S / chi2_{2n}(0.1587)], S the summed dwell time.
inline DwellEstimate exponential_mean(const std::vector<std::size_t>& lengths, double bin_duration) {
    DwellEstimate e;
    e.segments = lengths.size();
    double sum = 0.0;
    for (auto l : lengths) {
        sum += static_cast<double>(l) * bin_duration;
    }
    const double n = static_cast<double>(lengths.size());
    e.t1 = sum / n;
    const double tail = 0.5 * (1.0 - std::erf(1.0 / std::numbers::sqrt2));
    const boost::math::chi_squared dist(2.0 * n);
    e.ci_low = 2.0 * sum / boost::math::quantile(dist, 1.0 - tail);
    e.ci_high = 2.0 * sum / boost::math::quantile(dist, tail);
    return e;
}

}  // namespace detail

/// Mean dwell per state from a state path; the first and last segments are
/// truncated by the observation window and are dropped.
inline DwellTimes dwell_time_t1(std::span<const State> states, double bin_duration) {
    nvodmr::detail::require_positive(bin_duration, "bin duration");
    const auto runs = run_length_encode(states);
    std::array<std::vector<std::size_t>, 2> lengths;
    for (std::size_t k = 1; k + 1 < runs.size(); ++k) {
        lengths[runs[k].state].push_back(runs[k].length);
    }
    for (int s = 0; s < 2; ++s) {
        if (lengths[s].size() < min_dwell_segments) {
            throw InsufficientStatistics(std::string(s == 0 ? "high" : "low") + " state has " +
                                         std::to_string(lengths[s].size()) + " complete dwell segments, need " +
                                         std::to_string(min_dwell_segments));
        }
    }
    return {detail::exponential_mean(lengths[0], bin_duration), detail::exponential_mean(lengths[1], bin_duration)};
}

}  // namespace nvodmr::readout
