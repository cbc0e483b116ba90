#pragma once

// Plain-text interchange: CSV tables with a one-line header, JSON reports,
// and atomic file output. Numbers are written with 9 significant digits.

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nvodmr/error.hpp"
#include "nvodmr/readout_inference.hpp"
#include "nvodmr/resonator_design.hpp"

namespace nvodmr::io {

inline constexpr int significant_digits = 9;

inline std::string format_number(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", significant_digits, v);
    return buf;
}

/// Value as a JSON number rounded to 9 significant digits (null if not finite).
inline nlohmann::json json_number(double v) {
    if (!std::isfinite(v)) {
        return nullptr;
    }
    return std::strtod(format_number(v).c_str(), nullptr);
}

/// Pretty JSON with a trailing newline.
inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Two-column numeric table.
inline std::string write_xy_csv(std::string_view x_name, std::string_view y_name, const std::vector<double>& x,
                                const std::vector<double>& y) {
    if (x.size() != y.size()) {
        throw InvalidParameter("column lengths differ");
    }
    std::string out;
    out.append(x_name).append(",").append(y_name).append("\n");
    for (std::size_t k = 0; k < x.size(); ++k) {
        out.append(format_number(x[k])).append(",").append(format_number(y[k])).append("\n");
    }
    return out;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        fields.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return fields;
}

inline double parse_double(std::string_view text, std::size_t line) {
    const std::string s(text);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v)) {
        throw ParseError("expected a finite number, got '" + s + "'", line);
    }
    return v;
}

inline long long parse_integer(std::string_view text, std::size_t line) {
    const std::string s(text);
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
        throw ParseError("expected an integer, got '" + s + "'", line);
    }
    return v;
}

/// Reads a CSV with exactly the given header; each data row is passed to
/// on_row(fields, line_number). Blank lines are skipped.
template <class OnRow>
void read_csv(std::istream& in, std::string_view header, OnRow&& on_row) {
    std::string line;
    std::size_t line_no = 0;
    bool seen_header = false;
    const auto expected = split_fields(header);
    while (std::getline(in, line)) {
        ++line_no;
        const auto body = trim(line);
        if (body.empty()) {
            continue;
        }
        const auto fields = split_fields(body);
        if (!seen_header) {
            if (fields != expected) {
                throw ParseError("expected header '" + std::string(header) + "'", line_no);
            }
            seen_header = true;
            continue;
        }
        if (fields.size() != expected.size()) {
            throw ParseError("expected " + std::to_string(expected.size()) + " fields, got " +
                                 std::to_string(fields.size()),
                             line_no);
        }
        on_row(fields, line_no);
    }
    if (!seen_header) {
        throw ParseError("missing header '" + std::string(header) + "'", line_no + 1);
    }
}

}  // namespace detail

inline std::vector<std::pair<double, double>> read_xy_csv(std::istream& in, std::string_view header) {
    std::vector<std::pair<double, double>> rows;
    detail::read_csv(in, header, [&](const auto& f, std::size_t line) {
        rows.emplace_back(detail::parse_double(f[0], line), detail::parse_double(f[1], line));
    });
    return rows;
}

// PhotonTrace: header `bin_index,counts`; ground truth sidecar `bin_index,state`.

inline std::string write_trace_csv(const readout::PhotonTrace& trace) {
    std::string out = "bin_index,counts\n";
    for (std::size_t k = 0; k < trace.counts.size(); ++k) {
        out.append(std::to_string(k)).append(",").append(std::to_string(trace.counts[k])).append("\n");
    }
    return out;
}

inline std::string write_states_csv(const std::vector<readout::State>& states) {
    std::string out = "bin_index,state\n";
    for (std::size_t k = 0; k < states.size(); ++k) {
        out.append(std::to_string(k)).append(",").append(std::to_string(static_cast<int>(states[k]))).append("\n");
    }
    return out;
}

inline readout::PhotonTrace read_trace_csv(std::istream& in, double bin_duration) {
    nvodmr::detail::require_positive(bin_duration, "bin duration");
    readout::PhotonTrace trace;
    trace.bin_duration = bin_duration;
    detail::read_csv(in, "bin_index,counts", [&](const auto& f, std::size_t line) {
        const long long index = detail::parse_integer(f[0], line);
        if (index != static_cast<long long>(trace.counts.size())) {
            throw ParseError("bin_index " + std::to_string(index) + " out of sequence", line);
        }
        const long long c = detail::parse_integer(f[1], line);
        if (c < 0) {
            throw ParseError("negative photon count", line);
        }
        trace.counts.push_back(c);
    });
    return trace;
}

inline std::vector<readout::State> read_states_csv(std::istream& in) {
    std::vector<readout::State> states;
    detail::read_csv(in, "bin_index,state", [&](const auto& f, std::size_t line) {
        const long long index = detail::parse_integer(f[0], line);
        if (index != static_cast<long long>(states.size())) {
            throw ParseError("bin_index out of sequence", line);
        }
        const long long s = detail::parse_integer(f[1], line);
        if (s != 0 && s != 1) {
            throw ParseError("state must be 0 or 1", line);
        }
        states.push_back(static_cast<readout::State>(s));
    });
    return states;
}

inline std::string write_resonance_csv(const resonator::ResonanceCurve& curve) {
    std::vector<double> f, r;
    for (const auto& s : curve) {
        f.push_back(s.frequency);
        r.push_back(s.response);
    }
    return write_xy_csv("frequency_hz", "response", f, r);
}

inline resonator::ResonanceCurve read_resonance_csv(std::istream& in) {
    resonator::ResonanceCurve curve;
    for (const auto& [f, r] : read_xy_csv(in, "frequency_hz,response")) {
        curve.push_back({f, r});
    }
    return curve;
}

// ---------------------------------------------------------------------------
// JSON reports
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const readout::TwoStatePoissonHmm& m) {
    using nlohmann::json;
    return json{{"transition", json::array({json::array({json_number(m.transition[0][0]), json_number(m.transition[0][1])}),
                                            json::array({json_number(m.transition[1][0]), json_number(m.transition[1][1])})})},
                {"mean_high", json_number(m.means[0])},
                {"mean_low", json_number(m.means[1])},
                {"initial", json::array({json_number(m.initial[0]), json_number(m.initial[1])})}};
}

inline nlohmann::json to_json(const readout::HistogramFit& h) {
    return {{"weight_high", json_number(h.weight_high)}, {"weight_low", json_number(h.weight_low)},
            {"mean_high", json_number(h.mean_high)},     {"mean_low", json_number(h.mean_low)},
            {"g_statistic", json_number(h.g_statistic)}, {"separability", json_number(h.separability)},
            {"separable", h.separable},                  {"iterations", h.iterations}};
}

inline nlohmann::json to_json(const readout::DwellEstimate& d) {
    return {{"t1_s", json_number(d.t1)},
            {"ci68_low_s", json_number(d.ci_low)},
            {"ci68_high_s", json_number(d.ci_high)},
            {"segments", d.segments}};
}

inline nlohmann::json to_json(const std::vector<readout::Run>& runs) {
    auto arr = nlohmann::json::array();
    for (const auto& r : runs) {
        arr.push_back(nlohmann::json::array({static_cast<int>(r.state), r.length}));
    }
    return arr;
}

inline nlohmann::json to_json(const resonator::LorentzianFit& f) {
    return {{"f0_hz", json_number(f.f0)},
            {"q", json_number(f.q)},
            {"amplitude", json_number(f.amplitude)},
            {"residual", json_number(f.residual_norm)},
            {"iterations", f.iterations}};
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

/// Writes through a temporary sibling and renames, so a failed write never
/// leaves a partial file at `path`.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot open '" + tmp.string() + "' for writing");
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            out.close();
            std::filesystem::remove(tmp);
            throw Error("failed writing '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw Error("cannot move output into place at '" + path.string() + "': " + ec.message());
    }
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace nvodmr::io
