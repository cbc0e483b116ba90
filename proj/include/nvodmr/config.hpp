#pragma once

// Flat key-value run configuration.
//
// Grammar, one entry per line:
//   line    := blank | comment | entry
//   comment := '#' anything
//   entry   := key ws* '=' ws* value [ws* '#' anything]
//   key     := [a-z0-9_]+
// Values are taken verbatim after trimming. Duplicate keys are rejected.
// Physical quantities carry their unit in the key, e.g. field_tesla.

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "nvodmr/error.hpp"

namespace nvodmr::config {

class Config {
public:
    static Config parse(std::istream& in) {
        Config cfg;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string_view body = line;
            if (const auto hash = body.find('#'); hash != std::string_view::npos) {
                body = body.substr(0, hash);
            }
            body = trim(body);
            if (body.empty()) {
                continue;
            }
            const auto eq = body.find('=');
            if (eq == std::string_view::npos) {
                throw ParseError("expected 'key = value'", line_no);
            }
            const std::string key(trim(body.substr(0, eq)));
            const std::string value(trim(body.substr(eq + 1)));
            if (!valid_key(key)) {
                throw ParseError("invalid key '" + key + "'", line_no);
            }
            if (!cfg.values_.emplace(key, value).second) {
                throw ParseError("duplicate key '" + key + "'", line_no);
            }
        }
        return cfg;
    }

    static Config parse(std::string_view text) {
        std::istringstream in{std::string(text)};
        return parse(in);
    }

    /// Applies a `key=value` override; later overrides replace earlier values.
    void set(std::string_view assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string_view::npos) {
            throw InvalidParameter("override must be key=value, got '" + std::string(assignment) + "'");
        }
        const std::string key(trim(assignment.substr(0, eq)));
        if (!valid_key(key)) {
            throw InvalidParameter("invalid key '" + key + "'");
        }
        values_[key] = std::string(trim(assignment.substr(eq + 1)));
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) != 0; }

    [[nodiscard]] std::optional<std::string> get(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    [[nodiscard]] std::string get_string(const std::string& key, const std::string& fallback) const {
        return get(key).value_or(fallback);
    }

    [[nodiscard]] std::optional<double> get_double(const std::string& key) const {
        const auto v = get(key);
        if (!v) {
            return std::nullopt;
        }
        char* end = nullptr;
        errno = 0;
        const double d = std::strtod(v->c_str(), &end);
        if (v->empty() || end != v->c_str() + v->size() || errno == ERANGE || !std::isfinite(d)) {
            throw InvalidParameter("key '" + key + "' expects a finite number, got '" + *v + "'");
        }
        return d;
    }

    [[nodiscard]] double get_double(const std::string& key, double fallback) const {
        return get_double(key).value_or(fallback);
    }

    [[nodiscard]] double require_double(const std::string& key) const {
        const auto d = get_double(key);
        if (!d) {
            throw InvalidParameter("missing required key '" + key + "'");
        }
        return *d;
    }

    [[nodiscard]] std::optional<long long> get_int(const std::string& key) const {
        const auto v = get(key);
        if (!v) {
            return std::nullopt;
        }
        char* end = nullptr;
        errno = 0;
        const long long i = std::strtoll(v->c_str(), &end, 10);
        if (v->empty() || end != v->c_str() + v->size() || errno == ERANGE) {
            throw InvalidParameter("key '" + key + "' expects an integer, got '" + *v + "'");
        }
        return i;
    }

    [[nodiscard]] long long get_int(const std::string& key, long long fallback) const {
        return get_int(key).value_or(fallback);
    }

    [[nodiscard]] bool get_bool(const std::string& key, bool fallback) const {
        const auto v = get(key);
        if (!v) {
            return fallback;
        }
        if (*v == "true" || *v == "1" || *v == "yes") {
            return true;
        }
        if (*v == "false" || *v == "0" || *v == "no") {
            return false;
        }
        throw InvalidParameter("key '" + key + "' expects true or false, got '" + *v + "'");
    }

    /// Rejects any key outside `allowed`.
    void require_known(const std::set<std::string>& allowed) const {
        for (const auto& [key, value] : values_) {
            if (allowed.count(key) == 0) {
                throw InvalidParameter("unknown config key '" + key + "'");
            }
        }
    }

    [[nodiscard]] const std::map<std::string, std::string>& values() const { return values_; }

private:
    static std::string_view trim(std::string_view s) {
        const auto first = s.find_first_not_of(" \t\r");
        if (first == std::string_view::npos) {
            return {};
        }
        return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
    }

    static bool valid_key(std::string_view key) {
        if (key.empty()) {
            return false;
        }
        for (char c : key) {
            if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_')) {
                return false;
            }
        }
        return true;
    }

    std::map<std::string, std::string> values_;
};

}  // namespace nvodmr::config
