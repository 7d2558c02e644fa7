#pragma once

// Flat key=value text blocks, shared by WFLD headers, WFMD checkpoints,
// scenario metadata, run configs and manifests.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace scalesplit {

class KeyValues {
public:
    KeyValues() = default;

    /// Parse "key=value" lines. Blank lines and lines starting with '#' are
    /// skipped; surrounding whitespace is trimmed. Throws FormatError.
    static KeyValues parse(std::string_view text);
    static KeyValues load(const std::string& path);

    /// Serialize in insertion-independent (sorted) order, one key per line.
    std::string to_string() const;

    bool contains(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    void set(const std::string& key, double value);
    void set(const std::string& key, std::int64_t value);
    void set(const std::string& key, const std::vector<double>& values);
    void erase(const std::string& key) { values_.erase(key); }
    /// Copy every entry of `other` over this one.
    void merge(const KeyValues& other);

    std::optional<std::string> get(const std::string& key) const;
    std::string require(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    double number(const std::string& key) const;
    double number_or(const std::string& key, double fallback) const;
    std::int64_t integer(const std::string& key) const;
    std::int64_t integer_or(const std::string& key, std::int64_t fallback) const;
    std::vector<double> numbers(const std::string& key) const;
    std::vector<std::string> strings(const std::string& key) const;

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

std::vector<std::string> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);
double parse_double(std::string_view text, const std::string& what);
std::int64_t parse_int(std::string_view text, const std::string& what);
/// Shortest text that parses back to exactly `value`.
std::string format_double(double value);
std::string join(const std::vector<std::string>& parts, char sep);

}  // namespace scalesplit
