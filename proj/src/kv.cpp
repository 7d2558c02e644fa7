#include "scalesplit/kv.hpp"

#include "scalesplit/error.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <fstream>
#include <sstream>

namespace scalesplit {

std::string_view trim(std::string_view text) {
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = text.find_last_not_of(" \t\r\n");
    return text.substr(first, last - first + 1);
}

std::vector<std::string> split(std::string_view text, char sep) {
    std::vector<std::string> parts;
    if (trim(text).empty()) return parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(sep, start);
        parts.emplace_back(trim(text.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

std::string join(const std::vector<std::string>& parts, char sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

double parse_double(std::string_view text, const std::string& what) {
    text = trim(text);
    double value = 0.0;
    if (text == "inf" || text == "+inf") return std::numeric_limits<double>::infinity();
    if (text == "-inf") return -std::numeric_limits<double>::infinity();
    const auto* begin = text.data();
    const auto* end = text.data() + text.size();
    if (!text.empty() && *begin == '+') ++begin;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || text.empty())
        fail(ErrorKind::Usage, "invalid number for " + what + ": '" + std::string(text) + "'");
    return value;
}

std::int64_t parse_int(std::string_view text, const std::string& what) {
    text = trim(text);
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
        fail(ErrorKind::Usage, "invalid integer for " + what + ": '" + std::string(text) + "'");
    return value;
}

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

KeyValues KeyValues::parse(std::string_view text) {
    KeyValues kv;
    std::size_t offset = 0;
    while (offset < text.size()) {
        auto end = text.find('\n', offset);
        if (end == std::string_view::npos) end = text.size();
        const auto line = trim(text.substr(offset, end - offset));
        if (!line.empty() && line.front() != '#') {
            const auto eq = line.find('=');
            if (eq == std::string_view::npos || eq == 0)
                throw FormatError(offset, "expected key=value, got '" + std::string(line) + "'");
            kv.values_[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
        }
        offset = end + 1;
    }
    return kv;
}

KeyValues KeyValues::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Path, "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string KeyValues::to_string() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
}

void KeyValues::set(const std::string& key, double value) { values_[key] = format_double(value); }
void KeyValues::set(const std::string& key, std::int64_t value) { values_[key] = std::to_string(value); }

void KeyValues::set(const std::string& key, const std::vector<double>& values) {
    std::vector<std::string> parts;
    parts.reserve(values.size());
    for (double v : values) parts.push_back(format_double(v));
    values_[key] = join(parts, ',');
}

void KeyValues::merge(const KeyValues& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::optional<std::string> KeyValues::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string KeyValues::require(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) fail(ErrorKind::Usage, "missing required key '" + key + "'");
    return it->second;
}

std::string KeyValues::get_or(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
}

double KeyValues::number(const std::string& key) const { return parse_double(require(key), key); }

double KeyValues::number_or(const std::string& key, double fallback) const {
    const auto v = get(key);
    return v ? parse_double(*v, key) : fallback;
}

std::int64_t KeyValues::integer(const std::string& key) const { return parse_int(require(key), key); }

std::int64_t KeyValues::integer_or(const std::string& key, std::int64_t fallback) const {
    const auto v = get(key);
    return v ? parse_int(*v, key) : fallback;
}

std::vector<double> KeyValues::numbers(const std::string& key) const {
    std::vector<double> out;
    for (const auto& part : split(require(key), ',')) out.push_back(parse_double(part, key));
    return out;
}

std::vector<std::string> KeyValues::strings(const std::string& key) const { return split(require(key), ','); }

}  // namespace scalesplit
