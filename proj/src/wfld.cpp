#include "scalesplit/wfld.hpp"

#include "scalesplit/error.hpp"
#include "scalesplit/kv.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace scalesplit {

namespace {

constexpr char kMagic[4] = {'W', 'F', 'L', 'D'};
constexpr unsigned char kVersion = 0x01;
constexpr std::uint64_t kMaxValues = std::uint64_t{1} << 36;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t get_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

std::vector<double> coords(const KeyValues& kv, const std::string& key, std::size_t expected, std::size_t offset) {
    std::vector<double> out;
    try {
        out = kv.numbers(key);
    } catch (const Error& e) {
        throw FormatError(offset, "bad header field '" + key + "': " + e.what());
    }
    if (out.size() != expected)
        throw FormatError(offset, "header field '" + key + "' has " + std::to_string(out.size()) +
                                      " entries, expected " + std::to_string(expected));
    return out;
}

std::uint64_t dim(const KeyValues& kv, const std::string& key, std::size_t offset, bool allow_zero) {
    std::int64_t v = 0;
    try {
        v = kv.integer(key);
    } catch (const Error& e) {
        throw FormatError(offset, "bad header field '" + key + "': " + e.what());
    }
    if (v < (allow_zero ? 0 : 1) || static_cast<std::uint64_t>(v) > kMaxValues)
        throw FormatError(offset, "dimension overflow in '" + key + "'");
    return static_cast<std::uint64_t>(v);
}

}  // namespace

std::vector<unsigned char> encode_wfld(const FieldStack& stack) {
    KeyValues kv;
    kv.set("n_times", static_cast<std::int64_t>(stack.n_times()));
    kv.set("n_vars", static_cast<std::int64_t>(stack.n_vars()));
    kv.set("n_rows", static_cast<std::int64_t>(stack.n_rows()));
    kv.set("n_cols", static_cast<std::int64_t>(stack.n_cols()));
    kv.set("variables", join(stack.variables(), ','));
    kv.set("units", join(stack.units(), ','));
    kv.set("lat", stack.grid().lat());
    kv.set("lon", stack.grid().lon());
    std::vector<std::string> times;
    for (Day d : stack.times()) times.push_back(std::to_string(d));
    kv.set("times", join(times, ','));
    const std::string header = kv.to_string();

    std::vector<unsigned char> out;
    out.reserve(9 + header.size() + stack.n_cells() + 4 * stack.values().size());
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(kVersion);
    put_u32(out, static_cast<std::uint32_t>(header.size()));
    out.insert(out.end(), header.begin(), header.end());
    for (auto m : stack.mask()) out.push_back(m ? 1 : 0);
    const std::size_t cells = stack.n_cells();
    for (std::size_t i = 0; i < stack.values().size(); ++i) {
        const float f = stack.valid(i % cells) ? static_cast<float>(stack.values()[i])
                                               : std::numeric_limits<float>::quiet_NaN();
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
    }
    return out;
}

FieldStack decode_wfld(std::string_view bytes) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::size_t n = bytes.size();
    if (n < 4 || std::memcmp(p, kMagic, 4) != 0) throw FormatError(0, "magic mismatch, not a WFLD file");
    if (n < 5) throw FormatError(4, "truncated before version byte");
    if (p[4] != kVersion) throw FormatError(4, "unsupported WFLD version " + std::to_string(p[4]));
    if (n < 9) throw FormatError(5, "truncated header length");
    const std::uint32_t header_len = get_u32(p + 5);
    if (n - 9 < header_len) throw FormatError(9, "truncated header");
    KeyValues kv;
    try {
        kv = KeyValues::parse(bytes.substr(9, header_len));
    } catch (const FormatError& e) {
        throw FormatError(9 + e.offset(), "malformed header: " + e.detail());
    }
    const std::size_t hdr = 9;
    const auto n_times = dim(kv, "n_times", hdr, true);
    const auto n_vars = dim(kv, "n_vars", hdr, false);
    const auto n_rows = dim(kv, "n_rows", hdr, false);
    const auto n_cols = dim(kv, "n_cols", hdr, false);
    const std::uint64_t cells = n_rows * n_cols;
    if (cells > kMaxValues || (n_times * n_vars) > kMaxValues / cells)
        throw FormatError(hdr, "dimension overflow: payload too large");

    auto variables = split(kv.get_or("variables", ""), ',');
    if (variables.size() != n_vars) throw FormatError(hdr, "variables list does not match n_vars");
    auto units = split(kv.get_or("units", ""), ',');
    if (units.size() != n_vars) throw FormatError(hdr, "units list does not match n_vars");
    auto lat = coords(kv, "lat", n_rows, hdr);
    auto lon = coords(kv, "lon", n_cols, hdr);
    std::vector<Day> times;
    for (const auto& s : split(kv.get_or("times", ""), ',')) {
        try {
            times.push_back(static_cast<Day>(parse_int(s, "times")));
        } catch (const Error&) {
            throw FormatError(hdr, "bad time entry '" + s + "'");
        }
    }
    if (times.size() != n_times) throw FormatError(hdr, "times list does not match n_times");

    GridSpec grid;
    try {
        grid = GridSpec(std::move(lat), std::move(lon));
    } catch (const Error& e) {
        throw FormatError(hdr, std::string("invalid grid: ") + e.what());
    }
    FieldStack stack(std::move(grid), std::move(variables), std::move(times));
    stack.set_units(std::move(units));

    std::size_t offset = hdr + header_len;
    if (n - offset < cells) throw FormatError(offset, "truncated mask");
    std::vector<std::uint8_t> mask(p + offset, p + offset + cells);
    for (std::size_t c = 0; c < cells; ++c)
        if (mask[c] > 1) throw FormatError(offset + c, "mask byte must be 0 or 1");
    offset += cells;

    const std::uint64_t count = n_times * n_vars * cells;
    if ((n - offset) / 4 < count)
        throw FormatError(n, "truncated payload: expected " + std::to_string(4 * count) + " bytes, found " +
                                 std::to_string(n - offset));
    if (n - offset != 4 * count) throw FormatError(offset + 4 * count, "trailing bytes after payload");
    auto& values = stack.values();
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t bits = get_u32(p + offset + 4 * i);
        float f;
        std::memcpy(&f, &bits, 4);
        values[i] = static_cast<double>(f);
    }
    stack.set_mask(std::move(mask));
    return stack;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Path, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Path, "cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::Path, "write failed for " + path);
}

void write_fieldstack(const FieldStack& stack, const std::string& path) {
    const auto bytes = encode_wfld(stack);
    write_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

FieldStack read_fieldstack(const std::string& path) {
    const auto bytes = read_file(path);
    try {
        return decode_wfld(bytes);
    } catch (const FormatError& e) {
        throw FormatError(e.offset(), path + ": " + e.detail());
    }
}

}  // namespace scalesplit
