#pragma once

// WFLD binary field format:
//   "WFLD" | version byte 0x01 | u32 LE header length | UTF-8 key=value header
//   | mask, n_rows*n_cols bytes (0/1) | payload, f32 LE [time][var][row][col]
// Masked cells are written as quiet NaN.

#include "scalesplit/fields.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace scalesplit {

std::vector<unsigned char> encode_wfld(const FieldStack& stack);
FieldStack decode_wfld(std::string_view bytes);

void write_fieldstack(const FieldStack& stack, const std::string& path);
FieldStack read_fieldstack(const std::string& path);

/// Whole-file helpers shared by the binary formats.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

}  // namespace scalesplit
