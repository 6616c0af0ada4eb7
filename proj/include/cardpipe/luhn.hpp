#pragma once

#include <string>
#include <string_view>

namespace cardpipe::ocr {

// Standard Luhn mod-10 checksum: from the rightmost digit, double every
// second digit, subtract 9 from doubled values above 9, sum must be 0 mod 10.
// Throws std::invalid_argument on empty input or non-digit characters.
bool luhn_valid(std::string_view digits);

// Unique digit d such that luhn_valid(prefix + d). prefix must be 14 or 15
// digits (building a 15- or 16-digit PAN).
char luhn_check_digit(std::string_view prefix);

// false instead of throwing on malformed input.
bool luhn_valid_nothrow(std::string_view digits);

}  // namespace cardpipe::ocr
