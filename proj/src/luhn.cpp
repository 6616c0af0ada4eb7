#include "cardpipe/luhn.hpp"

#include <stdexcept>

namespace cardpipe::ocr {

bool luhn_valid(std::string_view digits) {
    if (digits.empty()) throw std::invalid_argument("luhn_valid: empty input");
    int sum = 0;
    bool double_it = false;  // rightmost digit is not doubled
    for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
        const char ch = *it;
        if (ch < '0' || ch > '9')
            throw std::invalid_argument("luhn_valid: non-digit character in input");
        int d = ch - '0';
        if (double_it) {
            d *= 2;
            if (d > 9) d -= 9;
        }
        sum += d;
        double_it = !double_it;
    }
    return sum % 10 == 0;
}

bool luhn_valid_nothrow(std::string_view digits) {
    if (digits.empty()) return false;
    for (char c : digits)
        if (c < '0' || c > '9') return false;
    return luhn_valid(digits);
}

char luhn_check_digit(std::string_view prefix) {
    if (prefix.size() != 14 && prefix.size() != 15)
        throw std::invalid_argument("luhn_check_digit: prefix must be 14 or 15 digits");
    std::string pan(prefix);
    pan.push_back('0');
    for (char d = '0'; d <= '9'; ++d) {
        pan.back() = d;
        if (luhn_valid(pan)) return d;
    }
    // Unreachable: exactly one of the ten digits completes the checksum.
    throw std::logic_error("luhn_check_digit: no digit validates");
}

}  // namespace cardpipe::ocr
