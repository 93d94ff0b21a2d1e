#pragma once

#include <string>
#include <vector>

namespace sip {

// Decimal formatting with 17 significant digits: enough to round-trip a
// double bit-exactly, so rewritten files compare byte-identical.
std::string format_sig17(double v);

// Write rows of preformatted cells with a header, LF line endings.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace sip
