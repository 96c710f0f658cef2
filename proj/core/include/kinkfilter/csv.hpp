#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace kinkfilter::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    [[nodiscard]] int column(const std::string& name) const;  // -1 if absent
};

/// Reads a comma-separated file. No quoting support; the formats this
/// project exchanges are plain numeric tables.
Table read_file(const std::string& path);
Table read_string(const std::string& text, const std::string& origin = "<string>");

/// Formats a double with 15 significant digits, the project-wide convention
/// for emitted tables.
std::string format_double(double value);

double parse_double(const std::string& text, const std::string& context);

/// Writes rows of preformatted cells. A trailing newline ends the file.
void write_file(const std::string& path, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows);

/// FNV-1a 64-bit over a file's raw bytes; used to fingerprint inputs in run
/// manifests.
std::uint64_t fnv1a64_file(const std::string& path);

}  // namespace kinkfilter::csv
