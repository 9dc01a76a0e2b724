#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace gpupower::csv {

/// Splits one comma-delimited line. Double-quoted fields may contain commas;
/// a doubled quote inside a quoted field is a literal quote.
std::vector<std::string> split_line(std::string_view line);

/// Quotes a field only when it contains a comma, quote, or newline.
std::string escape(std::string_view field);

std::optional<double> parse_double(std::string_view text);
std::optional<std::int64_t> parse_int(std::string_view text);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

/// Line reader over a stream that strips CR and tracks 1-based line numbers.
class LineReader {
public:
    explicit LineReader(std::istream& in) : in_(in) {}

    bool next(std::string& line);
    std::size_t line_number() const { return line_number_; }

private:
    std::istream& in_;
    std::size_t line_number_ = 0;
};

/// Writes rows of already-formatted fields.
class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    void row(const std::vector<std::string>& fields);

private:
    std::ostream& out_;
};

}  // namespace gpupower::csv
