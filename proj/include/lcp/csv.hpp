#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lcp::csv {

/// Whole-file CSV reader. Fields are views into the loaded buffer and stay
/// valid for the reader's lifetime. Quoted fields without embedded newlines
/// are supported.
class Reader {
 public:
  explicit Reader(const std::filesystem::path& path);
  static Reader from_string(std::string content, std::string name = "<memory>");

  const std::vector<std::string>& header() const { return header_; }
  /// Column position, or nullopt when the header lacks it.
  std::optional<std::size_t> column(std::string_view name) const;
  bool next(std::vector<std::string_view>& fields);
  /// 1-based line number of the row last returned by next().
  std::size_t line() const { return line_; }
  const std::string& name() const { return name_; }

 private:
  Reader() = default;
  void init();
  bool next_line(std::string_view& out);

  std::string name_;
  std::string buffer_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
  std::vector<std::string> header_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

void split(std::string_view line, char sep, std::vector<std::string_view>& out);

}  // namespace lcp::csv
