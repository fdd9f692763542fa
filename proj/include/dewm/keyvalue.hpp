#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace dewm {

// Ordered `key = value` text document. Lines starting with '#' are comments;
// blank lines are ignored. Keys keep their insertion order on output so the
// format diffs cleanly.
class KeyValueDoc {
 public:
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, const std::vector<double>& values);
  void set(const std::string& key, const std::vector<int>& values);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  void write(std::ostream& out, const std::string& header_comment = {}) const;
  static KeyValueDoc read(std::istream& in);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

std::string format_number(double v);
std::vector<double> parse_number_list(const std::string& text);
std::vector<int> parse_int_list(const std::string& text);

}  // namespace dewm
