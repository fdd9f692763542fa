#include "dewm/keyvalue.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>

#include "dewm/error.hpp"

namespace dewm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& text) {
  const std::string s = trim(text);
  double v = 0.0;
  const char* first = s.data();
  if (!s.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw Error("malformed number '" + s + "'");
  return v;
}

}  // namespace

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  const std::string s = trim(text);
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(parse_number(s.substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (double v : parse_number_list(text)) {
    if (v != std::floor(v)) throw Error("expected an integer, got '" + format_number(v) + "'");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

void KeyValueDoc::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_)
    if (k == key) {
      v = value;
      return;
    }
  entries_.emplace_back(key, value);
}

void KeyValueDoc::set(const std::string& key, double value) { set(key, format_number(value)); }

void KeyValueDoc::set(const std::string& key, const std::vector<double>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ',';
    s += format_number(values[i]);
  }
  set(key, s);
}

void KeyValueDoc::set(const std::string& key, const std::vector<int>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(values[i]);
  }
  set(key, s);
}

bool KeyValueDoc::has(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return true;
  return false;
}

const std::string& KeyValueDoc::get(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  throw Error("missing key '" + key + "'");
}

double KeyValueDoc::get_double(const std::string& key) const { return parse_number(get(key)); }

int KeyValueDoc::get_int(const std::string& key) const {
  const auto v = parse_int_list(get(key));
  if (v.size() != 1) throw Error("key '" + key + "' must hold one integer");
  return v[0];
}

std::vector<double> KeyValueDoc::get_doubles(const std::string& key) const { return parse_number_list(get(key)); }

std::vector<int> KeyValueDoc::get_ints(const std::string& key) const { return parse_int_list(get(key)); }

void KeyValueDoc::write(std::ostream& out, const std::string& header_comment) const {
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
}

KeyValueDoc KeyValueDoc::read(std::istream& in) {
  KeyValueDoc doc;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw Error("line " + std::to_string(lineno) + ": expected 'key = value'");
    doc.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return doc;
}

}  // namespace dewm
