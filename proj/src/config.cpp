#include "pod2c/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace pod2c {

namespace {

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& section, const std::string& key, const std::string& raw) {
  std::size_t consumed = 0;
  double v = 0.0;
  try {
    v = std::stod(raw, &consumed);
  } catch (const std::exception&) {
    throw ConfigError("value of " + section + "." + key + " is not a number: '" + raw + "'");
  }
  if (consumed != raw.size())
    throw ConfigError("trailing characters in " + section + "." + key + ": '" + raw + "'");
  return v;
}

}  // namespace

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_string(buffer.str());
}

Config Config::parse_string(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("unterminated section header", lineno);
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError("empty section name", lineno);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", lineno);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key", lineno);
    if (section.empty()) throw ConfigError("key '" + key + "' outside any section", lineno);
    cfg.sections_[section][key] = value;
  }
  return cfg;
}

void Config::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must look like section.key=value: " + assignment);
  const std::string path = trim(assignment.substr(0, eq));
  const auto dot = path.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 >= path.size())
    throw ConfigError("override must look like section.key=value: " + assignment);
  sections_[path.substr(0, dot)][path.substr(dot + 1)] = trim(assignment.substr(eq + 1));
}

bool Config::has(const std::string& section, const std::string& key) const {
  auto sit = sections_.find(section);
  return sit != sections_.end() && sit->second.count(key) > 0;
}

std::string Config::get_string(const std::string& section, const std::string& key,
                               const std::string& fallback) const {
  auto sit = sections_.find(section);
  if (sit == sections_.end()) return fallback;
  auto kit = sit->second.find(key);
  return kit == sit->second.end() ? fallback : kit->second;
}

double Config::get_double(const std::string& section, const std::string& key,
                          double fallback) const {
  if (!has(section, key)) return fallback;
  return parse_double(section, key, get_string(section, key, ""));
}

int Config::get_int(const std::string& section, const std::string& key, int fallback) const {
  const double v = get_double(section, key, fallback);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v)
    throw ConfigError("value of " + section + "." + key + " is not an integer");
  return i;
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  if (!has(section, key)) return fallback;
  std::string v = get_string(section, key, "");
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw ConfigError("value of " + section + "." + key + " is not a boolean: '" + v + "'");
}

std::vector<double> Config::get_list(const std::string& section, const std::string& key,
                                     const std::vector<double>& fallback) const {
  if (!has(section, key)) return fallback;
  std::istringstream in(get_string(section, key, ""));
  std::vector<double> out;
  std::string token;
  while (in >> token) {
    if (token == ",") continue;
    if (!token.empty() && token.back() == ',') token.pop_back();
    if (token.empty()) continue;
    out.push_back(parse_double(section, key, token));
  }
  return out;
}

}  // namespace pod2c
