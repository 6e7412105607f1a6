#include "unfold/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace unfold {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

bool parse_int(const std::string& text, std::int64_t& out) {
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

bool parse_double(const std::string& text, double& out) {
  if (text.empty()) return false;
  // from_chars for double is available in libstdc++ 11.
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

const char* type_name(const ConfigValue& v) {
  switch (v.index()) {
    case 0: return "bool";
    case 1: return "int";
    case 2: return "float";
    case 3: return "string";
    default: return "list";
  }
}

}  // namespace

void Config::declare(const std::string& key, ConfigValue default_value) {
  values_[key] = std::move(default_value);
}

void Config::set(const std::string& key, const std::string& raw) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  const std::string text = trim(raw);
  auto fail = [&] {
    throw ConfigError("config key " + key + " expects " + type_name(it->second) +
                      ", got '" + text + "'");
  };
  ConfigValue& slot = it->second;
  switch (slot.index()) {
    case 0:
      if (text == "true" || text == "1") slot = true;
      else if (text == "false" || text == "0") slot = false;
      else fail();
      break;
    case 1: {
      std::int64_t v = 0;
      if (!parse_int(text, v)) fail();
      slot = v;
      break;
    }
    case 2: {
      double v = 0.0;
      if (!parse_double(text, v)) fail();
      slot = v;
      break;
    }
    case 3: {
      std::string v = text;
      if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
      slot = v;
      break;
    }
    default: {
      if (text.size() < 2 || text.front() != '[' || text.back() != ']') fail();
      std::vector<double> items;
      std::stringstream ss(text.substr(1, text.size() - 2));
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        double v = 0.0;
        if (!parse_double(item, v)) fail();
        items.push_back(v);
      }
      slot = std::move(items);
    }
  }
}

void Config::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void Config::merge_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      set_assignment(line);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void Config::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path.string());
}

const ConfigValue& Config::lookup(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key: " + key);
  return it->second;
}

bool Config::get_bool(const std::string& key) const {
  const auto& v = lookup(key);
  if (auto* b = std::get_if<bool>(&v)) return *b;
  throw ConfigError("config key " + key + " is not a bool");
}

std::int64_t Config::get_int(const std::string& key) const {
  const auto& v = lookup(key);
  if (auto* i = std::get_if<std::int64_t>(&v)) return *i;
  throw ConfigError("config key " + key + " is not an int");
}

double Config::get_double(const std::string& key) const {
  const auto& v = lookup(key);
  if (auto* d = std::get_if<double>(&v)) return *d;
  if (auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  throw ConfigError("config key " + key + " is not a float");
}

std::string Config::get_string(const std::string& key) const {
  const auto& v = lookup(key);
  if (auto* s = std::get_if<std::string>(&v)) return *s;
  throw ConfigError("config key " + key + " is not a string");
}

std::vector<double> Config::get_list(const std::string& key) const {
  const auto& v = lookup(key);
  if (auto* l = std::get_if<std::vector<double>>(&v)) return *l;
  throw ConfigError("config key " + key + " is not a list");
}

std::string Config::to_text() const {
  std::ostringstream out;
  for (const auto& [key, value] : values_) {
    out << key << " = ";
    switch (value.index()) {
      case 0: out << (std::get<bool>(value) ? "true" : "false"); break;
      case 1: out << std::get<std::int64_t>(value); break;
      case 2: out << format_double(std::get<double>(value)); break;
      case 3: out << '"' << std::get<std::string>(value) << '"'; break;
      default: {
        out << '[';
        const auto& items = std::get<std::vector<double>>(value);
        for (std::size_t i = 0; i < items.size(); ++i) {
          if (i) out << ", ";
          out << format_double(items[i]);
        }
        out << ']';
      }
    }
    out << '\n';
  }
  return out.str();
}

void Config::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file " + path.string());
  out << to_text();
}

}  // namespace unfold
