#include <fstream>
#include <sstream>

#include "gensym/harness/harness.hpp"

namespace gensym::harness {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string line_error(int line, const std::string& what) {
  return "config line " + std::to_string(line) + ": " + what;
}

}  // namespace

ConfigTable parse_config(std::string_view text) {
  ConfigTable table;
  std::string section;
  int lineNo = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineNo;

    // Strip a comment that is not inside quotes.
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line = line.substr(0, i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(line_error(lineNo, "unterminated section header"));
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw ConfigError(line_error(lineNo, "empty section name"));
      table[section];
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(line_error(lineNo, "expected key = value"));
    std::string key(trim(line.substr(0, eq)));
    std::string_view raw = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(line_error(lineNo, "missing key"));
    if (raw.empty()) throw ConfigError(line_error(lineNo, "missing value for " + key));
    std::string value;
    if (raw.front() == '"') {
      if (raw.size() < 2 || raw.back() != '"') throw ConfigError(line_error(lineNo, "unterminated string"));
      value = std::string(raw.substr(1, raw.size() - 2));
    } else {
      value = std::string(raw);
      if (value.find_first_of(" \t\"") != std::string::npos)
        throw ConfigError(line_error(lineNo, "unquoted value with spaces for " + key));
    }
    if (!table[section].emplace(key, value).second)
      throw ConfigError(line_error(lineNo, "duplicate key " + key));
  }
  return table;
}

ConfigTable load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

BackendProfile backend_profile(const ConfigTable& config, const std::string& name) {
  auto it = config.find("profile." + name);
  if (it == config.end()) throw ConfigError("no [profile." + name + "] section in config");
  BackendProfile p;
  p.name = name;
  p.chat.model = name;
  for (const auto& [key, value] : it->second) {
    auto as_int = [&] {
      try {
        std::size_t used = 0;
        int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
      } catch (const std::exception&) {
        throw ConfigError("profile " + name + ": " + key + " must be an integer");
      }
    };
    auto as_double = [&] {
      try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
      } catch (const std::exception&) {
        throw ConfigError("profile " + name + ": " + key + " must be a number");
      }
    };
    if (key == "base_url") p.chat.baseUrl = value;
    else if (key == "model") p.chat.model = value;
    else if (key == "api_key_env") p.chat.apiKeyEnv = value;
    else if (key == "concurrency") p.chat.concurrencyLimit = as_int();
    else if (key == "max_attempts") p.chat.maxAttempts = as_int();
    else if (key == "initial_backoff_ms") p.chat.initialBackoff = std::chrono::milliseconds(as_int());
    else if (key == "timeout_seconds") p.chat.timeoutSeconds = as_int();
    else if (key == "generator_temperature") p.generatorTemperature = as_double();
    else if (key == "critic_temperature") p.criticTemperature = as_double();
    else throw ConfigError("profile " + name + ": unknown key " + key);
  }
  if (p.chat.concurrencyLimit <= 0) throw ConfigError("profile " + name + ": concurrency must be positive");
  if (p.chat.maxAttempts <= 0) throw ConfigError("profile " + name + ": max_attempts must be positive");
  return p;
}

}  // namespace gensym::harness
