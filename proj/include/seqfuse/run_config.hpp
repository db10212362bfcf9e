#pragma once

// Key/value run configuration shared by every CLI command. Keys are
// declared up front with defaults; anything else is rejected. A resolved
// copy is written next to each run's outputs so the run can be replayed
// bit-for-bit from `--config <out>/resolved_config.txt`.

#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "seqfuse/numeric.hpp"

namespace seqfuse {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class RunConfig {
 public:
  void declare(const std::string& key, const std::string& default_value) {
    if (index_.count(key)) throw UsageError("config key declared twice: " + key);
    index_[key] = entries_.size();
    entries_.push_back({key, default_value});
  }

  bool known(const std::string& key) const { return index_.count(key) != 0; }

  void set(const std::string& key, const std::string& value) {
    auto it = index_.find(key);
    if (it == index_.end()) throw UsageError("unknown config key: " + key);
    entries_[it->second].value = value;
  }

  void load_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw UsageError("cannot read config file " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const std::string trimmed = trim(line);
      if (trimmed.empty() || trimmed[0] == '#') continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      if (!known(key))
        throw UsageError(path.string() + ":" + std::to_string(lineno) + ": unknown config key: " +
                         key);
      set(key, value);
    }
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write resolved config " + path.string());
    for (const Entry& e : entries_) os << e.key << " = " << e.value << "\n";
    if (!os) throw DataError("write failed for " + path.string());
  }

  const std::string& str(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw UsageError("unknown config key: " + key);
    return entries_[it->second].value;
  }

  std::string required(const std::string& key) const {
    const std::string& v = str(key);
    if (v.empty()) throw UsageError("missing required config key: " + key);
    return v;
  }

  bool empty(const std::string& key) const { return str(key).empty(); }

  long long integer(const std::string& key) const {
    const std::string& v = str(key);
    std::size_t pos = 0;
    long long out = 0;
    try {
      out = std::stoll(v, &pos);
    } catch (const std::exception&) {
      throw UsageError("config key " + key + ": expected integer, got '" + v + "'");
    }
    if (pos != v.size()) throw UsageError("config key " + key + ": expected integer, got '" + v + "'");
    return out;
  }

  std::size_t count(const std::string& key) const {
    const long long v = integer(key);
    if (v < 0) throw UsageError("config key " + key + ": expected nonnegative integer");
    return static_cast<std::size_t>(v);
  }

  double real(const std::string& key) const {
    const std::string& v = str(key);
    std::size_t pos = 0;
    double out = 0.0;
    try {
      out = std::stod(v, &pos);
    } catch (const std::exception&) {
      throw UsageError("config key " + key + ": expected number, got '" + v + "'");
    }
    if (pos != v.size()) throw UsageError("config key " + key + ": expected number, got '" + v + "'");
    return out;
  }

  bool flag(const std::string& key) const {
    const std::string& v = str(key);
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw UsageError("config key " + key + ": expected 0/1/true/false, got '" + v + "'");
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      const std::string t = trim(item);
      if (!t.empty()) out.push_back(t);
    }
    return out;
  }

  std::vector<std::size_t> count_list(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const std::string& item : list(key)) {
      try {
        out.push_back(std::stoul(item));
      } catch (const std::exception&) {
        throw UsageError("config key " + key + ": expected comma-separated integers");
      }
    }
    return out;
  }

 private:
  struct Entry {
    std::string key;
    std::string value;
  };

  static std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
  }

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace seqfuse
