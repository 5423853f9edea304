#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace vuld {

/// Bad key, bad value or malformed config line. Maps to exit code 2.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ConfigKey {
    std::string key;
    std::string default_value;
    std::string doc;
};

/// Every recognised key with its default, in documentation order.
const std::vector<ConfigKey>& config_keys();

/// Flat `key = value` configuration. Only keys from config_keys() are
/// accepted; lookups fall back to the documented default.
class RunConfig {
   public:
    RunConfig();

    /// Parses `key = value` lines; `#` starts a comment.
    void apply_text(const std::string& text, const std::string& source = "config");
    void apply_file(const std::filesystem::path& path);
    void set(const std::string& key, const std::string& value);
    /// Applies a `key=value` override from the command line.
    void set_assignment(const std::string& assignment);

    const std::string& get(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<std::int64_t> get_ints(const std::string& key) const;
    std::vector<double> get_doubles(const std::string& key) const;

    /// All keys starting with `prefix`, as `key = value` lines.
    std::string to_text(const std::string& prefix = "") const;

   private:
    std::map<std::string, std::string> values_;
};

}  // namespace vuld
