#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace ddl {

/// Flat key=value configuration file: one pair per line, '#' comments,
/// duplicate and unknown keys rejected by name.
class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text);
    static KeyValueConfig parse_file(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& fallback) const;
    std::vector<std::uint64_t> get_uint_list(const std::string& key,
                                             const std::vector<std::uint64_t>& fallback) const;

    /// Throws naming the first key not in `allowed`.
    void require_known(const std::set<std::string>& allowed) const;

    /// Tracks every key this config was asked for, so commands can echo a
    /// fully resolved configuration into their manifest.
    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
    const std::string& raw(const std::string& key) const;
};

} // namespace ddl
