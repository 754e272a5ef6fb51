#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "breathers/potential.hpp"

namespace breathers {

/// Plain-text "key = value" configuration; '#' starts a comment.
class Config {
public:
    Config() = default;
    static Config parse(std::istream& is);
    static Config load(const std::string& path);

    bool has(const std::string& key) const { return kv_.count(key) > 0; }
    void set(const std::string& key, const std::string& value) { kv_[key] = value; }

    std::string get(const std::string& key, const std::string& fallback) const;
    double get(const std::string& key, double fallback) const;
    int get(const std::string& key, int fallback) const;
    bool get(const std::string& key, bool fallback) const;
    std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback) const;

    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    std::map<std::string, std::string> kv_;
};

/// "8:1.0, 10:0.1" -> {(8, 1.0), (10, 0.1)}.
PotentialSpec parse_potential(const std::string& s, int min_degree);

}  // namespace breathers
