#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace latticeloc {

/// `key = value` text with `#` comments. Lines after a `[table]` marker are
/// kept verbatim for callers that store tabulated data.
struct KeyValueFile {
    std::map<std::string, std::string> entries;
    std::vector<std::string> table;

    std::optional<std::string> get(const std::string& key) const;
    std::optional<double> get_double(const std::string& key) const;
    std::optional<long long> get_int(const std::string& key) const;
    std::optional<bool> get_bool(const std::string& key) const;
};

KeyValueFile parse_key_value(std::istream& in);
KeyValueFile read_key_value(const std::filesystem::path& path);

std::string trim(const std::string& s);

}  // namespace latticeloc
