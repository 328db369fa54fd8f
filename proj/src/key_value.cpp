#include "latticeloc/key_value.hpp"

#include <fstream>
#include <istream>

#include "latticeloc/errors.hpp"

namespace latticeloc {

std::string trim(const std::string& s) {
    const char* ws = " \t\r\n";
    auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::optional<std::string> KeyValueFile::get(const std::string& key) const {
    auto it = entries.find(key);
    if (it == entries.end()) return std::nullopt;
    return it->second;
}

std::optional<double> KeyValueFile::get_double(const std::string& key) const {
    auto v = get(key);
    if (!v) return std::nullopt;
    try {
        std::size_t used = 0;
        double d = std::stod(*v, &used);
        if (used != v->size()) throw DataError("");
        return d;
    } catch (const std::exception&) {
        throw DataError("key '" + key + "': not a number: " + *v);
    }
}

std::optional<long long> KeyValueFile::get_int(const std::string& key) const {
    auto v = get(key);
    if (!v) return std::nullopt;
    try {
        std::size_t used = 0;
        long long d = std::stoll(*v, &used);
        if (used != v->size()) throw DataError("");
        return d;
    } catch (const std::exception&) {
        throw DataError("key '" + key + "': not an integer: " + *v);
    }
}

std::optional<bool> KeyValueFile::get_bool(const std::string& key) const {
    auto v = get(key);
    if (!v) return std::nullopt;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw DataError("key '" + key + "': not a boolean: " + *v);
}

KeyValueFile parse_key_value(std::istream& in) {
    KeyValueFile kv;
    std::string line;
    bool in_table = false;
    while (std::getline(in, line)) {
        if (in_table) {
            std::string t = trim(line);
            if (!t.empty() && t[0] != '#') kv.table.push_back(t);
            continue;
        }
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line == "[table]") {
            in_table = true;
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError("malformed key-value line: " + line);
        kv.entries[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

KeyValueFile read_key_value(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return parse_key_value(in);
}

}  // namespace latticeloc
