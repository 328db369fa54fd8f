#include "latticeloc/records_io.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <tuple>

#include <json.hpp>

#include "latticeloc/errors.hpp"
#include "latticeloc/key_value.hpp"

namespace latticeloc {

std::string record_to_json(const AtomRecord& r) {
    nlohmann::ordered_json j;
    j["frame_id"] = r.frame_id;
    j["sequence_id"] = r.sequence_id;
    j["roi_id"] = r.roi_id;
    j["position_nm"] = r.position_nm;
    j["amplitude"] = r.amplitude;
    j["reliable"] = r.reliable;
    j["diagnostics"] = {{"position_px", r.position_px},
                        {"roi_atoms", r.roi_atoms},
                        {"count_ambiguous", r.count_ambiguous},
                        {"converged", r.converged},
                        {"residual_rms", r.residual_rms},
                        {"baseline", r.baseline}};
    return j.dump();
}

AtomRecord record_from_json(const std::string& line) {
    try {
        const auto j = nlohmann::json::parse(line);
        AtomRecord r;
        r.frame_id = j.at("frame_id").get<std::string>();
        r.sequence_id = j.at("sequence_id").get<std::string>();
        r.roi_id = j.at("roi_id").get<int>();
        r.position_nm = j.at("position_nm").get<double>();
        r.amplitude = j.at("amplitude").get<double>();
        r.reliable = j.at("reliable").get<bool>();
        if (j.contains("diagnostics")) {
            const auto& d = j["diagnostics"];
            r.position_px = d.value("position_px", 0.0);
            r.roi_atoms = d.value("roi_atoms", 0);
            r.count_ambiguous = d.value("count_ambiguous", false);
            r.converged = d.value("converged", false);
            r.residual_rms = d.value("residual_rms", 0.0);
            r.baseline = d.value("baseline", 0.0);
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad record line: ") + e.what());
    }
}

void write_records(std::ostream& out, const std::vector<AtomRecord>& records) {
    for (const AtomRecord& r : records) out << record_to_json(r) << "\n";
}

std::vector<AtomRecord> read_records(std::istream& in) {
    std::vector<AtomRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        out.push_back(record_from_json(line));
    }
    return out;
}

std::vector<AtomRecord> read_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return read_records(in);
}

void sort_records(std::vector<AtomRecord>& records) {
    std::stable_sort(records.begin(), records.end(), [](const AtomRecord& a, const AtomRecord& b) {
        return std::tie(a.sequence_id, a.frame_id, a.roi_id, a.position_nm) <
               std::tie(b.sequence_id, b.frame_id, b.roi_id, b.position_nm);
    });
}

}  // namespace latticeloc
