#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "latticeloc/spike.hpp"

namespace latticeloc {

/// One JSON object per line: frame_id, sequence_id, roi_id, position_nm,
/// amplitude, reliable, diagnostics{...}.
std::string record_to_json(const AtomRecord& record);
AtomRecord record_from_json(const std::string& line);

void write_records(std::ostream& out, const std::vector<AtomRecord>& records);
std::vector<AtomRecord> read_records(std::istream& in);
std::vector<AtomRecord> read_records(const std::filesystem::path& path);

/// Ordering used for emitted record streams: (sequence_id, frame_id, roi_id, position).
void sort_records(std::vector<AtomRecord>& records);

}  // namespace latticeloc
