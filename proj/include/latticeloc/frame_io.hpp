#pragma once

#include <filesystem>
#include <vector>

#include "latticeloc/frame.hpp"

namespace latticeloc {

/// Binary PGM (P5). 16-bit samples are big-endian; values are rounded and
/// clipped to the sensor range on write.
void write_pgm(const std::filesystem::path& path, const Frame& frame);
Frame read_pgm(const std::filesystem::path& path);

/// Comma-separated matrix, one sensor row per line.
void write_csv_frame(const std::filesystem::path& path, const Frame& frame);
Frame read_csv_frame(const std::filesystem::path& path);

/// Sidecar `<stem>.meta` with pixel_scale_nm, exposure_s, sequence_id.
std::filesystem::path sidecar_path(const std::filesystem::path& frame_path);
void write_sidecar(const std::filesystem::path& frame_path, const Frame& frame);

/// Reads a .pgm or .csv frame and applies its sidecar if present.
/// frame_id defaults to the file stem, sequence_id to the frame_id.
Frame load_frame(const std::filesystem::path& path);

/// Frame files (.pgm, .csv) in `dir`, sorted by name.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

}  // namespace latticeloc
