#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace latticeloc {

inline constexpr double kSensorMax = 65535.0;

/// Raw sensor image, row-major, values in counts.
struct Frame {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> values;
    double pixel_scale = 294.6;  // nm per pixel in the object plane
    std::string frame_id;
    std::string sequence_id;
    double exposure = 1.0;  // seconds

    Frame() = default;
    Frame(std::size_t w, std::size_t h, double fill = 0.0);

    double& at(std::size_t row, std::size_t col) { return values[row * width + col]; }
    double at(std::size_t row, std::size_t col) const { return values[row * width + col]; }

    /// Throws InvalidArgument if the grid shape or value range is broken.
    void validate() const;
};

/// Vertically binned 1D signal.
struct Profile {
    std::vector<double> intensities;
    std::ptrdiff_t origin = 0;  // horizontal pixel index of intensities[0]
    double pixel_scale = 294.6;

    std::size_t size() const { return intensities.size(); }
    /// Pixel coordinate of sample i.
    double x(std::size_t i) const { return static_cast<double>(origin) + static_cast<double>(i); }
};

struct NoiseEstimate {
    double baseline = 0.0;
    double sigma = 0.0;
};

/// Half-open pixel range [start, end) of a profile, in profile-local indices.
struct Roi {
    std::size_t start = 0;
    std::size_t end = 0;
    int roi_id = 0;

    std::size_t width() const { return end - start; }
    bool contains(double x) const {
        return x >= static_cast<double>(start) && x < static_cast<double>(end);
    }
};

struct RowWindow {
    std::size_t first = 0;
    std::size_t count = 0;
};

struct SegmentParams {
    double k_on = 4.0;
    double k_off = 1.5;
    std::size_t boxcar = 3;
    std::size_t padding = 6;
    std::size_t min_width = 9;
    /// Threshold floor in counts above baseline; governs noiseless (sigma = 0) input.
    double abs_floor = 1e-3;
};

Profile bin_vertical(const Frame& frame, std::optional<RowWindow> rows = std::nullopt);

/// Median / 1.4826 MAD of all samples outside `exclude`.
NoiseEstimate estimate_background(const Profile& profile, std::span<const Roi> exclude = {});

std::vector<Roi> segment(const Profile& profile, const NoiseEstimate& noise,
                         const SegmentParams& params = {});

/// Copy of the samples of `roi`, with origin moved to the ROI start.
Profile slice(const Profile& profile, const Roi& roi);

}  // namespace latticeloc
