#include "latticeloc/frame.hpp"

#include <algorithm>
#include <cmath>

#include "latticeloc/errors.hpp"

namespace latticeloc {

Frame::Frame(std::size_t w, std::size_t h, double fill) : width(w), height(h), values(w * h, fill) {}

void Frame::validate() const {
    if (width == 0 || height == 0) throw InvalidArgument("frame has zero extent");
    if (values.size() != width * height) throw InvalidArgument("frame grid size does not match width x height");
    for (double v : values) {
        if (!(v >= 0.0 && v <= kSensorMax)) throw InvalidArgument("frame value outside sensor range");
    }
}

Profile bin_vertical(const Frame& frame, std::optional<RowWindow> rows) {
    RowWindow window = rows.value_or(RowWindow{0, frame.height});
    if (window.count == 0) throw InvalidArgument("empty row window");
    if (window.first + window.count > frame.height) throw InvalidArgument("row window exceeds frame height");

    Profile profile;
    profile.pixel_scale = frame.pixel_scale;
    profile.intensities.assign(frame.width, 0.0);
    for (std::size_t r = window.first; r < window.first + window.count; ++r) {
        for (std::size_t c = 0; c < frame.width; ++c) profile.intensities[c] += frame.at(r, c);
    }
    return profile;
}

namespace {

double median_inplace(std::vector<double>& v) {
    const std::size_t n = v.size();
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    double hi = *mid;
    if (n % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

}  // namespace

NoiseEstimate estimate_background(const Profile& profile, std::span<const Roi> exclude) {
    std::vector<char> masked(profile.size(), 0);
    for (const Roi& roi : exclude) {
        for (std::size_t i = roi.start; i < std::min(roi.end, profile.size()); ++i) masked[i] = 1;
    }
    std::vector<double> samples;
    samples.reserve(profile.size());
    for (std::size_t i = 0; i < profile.size(); ++i) {
        if (!masked[i]) samples.push_back(profile.intensities[i]);
    }
    if (samples.size() < 20) {
        throw InsufficientBackground("only " + std::to_string(samples.size()) +
                                     " background samples (need 20)");
    }
    NoiseEstimate est;
    est.baseline = median_inplace(samples);
    for (double& s : samples) s = std::abs(s - est.baseline);
    est.sigma = 1.4826 * median_inplace(samples);
    return est;
}

std::vector<Roi> segment(const Profile& profile, const NoiseEstimate& noise, const SegmentParams& params) {
    const std::size_t n = profile.size();
    std::vector<Roi> rois;
    if (n == 0) return rois;

    // centered boxcar, shrinking at the edges
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(std::max<std::size_t>(params.boxcar, 1) / 2);
    std::vector<double> smooth(n);
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - half);
        std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1, i + half);
        double sum = 0.0;
        for (std::ptrdiff_t j = lo; j <= hi; ++j) sum += profile.intensities[static_cast<std::size_t>(j)];
        smooth[static_cast<std::size_t>(i)] = sum / static_cast<double>(hi - lo + 1);
    }

    const double on = noise.baseline + std::max(params.k_on * noise.sigma, params.abs_floor);
    const double off = noise.baseline + std::max(params.k_off * noise.sigma, params.abs_floor);

    std::vector<std::pair<std::ptrdiff_t, std::ptrdiff_t>> spans;  // inclusive-exclusive
    std::size_t i = 0;
    while (i < n) {
        if (smooth[i] <= on) {
            ++i;
            continue;
        }
        std::size_t run_end = i;
        while (run_end < n && smooth[run_end] > on) ++run_end;
        std::size_t lo = i;
        while (lo > 0 && smooth[lo - 1] > off) --lo;
        std::size_t hi = run_end;
        while (hi < n && smooth[hi] > off) ++hi;

        auto pad = static_cast<std::ptrdiff_t>(params.padding);
        std::ptrdiff_t s = static_cast<std::ptrdiff_t>(lo) - pad;
        std::ptrdiff_t e = static_cast<std::ptrdiff_t>(hi) + pad;
        auto min_w = static_cast<std::ptrdiff_t>(params.min_width);
        if (e - s < min_w) {
            std::ptrdiff_t grow = min_w - (e - s);
            s -= grow / 2;
            e += grow - grow / 2;
        }
        spans.emplace_back(std::max<std::ptrdiff_t>(s, 0), std::min<std::ptrdiff_t>(e, static_cast<std::ptrdiff_t>(n)));
        i = hi;
    }

    for (auto [s, e] : spans) {
        if (!rois.empty() && static_cast<std::ptrdiff_t>(rois.back().end) > s) {
            rois.back().end = std::max(rois.back().end, static_cast<std::size_t>(e));
        } else {
            rois.push_back(Roi{static_cast<std::size_t>(s), static_cast<std::size_t>(e), 0});
        }
    }
    for (std::size_t k = 0; k < rois.size(); ++k) rois[k].roi_id = static_cast<int>(k);
    return rois;
}

Profile slice(const Profile& profile, const Roi& roi) {
    if (roi.start >= roi.end || roi.end > profile.size()) throw InvalidArgument("ROI outside profile");
    Profile out;
    out.pixel_scale = profile.pixel_scale;
    out.origin = profile.origin + static_cast<std::ptrdiff_t>(roi.start);
    out.intensities.assign(profile.intensities.begin() + static_cast<std::ptrdiff_t>(roi.start),
                           profile.intensities.begin() + static_cast<std::ptrdiff_t>(roi.end));
    return out;
}

}  // namespace latticeloc
