#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "latticeloc/frame.hpp"

namespace latticeloc {

enum class LsfForm { gaussian, empirical };

/// Area-normalized line spread function centered on 0, in pixel units.
///
/// The empirical form is a piecewise-linear interpolant of a table with
/// uniform spacing whose end nodes are zero, so its integral is exactly
/// `spacing * sum(values)` and its Fourier transform has a closed form.
class LsfModel {
public:
    static LsfModel gaussian(double sigma_px);
    /// Table nodes at first_offset + k * spacing. Negative values are clamped
    /// to 0, zero end nodes are appended, and the area is renormalized to 1.
    static LsfModel empirical(double first_offset, double spacing, std::vector<double> values);

    LsfForm form() const { return form_; }
    /// Width parameter of the gaussian form; RMS width of the table otherwise.
    double sigma_px() const { return sigma_; }
    double spacing() const { return spacing_; }
    double first_offset() const { return first_offset_; }
    const std::vector<double>& table() const { return values_; }

    double value(double x) const;
    double derivative(double x) const;
    double operator()(double x) const { return value(x); }
    /// Continuous Fourier transform at `nu` cycles/px; exactly 1 at nu = 0.
    std::complex<double> fourier(double nu) const;
    /// Offset beyond which the model is (numerically) zero.
    double support_halfwidth() const;

private:
    LsfForm form_ = LsfForm::gaussian;
    double sigma_ = 1.0;
    double first_offset_ = 0.0;
    double spacing_ = 0.0;
    std::vector<double> values_;
};

inline std::complex<double> lsf_fourier(const LsfModel& model, double nu) { return model.fourier(nu); }

struct StackedSample {
    double offset = 0.0;  // px relative to the fitted spot center
    double value = 0.0;   // amplitude-normalized excess signal
    double weight = 1.0;
};

struct StackOptions {
    double center_tol = 1e-3;  // px
    int max_iterations = 100;
};

/// Superimposes isolated single-spot profiles on a common center.
///
/// Centers start at the intensity centroid and are re-fit against a Gaussian
/// model of the current stack until no center moves by more than center_tol.
/// Throws DegenerateSpread for a profile without positive excess signal.
std::vector<StackedSample> stack_isolated(std::span<const Profile> profiles, std::span<const NoiseEstimate> noise,
                                          const StackOptions& options = {});

struct LsfFit {
    LsfModel model;
    double center = 0.0;  // fitted offset of the stack center, px
    double residual_rms = 0.0;
    std::size_t sample_count = 0;
};

LsfFit fit_lsf(std::span<const StackedSample> samples, LsfForm form = LsfForm::gaussian,
               double table_spacing = 0.25);

/// Persisted calibration: model plus the bookkeeping the analysis needs.
struct LsfCalibration {
    LsfModel model = LsfModel::gaussian(1.0);
    double residual_rms = 0.0;
    std::size_t sample_count = 0;
    std::optional<double> ia_counts;  // mean integrated single-atom signal
    std::optional<double> pixel_scale_nm;
    std::optional<double> sigma_uncertainty_nm;  // stored, never propagated
};

void write_lsf_calibration(const std::filesystem::path& path, const LsfCalibration& calib);
LsfCalibration read_lsf_calibration(const std::filesystem::path& path);

}  // namespace latticeloc
