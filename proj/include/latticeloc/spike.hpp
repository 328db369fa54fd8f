#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "latticeloc/frame.hpp"
#include "latticeloc/lsf.hpp"

namespace latticeloc {

/// Everything the estimator needs from calibration. Carries no lattice
/// constant: spike positions are estimated without knowledge of the lattice.
struct AnalysisCalib {
    double ia = 1.0;  // mean integrated single-atom signal, counts
    double reliability_tol = 0.20;
    LsfModel lsf = LsfModel::gaussian(810.0 / 294.6);
    double pixel_scale = 294.6;  // nm/px
    double mode_cutoff = 1e-3;
    double count_tolerance = 0.3;
    /// Keep a Fourier mode only if its deconvolved noise stays below
    /// (total signal) / min_moment_snr. Zero disables the noise rule.
    double min_moment_snr = 1.0;

    void validate() const;
};

struct Spike {
    double amplitude = 0.0;  // counts
    double position = 0.0;   // px, profile coordinates
};

struct SpikeFit {
    double a0 = 0.0;
    std::vector<Spike> atoms;  // sorted by position
    double residual_rms = 0.0;
    bool converged = false;
};

struct AtomCount {
    int n = 0;
    bool ambiguous = false;
    double total = 0.0;              // sum of excess signal, counts
    std::vector<double> cumulative;  // running sum of excess signal per sample
};

/// N = round(sum(I - a0) / I_a) over the ROI.
AtomCount count_atoms(const Profile& roi, const NoiseEstimate& noise, const AnalysisCalib& calib);

struct LocateOptions {
    double mode_cutoff = 1e-3;
    /// Per-sample noise std of the profile; enables the moment SNR rule when > 0.
    double noise_sigma = 0.0;
    double min_moment_snr = 1.0;
    /// Upper bound on the mode count M; 0 leaves it to the rules above.
    int max_modes = 0;
};

/// Number of usable Fourier modes (j = 0..M) for a window of `length` samples.
int usable_modes(std::size_t length, const LsfModel& lsf, double mode_cutoff);

/// Spike positions from trigonometric moments of the deconvolved ROI.
///
/// The baseline-subtracted ROI is transformed on a zero-padded power-of-two
/// window T, divided by the LSF transform for every mode above the cutoff,
/// and the resulting moment sequence m_j = sum_k a_k exp(-2 pi i j xi_k / T)
/// is decomposed by a matrix pencil (shift-invariant signal subspace of its
/// Hankel matrix). Root phases give the positions; magnitudes are ignored.
/// Returns positions in profile coordinates, sorted ascending.
std::vector<double> locate_spikes(const Profile& roi, double a0, int n, const LsfModel& lsf,
                                  const LocateOptions& options = {});

/// Linear least-squares amplitudes at fixed baseline and positions.
/// Throws IllConditioned naming the offending pair for near-duplicate positions.
std::vector<double> fit_amplitudes(const Profile& roi, double a0, std::span<const double> positions,
                                   const LsfModel& lsf);

/// Residuals r_i = I_i - a0 - sum_k a_k L(x_i - xi_k) of the spike model.
/// Parameter layout: [a0, a_1..a_N, xi_1..xi_N].
class SpikeObjective {
public:
    SpikeObjective(const Profile& roi, const LsfModel& lsf, int n);

    void residuals(const Eigen::VectorXd& params, Eigen::VectorXd& r, Eigen::MatrixXd* jacobian) const;
    double cost(const Eigen::VectorXd& params) const;
    /// Gradient of cost() = sum r_i^2.
    Eigen::VectorXd gradient(const Eigen::VectorXd& params) const;

    Eigen::VectorXd pack(const SpikeFit& fit) const;
    SpikeFit unpack(const Eigen::VectorXd& params) const;
    int atoms() const { return n_; }

private:
    const Profile& roi_;
    const LsfModel& lsf_;
    int n_;
};

struct RefineOptions {
    int max_iterations = 50;
    double cost_rtol = 1e-10;
    double step_tol_px = 1e-6;
};

/// Joint Levenberg-Marquardt refinement of a0, amplitudes and positions.
/// On divergence the initial fit comes back with converged = false.
SpikeFit refine(const Profile& roi, const SpikeFit& initial, const LsfModel& lsf, const RefineOptions& options = {});

/// flag_k = |a_k - I_a| / I_a < reliability_tol
std::vector<bool> check_reliability(const SpikeFit& fit, const AnalysisCalib& calib);

struct AtomRecord {
    std::string frame_id;
    std::string sequence_id;
    int roi_id = 0;
    double position_nm = 0.0;
    double amplitude = 0.0;
    bool reliable = false;
    // diagnostics
    double position_px = 0.0;
    int roi_atoms = 0;
    bool count_ambiguous = false;
    bool converged = false;
    double residual_rms = 0.0;
    double baseline = 0.0;
};

struct RoiFit {
    Roi roi;
    AtomCount count;
    SpikeFit fit;
};

struct FrameAnalysis {
    std::vector<AtomRecord> records;
    std::vector<RoiFit> rois;
    NoiseEstimate noise;
    std::vector<std::string> diagnostics;
};

/// Count, locate, fit, refine and filter every atom in one ROI profile.
SpikeFit estimate_roi(const Profile& roi, const NoiseEstimate& noise, const AnalysisCalib& calib, int n);

/// bin -> background -> segment -> count -> locate -> fit -> refine -> filter.
/// A failing ROI contributes no records and one diagnostic line.
FrameAnalysis analyze_frame(const Frame& frame, const AnalysisCalib& calib, const SegmentParams& seg = {});

}  // namespace latticeloc
