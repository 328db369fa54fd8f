#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latticeloc/spike.hpp"

namespace latticeloc {

struct LatticeCalib {
    double lambda_nm = 865.9;
    double site_nm = 432.95;

    static LatticeCalib from_wavelength(double lambda_nm) { return {lambda_nm, 0.5 * lambda_nm}; }
    void validate() const;
};

struct DistanceSample {
    double distance_nm = 0.0;
    int n_sites = 0;
    int frames_averaged = 1;
    std::string pair_id;
    std::string sequence_id;
};

/// n = floor(d / site + 1/2)
int assign_site_separation(double distance_nm, const LatticeCalib& lattice);

/// Atoms of one frame that may enter pair statistics: every atom of their
/// ROI passed the reliability check and the ROI count was unambiguous.
/// Sorted by position.
std::vector<AtomRecord> retained_atoms(std::span<const AtomRecord> frame_records);

/// All N(N-1)/2 distances among the retained atoms of one frame.
std::vector<DistanceSample> pairwise_distances(std::span<const AtomRecord> frame_records,
                                               const LatticeCalib& lattice = {});

struct AveragedDistances {
    std::vector<DistanceSample> samples;
    /// Retained records of the used frames that belong to no complete chain.
    std::size_t unmatched_atoms = 0;
};

/// Matches atoms of the first `frames_required` frames of one sequence to the
/// first frame (nearest position within site/2, one-to-one) and averages the
/// per-frame pair distances of atoms found in every frame.
AveragedDistances match_and_average(std::span<const AtomRecord> sequence_records, int frames_required,
                                    const LatticeCalib& lattice = {});

/// F_n = erf((lambda/4) / (sqrt(2) sigma_n))
double reliability_Fn(double sigma_n, const LatticeCalib& lattice = {});

struct PeakFit {
    int n = 0;
    double center_nm = 0.0;
    double sigma_n = 0.0;  // meaningful only when populated
    double amplitude = 0.0;
    std::optional<double> F_n;
    std::size_t samples = 0;
    bool populated = false;
};

struct HistogramBin {
    double center_nm = 0.0;
    double count = 0.0;
    double model = 0.0;
};

struct HistogramFitOptions {
    bool free_centers = false;
    /// One width for all peaks instead of sigma_n per peak.
    bool shared_sigma = false;
    double bin_width_nm = 0.0;  // 0 -> site/4
    std::size_t min_peak_samples = 3;
    double min_sigma_nm = 5.0;
};

struct HistogramFit {
    std::vector<PeakFit> peaks;  // n = 0..n_max
    std::vector<HistogramBin> bins;
    double bin_width_nm = 0.0;
};

/// Least-squares fit of sum_n A_n exp(-(d - d_n)^2 / 2 sigma_n^2) to the
/// distance histogram, d_n = n * site unless free_centers is set. The model
/// is integrated over each bin, so coarse bins do not widen sigma_n.
HistogramFit fit_distance_histogram(std::span<const DistanceSample> samples, const LatticeCalib& lattice, int n_max,
                                    const HistogramFitOptions& options = {});

struct LoadingModel {
    double center_nm = 0.0;
    double sigma_P_nm = 1.0;
    double Q0 = 0.0;

    /// Normalized Gaussian P(x).
    double density(double x_nm) const;
};

/// Gaussian fit to the histogram of absolute single-atom positions (one bin per site).
LoadingModel fit_loading(std::span<const double> positions_nm, const LatticeCalib& lattice = {});

/// Q(d) = 2 Q0 integral P(x) P(x + d) dx, per nm.
double pair_model_Q(const LoadingModel& model, double d_nm);

struct PairDistributionFit {
    double sigma_d_nm = 0.0;        // width of the folded Gaussian of separations
    double amplitude_per_site = 0.0;
    LoadingModel model;             // sigma_P = sigma_d / sqrt(2), Q0 from the fitted amplitude
    double pair_count = 0.0;        // samples entering the fit
    std::vector<HistogramBin> sites;  // counts per site separation
};

/// Fits a zero-centered Gaussian to the per-site separation counts for
/// n >= min_site (the on-site gap is excluded).
PairDistributionFit fit_pair_distribution(std::span<const DistanceSample> samples, const LatticeCalib& lattice,
                                          int min_site = 1);

}  // namespace latticeloc
