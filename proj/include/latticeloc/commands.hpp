#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "latticeloc/analysis.hpp"
#include "latticeloc/lsf.hpp"
#include "latticeloc/simulator.hpp"
#include "latticeloc/spike.hpp"

namespace latticeloc {

struct CalibrateOptions {
    std::filesystem::path frames_dir;
    std::filesystem::path output;
    SegmentParams seg;
    LsfForm form = LsfForm::gaussian;
    double table_spacing = 0.25;
};

struct CalibrateReport {
    LsfCalibration calib;
    std::size_t profiles = 0;
    std::vector<std::string> warnings;
};

/// Stacks every frame that segments to exactly one ROI and fits the LSF.
/// Also records the mean integrated single-atom signal as I_a.
CalibrateReport cmd_calibrate_lsf(const CalibrateOptions& options);

struct AnalyzeOptions {
    std::filesystem::path frames_dir;
    std::filesystem::path calibration;
    std::filesystem::path output;  // JSON-lines; empty -> not written
    SegmentParams seg;
    std::optional<double> ia;  // overrides the calibration file
    std::optional<double> pixel_scale;
    double reliability_tol = 0.20;
    double mode_cutoff = 1e-3;
    double count_tolerance = 0.3;
    unsigned jobs = 1;
};

struct AnalyzeReport {
    std::vector<AtomRecord> records;
    std::vector<std::string> diagnostics;
    std::size_t frames = 0;
    std::size_t skipped = 0;
};

AnalysisCalib load_analysis_calib(const AnalyzeOptions& options);

/// Frame-parallel analysis with a deterministic merge order.
AnalyzeReport analyze_frames(const std::vector<Frame>& frames, const AnalysisCalib& calib, const SegmentParams& seg,
                             unsigned jobs = 1);
AnalyzeReport cmd_analyze(const AnalyzeOptions& options);

struct StatsOptions {
    std::filesystem::path records;
    std::filesystem::path output_dir;
    LatticeCalib lattice;
    int frames_required = 3;
    int n_max = 30;
};

struct StatsReport {
    HistogramFit single;
    std::optional<HistogramFit> averaged;
    std::optional<LoadingModel> loading;
    std::optional<PairDistributionFit> pairs;
    std::size_t single_samples = 0;
    std::size_t averaged_samples = 0;
    std::size_t unmatched_atoms = 0;
};

StatsReport compute_stats(const std::vector<AtomRecord>& records, const StatsOptions& options);
/// Writes histogram_single.csv, histogram_averaged.csv, pair_sites.csv and summary.json.
StatsReport cmd_stats(const StatsOptions& options);

struct SimulateOptions {
    SimConfig config;
    std::uint64_t seed = 1;
    std::size_t sequences = 10;
    std::filesystem::path output_dir;
    unsigned jobs = 1;
};

Dataset cmd_simulate(const SimulateOptions& options);

}  // namespace latticeloc
