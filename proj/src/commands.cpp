#include "latticeloc/commands.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <thread>

#include <json.hpp>

#include "latticeloc/errors.hpp"
#include "latticeloc/frame_io.hpp"
#include "latticeloc/records_io.hpp"

namespace fs = std::filesystem;

namespace latticeloc {

CalibrateReport cmd_calibrate_lsf(const CalibrateOptions& options) {
    const auto paths = list_frames(options.frames_dir);
    if (paths.empty()) throw DataError("no frames in " + options.frames_dir.string());

    CalibrateReport report;
    std::vector<Profile> profiles;
    std::vector<NoiseEstimate> noise;
    double ia_sum = 0.0;
    double pixel_scale = 0.0;
    for (const fs::path& p : paths) {
        try {
            const Frame frame = load_frame(p);
            const Profile profile = bin_vertical(frame);
            NoiseEstimate est = estimate_background(profile);
            auto rois = segment(profile, est, options.seg);
            if (rois.empty()) continue;
            est = estimate_background(profile, rois);
            rois = segment(profile, est, options.seg);
            if (rois.size() != 1) continue;
            Profile sub = slice(profile, rois.front());
            double excess = 0.0;
            for (double v : sub.intensities) excess += v - est.baseline;
            if (!(excess > 0.0)) continue;
            ia_sum += excess;
            pixel_scale = frame.pixel_scale;
            profiles.push_back(std::move(sub));
            noise.push_back(est);
        } catch (const Error& e) {
            report.warnings.push_back(p.filename().string() + ": skipped: " + e.what());
        }
    }
    if (profiles.empty()) throw DataError("no isolated-atom ROIs found in " + options.frames_dir.string());
    if (profiles.size() < 10) {
        report.warnings.push_back("only " + std::to_string(profiles.size()) +
                                  " isolated profiles: low-confidence calibration");
    }

    const auto samples = stack_isolated(profiles, noise);
    const LsfFit fit = fit_lsf(samples, options.form, options.table_spacing);
    report.calib.model = fit.model;
    report.calib.residual_rms = fit.residual_rms;
    report.calib.sample_count = fit.sample_count;
    report.calib.ia_counts = ia_sum / static_cast<double>(profiles.size());
    report.calib.pixel_scale_nm = pixel_scale;
    report.profiles = profiles.size();
    if (!options.output.empty()) write_lsf_calibration(options.output, report.calib);
    return report;
}

AnalysisCalib load_analysis_calib(const AnalyzeOptions& options) {
    const LsfCalibration lsf = read_lsf_calibration(options.calibration);
    AnalysisCalib calib;
    calib.lsf = lsf.model;
    if (options.ia) {
        calib.ia = *options.ia;
    } else if (lsf.ia_counts) {
        calib.ia = *lsf.ia_counts;
    } else {
        throw DataError("calibration has no ia_counts; pass --ia");
    }
    calib.pixel_scale = options.pixel_scale.value_or(lsf.pixel_scale_nm.value_or(calib.pixel_scale));
    calib.reliability_tol = options.reliability_tol;
    calib.mode_cutoff = options.mode_cutoff;
    calib.count_tolerance = options.count_tolerance;
    calib.validate();
    return calib;
}

AnalyzeReport analyze_frames(const std::vector<Frame>& frames, const AnalysisCalib& calib, const SegmentParams& seg,
                             unsigned jobs) {
    std::vector<FrameAnalysis> results(frames.size());
    jobs = std::max(1u, jobs);
    auto work = [&](unsigned worker) {
        for (std::size_t i = worker; i < frames.size(); i += jobs) results[i] = analyze_frame(frames[i], calib, seg);
    };
    if (jobs == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < jobs; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }
    AnalyzeReport report;
    report.frames = frames.size();
    for (auto& r : results) {
        report.records.insert(report.records.end(), r.records.begin(), r.records.end());
        report.diagnostics.insert(report.diagnostics.end(), r.diagnostics.begin(), r.diagnostics.end());
    }
    sort_records(report.records);
    return report;
}

AnalyzeReport cmd_analyze(const AnalyzeOptions& options) {
    const AnalysisCalib calib = load_analysis_calib(options);
    const auto paths = list_frames(options.frames_dir);
    std::vector<Frame> frames;
    std::vector<std::string> load_errors;
    for (const fs::path& p : paths) {
        try {
            frames.push_back(load_frame(p));
        } catch (const Error& e) {
            load_errors.push_back(p.filename().string() + ": skipped: " + e.what());
        }
    }
    AnalyzeReport report = analyze_frames(frames, calib, options.seg, options.jobs);
    report.skipped = load_errors.size();
    report.diagnostics.insert(report.diagnostics.begin(), load_errors.begin(), load_errors.end());
    if (!options.output.empty()) {
        std::ofstream out(options.output);
        if (!out) throw DataError("cannot write " + options.output.string());
        write_records(out, report.records);
    }
    return report;
}

StatsReport compute_stats(const std::vector<AtomRecord>& records, const StatsOptions& options) {
    options.lattice.validate();
    if (records.size() < 2) throw DataError("too few records for statistics");

    std::map<std::string, std::vector<AtomRecord>> by_frame, by_sequence;
    for (const AtomRecord& r : records) {
        by_frame[r.frame_id].push_back(r);
        by_sequence[r.sequence_id].push_back(r);
    }

    StatsReport report;
    std::vector<DistanceSample> single;
    std::vector<double> singles_nm;
    for (const auto& [id, recs] : by_frame) {
        auto d = pairwise_distances(recs, options.lattice);
        single.insert(single.end(), d.begin(), d.end());
        const auto kept = retained_atoms(recs);
        if (kept.size() == 1 && recs.size() == 1) singles_nm.push_back(kept.front().position_nm);
    }
    if (single.size() < 10) throw DataError("too few records: " + std::to_string(single.size()) + " distances");
    report.single_samples = single.size();
    report.single = fit_distance_histogram(single, options.lattice, options.n_max);

    std::vector<DistanceSample> averaged;
    for (const auto& [id, recs] : by_sequence) {
        auto avg = match_and_average(recs, options.frames_required, options.lattice);
        averaged.insert(averaged.end(), avg.samples.begin(), avg.samples.end());
        report.unmatched_atoms += avg.unmatched_atoms;
    }
    report.averaged_samples = averaged.size();
    if (averaged.size() >= 10) {
        report.averaged = fit_distance_histogram(averaged, options.lattice, options.n_max);
        report.pairs = fit_pair_distribution(averaged, options.lattice);
    }
    if (singles_nm.size() >= 30) {
        report.loading = fit_loading(singles_nm, options.lattice);
        report.loading->Q0 = static_cast<double>(averaged.size());
    }
    return report;
}

namespace {

void write_histogram_csv(const fs::path& path, const HistogramFit& fit) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << std::setprecision(10) << "bin_center_nm,count,model_value\n";
    for (const auto& b : fit.bins) out << b.center_nm << "," << b.count << "," << b.model << "\n";
}

nlohmann::ordered_json peaks_json(const HistogramFit& fit) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const PeakFit& p : fit.peaks) {
        nlohmann::ordered_json j;
        j["n"] = p.n;
        j["center_nm"] = p.center_nm;
        j["samples"] = p.samples;
        j["amplitude"] = p.amplitude;
        if (p.populated) {
            j["sigma_nm"] = p.sigma_n;
            j["F_n"] = *p.F_n;
        } else {
            j["sigma_nm"] = nullptr;
            j["F_n"] = nullptr;
        }
        arr.push_back(j);
    }
    return arr;
}

}  // namespace

StatsReport cmd_stats(const StatsOptions& options) {
    const auto records = read_records(options.records);
    StatsReport report = compute_stats(records, options);
    fs::create_directories(options.output_dir);
    write_histogram_csv(options.output_dir / "histogram_single.csv", report.single);
    if (report.averaged) write_histogram_csv(options.output_dir / "histogram_averaged.csv", *report.averaged);

    nlohmann::ordered_json summary;
    summary["lattice"] = {{"lambda_nm", options.lattice.lambda_nm}, {"site_nm", options.lattice.site_nm}};
    summary["frames_required"] = options.frames_required;
    summary["single"] = {{"samples", report.single_samples}, {"peaks", peaks_json(report.single)}};
    if (report.averaged) {
        summary["averaged"] = {{"samples", report.averaged_samples},
                               {"unmatched_atoms", report.unmatched_atoms},
                               {"peaks", peaks_json(*report.averaged)}};
    } else {
        summary["averaged"] = nullptr;
    }
    if (report.loading) {
        summary["loading"] = {{"center_nm", report.loading->center_nm},
                              {"sigma_P_nm", report.loading->sigma_P_nm},
                              {"Q0", report.loading->Q0}};
    } else {
        summary["loading"] = nullptr;
    }
    if (report.pairs) {
        summary["pair_model"] = {{"sigma_d_nm", report.pairs->sigma_d_nm},
                                 {"sigma_P_nm", report.pairs->model.sigma_P_nm},
                                 {"Q0", report.pairs->model.Q0},
                                 {"Q_at_0_per_nm", pair_model_Q(report.pairs->model, 0.0)}};
        std::ofstream out(options.output_dir / "pair_sites.csv");
        out << std::setprecision(10) << "separation_nm,count,model_value,Q_per_site\n";
        for (const auto& b : report.pairs->sites) {
            out << b.center_nm << "," << b.count << "," << b.model << ","
                << pair_model_Q(report.pairs->model, b.center_nm) * options.lattice.site_nm << "\n";
        }
    } else {
        summary["pair_model"] = nullptr;
    }
    std::ofstream out(options.output_dir / "summary.json");
    if (!out) throw DataError("cannot write summary in " + options.output_dir.string());
    out << summary.dump(2) << "\n";
    return report;
}

Dataset cmd_simulate(const SimulateOptions& options) {
    Dataset data = run_campaign(options.config, options.seed, options.sequences, options.jobs);
    if (!options.output_dir.empty()) write_dataset(data, options.config, options.seed, options.output_dir);
    return data;
}

}  // namespace latticeloc
