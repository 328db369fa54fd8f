// latticeloc command-line front-end.
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "latticeloc/commands.hpp"
#include "latticeloc/errors.hpp"

using namespace latticeloc;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

void add_segment_flags(CLI::App* cmd, SegmentParams& seg) {
    cmd->add_option("--k-on", seg.k_on, "ROI start threshold in noise sigmas")->capture_default_str();
    cmd->add_option("--k-off", seg.k_off, "ROI extension threshold in noise sigmas")->capture_default_str();
    cmd->add_option("--boxcar", seg.boxcar, "smoothing window, px")->capture_default_str();
    cmd->add_option("--padding", seg.padding, "ROI padding, px")->capture_default_str();
    cmd->add_option("--min-width", seg.min_width, "minimum ROI width, px")->capture_default_str();
}

void add_sim_flags(CLI::App* cmd, SimConfig& c, std::optional<int>& fixed_atoms) {
    cmd->add_option("--pixel-scale", c.pixel_scale, "nm per pixel")->capture_default_str();
    cmd->add_option("--sigma-sp-hor", c.sigma_sp_hor, "horizontal spot sigma, nm")->capture_default_str();
    cmd->add_option("--sigma-ver", c.sigma_ver, "vertical spot sigma, nm")->capture_default_str();
    cmd->add_option("--site-nm", c.site_nm, "lattice constant, nm")->capture_default_str();
    cmd->add_option("--width", c.width, "frame width, px")->capture_default_str();
    cmd->add_option("--height", c.height, "frame height, px")->capture_default_str();
    cmd->add_option("--exposure", c.exposure, "exposure, s")->capture_default_str();
    cmd->add_option("--lattice-offset-nm", c.lattice_offset_nm, "site 0 position, nm")->capture_default_str();
    cmd->add_option("--ia", c.ia, "integrated counts per atom")->capture_default_str();
    cmd->add_option("--baseline", c.baseline, "counts per pixel")->capture_default_str();
    cmd->add_option("--shot-noise", c.shot_noise, "Poisson noise on expected counts")->capture_default_str();
    cmd->add_option("--readout-sigma", c.readout_sigma, "Gaussian readout noise, counts")->capture_default_str();
    cmd->add_option("--loading-center-sites", c.loading_center_sites, "loading center, sites")->capture_default_str();
    cmd->add_option("--loading-sigma-nm", c.loading_sigma_nm, "loading width, nm")->capture_default_str();
    cmd->add_option("--mean-atoms", c.mean_atoms, "Poisson mean atom number")->capture_default_str();
    cmd->add_option("--fixed-atoms", fixed_atoms, "load exactly this many atoms");
    cmd->add_option("--on-site-loss", c.on_site_loss, "pairwise loss on shared sites")->capture_default_str();
    cmd->add_option("--mid-exposure-loss-prob", c.mid_exposure_loss_prob, "per-atom loss probability")
        ->capture_default_str();
    cmd->add_option("--thermal-jitter-nm", c.thermal_jitter_nm, "per-frame jitter, nm")->capture_default_str();
    cmd->add_option("--drift-nm-per-s", c.drift_nm_per_s, "drift rate, nm/s")->capture_default_str();
    cmd->add_option("--frames-per-sequence", c.frames_per_sequence, "frames per loading")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sub-diffraction atom localization in 1D lattice fluorescence images"};
    app.require_subcommand(1);
    const char* env_config = std::getenv("LATTICELOC_CONFIG");
    app.set_config("--config", env_config ? env_config : "", "key = value config file ([subcommand] sections)");
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "suppress diagnostics on stderr");

    CalibrateOptions cal;
    std::string form = "gaussian";
    auto* c_cal = app.add_subcommand("calibrate-lsf", "fit the line spread function from single-atom frames");
    c_cal->add_option("--frames", cal.frames_dir, "directory of frames")->required();
    c_cal->add_option("-o,--output", cal.output, "calibration file")->required();
    c_cal->add_option("--form", form, "gaussian or empirical")
        ->check(CLI::IsMember({"gaussian", "empirical"}))
        ->capture_default_str();
    c_cal->add_option("--table-spacing", cal.table_spacing, "empirical table spacing, px")->capture_default_str();
    add_segment_flags(c_cal, cal.seg);

    AnalyzeOptions an;
    auto* c_an = app.add_subcommand("analyze", "localize atoms in every frame");
    c_an->add_option("--frames", an.frames_dir, "directory of frames")->required();
    c_an->add_option("--calibration", an.calibration, "LSF calibration file")->required();
    c_an->add_option("-o,--output", an.output, "JSON-lines records")->required();
    c_an->add_option("--ia", an.ia, "override I_a, counts");
    c_an->add_option("--pixel-scale", an.pixel_scale, "override nm per pixel");
    c_an->add_option("--reliability-tol", an.reliability_tol, "amplitude tolerance")->capture_default_str();
    c_an->add_option("--mode-cutoff", an.mode_cutoff, "minimum |LSF transform|")->capture_default_str();
    c_an->add_option("--count-tolerance", an.count_tolerance, "count ambiguity threshold")->capture_default_str();
    c_an->add_option("-j,--jobs", an.jobs, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    add_segment_flags(c_an, an.seg);

    StatsOptions st;
    double lambda_nm = 0.0;
    auto* c_st = app.add_subcommand("stats", "distance histograms, F_n table, loading and pair models");
    c_st->add_option("--records", st.records, "JSON-lines records")->required();
    c_st->add_option("-o,--output", st.output_dir, "output directory")->required();
    c_st->add_option("--lambda-nm", lambda_nm, "lattice wavelength, nm (site = lambda/2)");
    c_st->add_option("--site-nm", st.lattice.site_nm, "lattice constant, nm")->capture_default_str();
    c_st->add_option("--frames-required", st.frames_required, "frames averaged per distance")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    c_st->add_option("--n-max", st.n_max, "largest site separation fitted")->capture_default_str();

    SimulateOptions sim;
    std::optional<int> fixed_atoms;
    auto* c_sim = app.add_subcommand("simulate", "render a synthetic campaign with ground truth");
    c_sim->add_option("-o,--output", sim.output_dir, "output directory")->required();
    c_sim->add_option("--seed", sim.seed, "master seed")->capture_default_str();
    c_sim->add_option("--sequences", sim.sequences, "number of loadings")->capture_default_str();
    c_sim->add_option("-j,--jobs", sim.jobs, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    add_sim_flags(c_sim, sim.config, fixed_atoms);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*c_cal) {
            cal.form = form == "empirical" ? LsfForm::empirical : LsfForm::gaussian;
            const auto report = cmd_calibrate_lsf(cal);
            if (!quiet) {
                for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
            }
            std::cout << "profiles " << report.profiles << "\n"
                      << "samples " << report.calib.sample_count << "\n"
                      << "residual_rms " << report.calib.residual_rms << "\n"
                      << "sigma_px " << report.calib.model.sigma_px() << "\n";
            if (report.calib.ia_counts) std::cout << "ia_counts " << *report.calib.ia_counts << "\n";
        } else if (*c_an) {
            const auto report = cmd_analyze(an);
            if (!quiet) {
                for (const auto& d : report.diagnostics) std::cerr << d << "\n";
            }
            std::cout << "frames " << report.frames << "\n"
                      << "skipped " << report.skipped << "\n"
                      << "records " << report.records.size() << "\n";
        } else if (*c_st) {
            if (lambda_nm > 0.0) st.lattice = LatticeCalib::from_wavelength(lambda_nm);
            const auto report = cmd_stats(st);
            std::cout << "single_distances " << report.single_samples << "\n"
                      << "averaged_distances " << report.averaged_samples << "\n";
        } else if (*c_sim) {
            sim.config.fixed_atoms = fixed_atoms;
            const auto data = cmd_simulate(sim);
            std::cout << "frames " << data.frames.size() << "\n";
        }
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}
