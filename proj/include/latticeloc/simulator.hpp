#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "latticeloc/frame.hpp"

namespace latticeloc {

/// Synthetic imaging and loading parameters. Defaults reproduce the
/// experimental imaging constants at a high-SNR operating point.
struct SimConfig {
    // imaging
    double pixel_scale = 294.6;   // nm/px, object plane
    double sigma_sp_hor = 810.0;  // nm, horizontal spot width
    double sigma_ver = 1000.0;    // nm, vertical spot width
    double site_nm = 432.95;      // lattice constant lambda/2
    std::size_t width = 256;
    std::size_t height = 20;
    double exposure = 1.0;  // s
    /// Object-plane position of lattice site 0 relative to pixel 0.
    double lattice_offset_nm = 128.0 * 294.6 + 100.0;

    // signal and sensor
    double ia = 3000.0;       // integrated counts per atom per exposure
    double baseline = 10.0;   // counts per pixel
    bool shot_noise = true;
    double readout_sigma = 2.0;

    // loading
    double loading_center_sites = 0.0;
    double loading_sigma_nm = 9.5 * 432.95;
    double mean_atoms = 4.0;
    std::optional<int> fixed_atoms;
    bool on_site_loss = true;
    double mid_exposure_loss_prob = 0.0;

    // per-frame motion
    double thermal_jitter_nm = 23.0;
    double drift_nm_per_s = 12.0;
    int frames_per_sequence = 3;

    void validate() const;
    double sigma_px() const { return sigma_sp_hor / pixel_scale; }
    /// Noiseless variant (no shot noise, readout, jitter or drift).
    SimConfig noiseless() const;
};

struct TruthAtom {
    long site = 0;
    double position_nm = 0.0;  // nominal, lattice offset included
    double survival = 1.0;     // fraction of the exposure the atom fluoresces in loss_frame
    int loss_frame = 0;        // frame during which a mid-exposure loss happens
    bool lost = false;

    double survival_in(int frame_index) const;
};

struct GroundTruth {
    std::string sequence_id;
    std::uint64_t seed = 0;
    std::vector<TruthAtom> atoms;
};

struct FrameAtomTruth {
    long site = 0;
    double position_nm = 0.0;  // as rendered, including jitter and drift
    double position_px = 0.0;
    double survival = 1.0;
};

struct FrameTruth {
    std::string frame_id;
    std::string sequence_id;
    int frame_index = 0;
    std::vector<FrameAtomTruth> atoms;
};

struct RenderedFrame {
    Frame frame;
    FrameTruth truth;
    std::vector<std::string> warnings;
};

using Rng = std::mt19937_64;

/// Atoms placed on the given sites with survival 1.
std::vector<TruthAtom> place_atoms(const std::vector<long>& sites, const SimConfig& config);

/// Removes atoms pairwise from every multiply occupied site.
void apply_on_site_loss(std::vector<TruthAtom>& atoms);

GroundTruth sample_loading(const SimConfig& config, Rng& rng);

/// Expected counts plus noise. Vertical spot weights are normalized over the
/// frame rows, so binning a noiseless render yields survival * I_a * L(x - xi)
/// plus height * baseline exactly.
RenderedFrame render_frame(const std::vector<TruthAtom>& atoms, const SimConfig& config, Rng& rng,
                           int frame_index = 0);

struct SequenceTruth {
    GroundTruth loading;
    std::vector<FrameTruth> frames;
};

struct Dataset {
    std::vector<Frame> frames;
    std::vector<SequenceTruth> sequences;
};

/// Per-sequence stream derived from the master seed.
std::uint64_t sequence_seed(std::uint64_t master, std::size_t sequence);

SequenceTruth simulate_sequence(const SimConfig& config, std::uint64_t master_seed, std::size_t sequence,
                                std::vector<Frame>* frames_out);

/// One loading per sequence, rendered frames_per_sequence times. Deterministic
/// in `seed` regardless of `jobs`.
Dataset run_campaign(const SimConfig& config, std::uint64_t seed, std::size_t sequences, unsigned jobs = 1);

/// PGM + sidecar per frame, manifest.json with the per-frame ground truth.
void write_dataset(const Dataset& data, const SimConfig& config, std::uint64_t seed,
                   const std::filesystem::path& dir);

void write_sim_config(const std::filesystem::path& path, const SimConfig& config);
SimConfig read_sim_config(const std::filesystem::path& path, SimConfig base = {});

}  // namespace latticeloc
