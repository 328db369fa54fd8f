#include "latticeloc/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <thread>

#include <json.hpp>

#include "latticeloc/errors.hpp"
#include "latticeloc/frame_io.hpp"
#include "latticeloc/key_value.hpp"

namespace latticeloc {

void SimConfig::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument(std::string(name) + " must be positive");
    };
    positive(pixel_scale, "pixel_scale");
    positive(sigma_sp_hor, "sigma_sp_hor");
    positive(sigma_ver, "sigma_ver");
    positive(site_nm, "site_nm");
    positive(exposure, "exposure");
    positive(ia, "ia");
    positive(loading_sigma_nm, "loading_sigma_nm");
    if (width == 0 || height == 0) throw InvalidArgument("frame size must be positive");
    if (baseline < 0.0 || readout_sigma < 0.0 || thermal_jitter_nm < 0.0 || mean_atoms < 0.0) {
        throw InvalidArgument("noise, baseline and mean atom number must be non-negative");
    }
    if (!(mid_exposure_loss_prob >= 0.0 && mid_exposure_loss_prob <= 1.0)) {
        throw InvalidArgument("mid_exposure_loss_prob must be in [0,1]");
    }
    if (fixed_atoms && *fixed_atoms < 0) throw InvalidArgument("fixed_atoms must be non-negative");
    if (frames_per_sequence < 1) throw InvalidArgument("frames_per_sequence must be >= 1");
}

SimConfig SimConfig::noiseless() const {
    SimConfig c = *this;
    c.shot_noise = false;
    c.readout_sigma = 0.0;
    c.thermal_jitter_nm = 0.0;
    c.drift_nm_per_s = 0.0;
    return c;
}

double TruthAtom::survival_in(int frame_index) const {
    if (!lost || frame_index < loss_frame) return 1.0;
    return frame_index == loss_frame ? survival : 0.0;
}

std::vector<TruthAtom> place_atoms(const std::vector<long>& sites, const SimConfig& config) {
    std::vector<TruthAtom> atoms;
    atoms.reserve(sites.size());
    for (long s : sites) {
        atoms.push_back({s, config.lattice_offset_nm + static_cast<double>(s) * config.site_nm, 1.0, 0, false});
    }
    std::stable_sort(atoms.begin(), atoms.end(), [](const TruthAtom& a, const TruthAtom& b) { return a.site < b.site; });
    return atoms;
}

void apply_on_site_loss(std::vector<TruthAtom>& atoms) {
    std::map<long, int> occupancy;
    for (const TruthAtom& a : atoms) ++occupancy[a.site];
    std::vector<TruthAtom> kept;
    std::map<long, int> taken;
    for (const TruthAtom& a : atoms) {
        const int keep = occupancy[a.site] % 2;
        if (taken[a.site] < keep) {
            kept.push_back(a);
            ++taken[a.site];
        }
    }
    atoms = std::move(kept);
}

GroundTruth sample_loading(const SimConfig& config, Rng& rng) {
    config.validate();
    GroundTruth truth;
    int count = 0;
    if (config.fixed_atoms) {
        count = *config.fixed_atoms;
    } else if (config.mean_atoms > 0.0) {
        count = static_cast<int>(std::poisson_distribution<int>(config.mean_atoms)(rng));
    }
    std::normal_distribution<double> site_dist(config.loading_center_sites, config.loading_sigma_nm / config.site_nm);
    std::vector<long> sites;
    for (int i = 0; i < count; ++i) sites.push_back(std::lround(site_dist(rng)));
    truth.atoms = place_atoms(sites, config);
    if (config.on_site_loss) apply_on_site_loss(truth.atoms);

    std::bernoulli_distribution lost(config.mid_exposure_loss_prob);
    std::uniform_real_distribution<double> fraction(0.0, 1.0);
    std::uniform_int_distribution<int> frame(0, config.frames_per_sequence - 1);
    for (TruthAtom& a : truth.atoms) {
        if (config.mid_exposure_loss_prob > 0.0 && lost(rng)) {
            a.lost = true;
            a.survival = fraction(rng);
            a.loss_frame = frame(rng);
        }
    }
    return truth;
}

RenderedFrame render_frame(const std::vector<TruthAtom>& atoms, const SimConfig& config, Rng& rng, int frame_index) {
    config.validate();
    RenderedFrame out;
    Frame& frame = out.frame;
    frame = Frame(config.width, config.height, config.baseline);
    frame.pixel_scale = config.pixel_scale;
    frame.exposure = config.exposure;
    out.truth.frame_index = frame_index;

    const double sigma_h = config.sigma_sp_hor / config.pixel_scale;
    const double sigma_v = config.sigma_ver / config.pixel_scale;
    const double row_center = 0.5 * static_cast<double>(config.height - 1);
    std::vector<double> vertical(config.height);
    double vsum = 0.0;
    for (std::size_t r = 0; r < config.height; ++r) {
        const double u = (static_cast<double>(r) - row_center) / sigma_v;
        vertical[r] = std::exp(-0.5 * u * u);
        vsum += vertical[r];
    }
    for (double& v : vertical) v /= vsum;

    const double drift = config.drift_nm_per_s * config.exposure * static_cast<double>(frame_index);
    std::normal_distribution<double> jitter(0.0, 1.0);
    const double norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * sigma_h);
    std::vector<double> horizontal(config.width);

    for (const TruthAtom& atom : atoms) {
        const double survival = atom.survival_in(frame_index);
        double pos_nm = atom.position_nm + drift;
        if (config.thermal_jitter_nm > 0.0) pos_nm += config.thermal_jitter_nm * jitter(rng);
        if (survival <= 0.0) continue;
        const double px = pos_nm / config.pixel_scale;
        out.truth.atoms.push_back({atom.site, pos_nm, px, survival});
        if (px < -3.0 * sigma_h || px > static_cast<double>(config.width) + 3.0 * sigma_h) {
            out.warnings.push_back("atom at site " + std::to_string(atom.site) + " renders outside the frame");
        }
        const double amp = survival * config.ia;
        for (std::size_t c = 0; c < config.width; ++c) {
            const double u = (static_cast<double>(c) - px) / sigma_h;
            horizontal[c] = amp * norm * std::exp(-0.5 * u * u);
        }
        for (std::size_t r = 0; r < config.height; ++r)
            for (std::size_t c = 0; c < config.width; ++c) frame.at(r, c) += horizontal[c] * vertical[r];
    }

    if (config.shot_noise || config.readout_sigma > 0.0) {
        std::normal_distribution<double> readout(0.0, config.readout_sigma);
        for (double& v : frame.values) {
            if (config.shot_noise && v > 0.0) v = static_cast<double>(std::poisson_distribution<long>(v)(rng));
            if (config.readout_sigma > 0.0) v += readout(rng);
        }
    }
    for (double& v : frame.values) v = std::clamp(v, 0.0, kSensorMax);
    return out;
}

std::uint64_t sequence_seed(std::uint64_t master, std::size_t sequence) {
    // splitmix64
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(sequence) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace {

std::string sequence_name(std::size_t sequence) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%05zu", sequence);
    return buf;
}

}  // namespace

SequenceTruth simulate_sequence(const SimConfig& config, std::uint64_t master_seed, std::size_t sequence,
                                std::vector<Frame>* frames_out) {
    const std::uint64_t seed = sequence_seed(master_seed, sequence);
    Rng rng(seed);
    SequenceTruth seq;
    seq.loading = sample_loading(config, rng);
    seq.loading.sequence_id = sequence_name(sequence);
    seq.loading.seed = seed;
    for (int f = 0; f < config.frames_per_sequence; ++f) {
        RenderedFrame rendered = render_frame(seq.loading.atoms, config, rng, f);
        const std::string fid = seq.loading.sequence_id + "_f" + std::to_string(f);
        rendered.frame.frame_id = fid;
        rendered.frame.sequence_id = seq.loading.sequence_id;
        rendered.truth.frame_id = fid;
        rendered.truth.sequence_id = seq.loading.sequence_id;
        seq.frames.push_back(std::move(rendered.truth));
        if (frames_out) frames_out->push_back(std::move(rendered.frame));
    }
    return seq;
}

Dataset run_campaign(const SimConfig& config, std::uint64_t seed, std::size_t sequences, unsigned jobs) {
    config.validate();
    std::vector<SequenceTruth> truths(sequences);
    std::vector<std::vector<Frame>> frames(sequences);
    jobs = std::max(1u, jobs);
    auto work = [&](unsigned worker) {
        for (std::size_t s = worker; s < sequences; s += jobs) truths[s] = simulate_sequence(config, seed, s, &frames[s]);
    };
    if (jobs == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < jobs; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }
    Dataset data;
    for (std::size_t s = 0; s < sequences; ++s) {
        for (Frame& f : frames[s]) data.frames.push_back(std::move(f));
        data.sequences.push_back(std::move(truths[s]));
    }
    return data;
}

void write_dataset(const Dataset& data, const SimConfig& config, std::uint64_t seed, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const Frame& f : data.frames) {
        const auto path = dir / (f.frame_id + ".pgm");
        write_pgm(path, f);
        write_sidecar(path, f);
    }
    write_sim_config(dir / "sim_config.txt", config);

    nlohmann::ordered_json manifest;
    manifest["seed"] = seed;
    manifest["site_nm"] = config.site_nm;
    manifest["pixel_scale_nm"] = config.pixel_scale;
    manifest["ia_counts"] = config.ia;
    nlohmann::ordered_json seqs = nlohmann::ordered_json::array();
    for (const SequenceTruth& s : data.sequences) {
        nlohmann::ordered_json js;
        js["sequence_id"] = s.loading.sequence_id;
        js["seed"] = s.loading.seed;
        nlohmann::ordered_json atoms = nlohmann::ordered_json::array();
        for (const TruthAtom& a : s.loading.atoms) {
            atoms.push_back({{"site", a.site},
                             {"position_nm", a.position_nm},
                             {"lost", a.lost},
                             {"survival", a.survival},
                             {"loss_frame", a.loss_frame}});
        }
        js["atoms"] = atoms;
        nlohmann::ordered_json frames = nlohmann::ordered_json::array();
        for (const FrameTruth& f : s.frames) {
            nlohmann::ordered_json jf;
            jf["frame_id"] = f.frame_id;
            jf["frame_index"] = f.frame_index;
            nlohmann::ordered_json fa = nlohmann::ordered_json::array();
            for (const FrameAtomTruth& a : f.atoms) {
                fa.push_back({{"site", a.site},
                              {"position_nm", a.position_nm},
                              {"position_px", a.position_px},
                              {"survival", a.survival}});
            }
            jf["atoms"] = fa;
            frames.push_back(jf);
        }
        js["frames"] = frames;
        seqs.push_back(js);
    }
    manifest["sequences"] = seqs;
    std::ofstream out(dir / "manifest.json");
    if (!out) throw DataError("cannot write manifest in " + dir.string());
    out << manifest.dump(1) << "\n";
}

void write_sim_config(const std::filesystem::path& path, const SimConfig& c) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << std::setprecision(17) << std::boolalpha;
    out << "# simulator configuration\n";
    out << "pixel_scale = " << c.pixel_scale << "\n";
    out << "sigma_sp_hor = " << c.sigma_sp_hor << "\n";
    out << "sigma_ver = " << c.sigma_ver << "\n";
    out << "site_nm = " << c.site_nm << "\n";
    out << "width = " << c.width << "\n";
    out << "height = " << c.height << "\n";
    out << "exposure = " << c.exposure << "\n";
    out << "lattice_offset_nm = " << c.lattice_offset_nm << "\n";
    out << "ia = " << c.ia << "\n";
    out << "baseline = " << c.baseline << "\n";
    out << "shot_noise = " << c.shot_noise << "\n";
    out << "readout_sigma = " << c.readout_sigma << "\n";
    out << "loading_center_sites = " << c.loading_center_sites << "\n";
    out << "loading_sigma_nm = " << c.loading_sigma_nm << "\n";
    out << "mean_atoms = " << c.mean_atoms << "\n";
    out << "fixed_atoms = " << (c.fixed_atoms ? std::to_string(*c.fixed_atoms) : std::string("none")) << "\n";
    out << "on_site_loss = " << c.on_site_loss << "\n";
    out << "mid_exposure_loss_prob = " << c.mid_exposure_loss_prob << "\n";
    out << "thermal_jitter_nm = " << c.thermal_jitter_nm << "\n";
    out << "drift_nm_per_s = " << c.drift_nm_per_s << "\n";
    out << "frames_per_sequence = " << c.frames_per_sequence << "\n";
}

SimConfig read_sim_config(const std::filesystem::path& path, SimConfig c) {
    const KeyValueFile kv = read_key_value(path);
    auto num = [&](const char* key, double& field) { field = kv.get_double(key).value_or(field); };
    auto size = [&](const char* key, std::size_t& field) {
        if (auto v = kv.get_int(key)) {
            if (*v <= 0) throw DataError(std::string(key) + " must be positive");
            field = static_cast<std::size_t>(*v);
        }
    };
    num("pixel_scale", c.pixel_scale);
    num("sigma_sp_hor", c.sigma_sp_hor);
    num("sigma_ver", c.sigma_ver);
    num("site_nm", c.site_nm);
    size("width", c.width);
    size("height", c.height);
    num("exposure", c.exposure);
    num("lattice_offset_nm", c.lattice_offset_nm);
    num("ia", c.ia);
    num("baseline", c.baseline);
    c.shot_noise = kv.get_bool("shot_noise").value_or(c.shot_noise);
    num("readout_sigma", c.readout_sigma);
    num("loading_center_sites", c.loading_center_sites);
    num("loading_sigma_nm", c.loading_sigma_nm);
    num("mean_atoms", c.mean_atoms);
    if (auto v = kv.get("fixed_atoms")) {
        if (*v == "none" || v->empty()) {
            c.fixed_atoms.reset();
        } else {
            c.fixed_atoms = static_cast<int>(*kv.get_int("fixed_atoms"));
        }
    }
    c.on_site_loss = kv.get_bool("on_site_loss").value_or(c.on_site_loss);
    num("mid_exposure_loss_prob", c.mid_exposure_loss_prob);
    num("thermal_jitter_nm", c.thermal_jitter_nm);
    num("drift_nm_per_s", c.drift_nm_per_s);
    if (auto v = kv.get_int("frames_per_sequence")) c.frames_per_sequence = static_cast<int>(*v);
    c.validate();
    return c;
}

}  // namespace latticeloc
