#include "latticeloc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "latticeloc/errors.hpp"
#include "latticeloc/levenberg_marquardt.hpp"

namespace latticeloc {

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;
const double kSqrt2Pi = std::sqrt(2.0 * std::numbers::pi);

// orders "x_f2" before "x_f10"
bool natural_less(const std::string& a, const std::string& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
}

std::string pair_name(const std::string& prefix, std::size_t i, std::size_t j) {
    return prefix + ":" + std::to_string(i) + "-" + std::to_string(j);
}

}  // namespace

void LatticeCalib::validate() const {
    if (!(lambda_nm > 0.0) || !(site_nm > 0.0)) throw InvalidArgument("lattice constants must be positive");
    if (std::abs(site_nm - 0.5 * lambda_nm) > 1e-9 * site_nm) throw InvalidArgument("site_nm must equal lambda/2");
}

int assign_site_separation(double distance_nm, const LatticeCalib& lattice) {
    if (distance_nm < 0.0) throw InvalidArgument("negative distance");
    return static_cast<int>(std::floor(distance_nm / lattice.site_nm + 0.5));
}

std::vector<AtomRecord> retained_atoms(std::span<const AtomRecord> frame_records) {
    std::map<int, bool> roi_ok;
    for (const AtomRecord& r : frame_records) {
        auto [it, fresh] = roi_ok.try_emplace(r.roi_id, true);
        it->second = it->second && r.reliable && r.converged && !r.count_ambiguous;
    }
    std::vector<AtomRecord> out;
    for (const AtomRecord& r : frame_records) {
        if (roi_ok[r.roi_id]) out.push_back(r);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const AtomRecord& a, const AtomRecord& b) { return a.position_nm < b.position_nm; });
    return out;
}

std::vector<DistanceSample> pairwise_distances(std::span<const AtomRecord> frame_records, const LatticeCalib& lattice) {
    const std::vector<AtomRecord> atoms = retained_atoms(frame_records);
    std::vector<DistanceSample> out;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        for (std::size_t j = i + 1; j < atoms.size(); ++j) {
            DistanceSample s;
            s.distance_nm = std::abs(atoms[j].position_nm - atoms[i].position_nm);
            s.n_sites = assign_site_separation(s.distance_nm, lattice);
            s.frames_averaged = 1;
            s.pair_id = pair_name(atoms[i].frame_id, i, j);
            s.sequence_id = atoms[i].sequence_id;
            out.push_back(std::move(s));
        }
    }
    return out;
}

AveragedDistances match_and_average(std::span<const AtomRecord> sequence_records, int frames_required,
                                    const LatticeCalib& lattice) {
    if (frames_required < 1) throw InvalidArgument("frames_required must be >= 1");
    std::map<std::string, std::vector<AtomRecord>> by_frame;
    for (const AtomRecord& r : sequence_records) by_frame[r.frame_id].push_back(r);
    std::vector<std::string> ids;
    for (const auto& [id, recs] : by_frame) ids.push_back(id);
    std::sort(ids.begin(), ids.end(), natural_less);

    AveragedDistances out;
    std::vector<std::vector<AtomRecord>> frames;
    for (const std::string& id : ids) frames.push_back(retained_atoms(by_frame[id]));
    if (static_cast<int>(frames.size()) < frames_required) {
        for (const auto& f : frames) out.unmatched_atoms += f.size();
        return out;
    }
    frames.resize(static_cast<std::size_t>(frames_required));

    const auto& ref = frames[0];
    const double radius = 0.5 * lattice.site_nm;
    // chain[i][f] = index of reference atom i in frame f, or -1
    std::vector<std::vector<long>> chain(ref.size(), std::vector<long>(frames.size(), -1));
    for (std::size_t i = 0; i < ref.size(); ++i) chain[i][0] = static_cast<long>(i);
    for (std::size_t f = 1; f < frames.size(); ++f) {
        std::vector<int> uses(frames[f].size(), 0);
        for (std::size_t i = 0; i < ref.size(); ++i) {
            long best = -1;
            double best_d = radius;
            for (std::size_t j = 0; j < frames[f].size(); ++j) {
                const double d = std::abs(frames[f][j].position_nm - ref[i].position_nm);
                if (d <= best_d) best_d = d, best = static_cast<long>(j);
            }
            chain[i][f] = best;
            if (best >= 0) ++uses[static_cast<std::size_t>(best)];
        }
        for (std::size_t i = 0; i < ref.size(); ++i) {
            if (chain[i][f] >= 0 && uses[static_cast<std::size_t>(chain[i][f])] > 1) chain[i][f] = -1;
        }
    }

    std::vector<std::size_t> matched;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        if (std::all_of(chain[i].begin(), chain[i].end(), [](long v) { return v >= 0; })) matched.push_back(i);
    }
    std::size_t total = 0;
    for (const auto& f : frames) total += f.size();
    out.unmatched_atoms = total - matched.size() * frames.size();

    for (std::size_t a = 0; a < matched.size(); ++a) {
        for (std::size_t b = a + 1; b < matched.size(); ++b) {
            const std::size_t i = matched[a], j = matched[b];
            double sum = 0.0;
            for (std::size_t f = 0; f < frames.size(); ++f) {
                sum += std::abs(frames[f][static_cast<std::size_t>(chain[j][f])].position_nm -
                                frames[f][static_cast<std::size_t>(chain[i][f])].position_nm);
            }
            DistanceSample s;
            s.distance_nm = sum / static_cast<double>(frames.size());
            s.n_sites = assign_site_separation(s.distance_nm, lattice);
            s.frames_averaged = frames_required;
            s.pair_id = pair_name(ref[i].frame_id, i, j);
            s.sequence_id = ref[i].sequence_id;
            out.samples.push_back(std::move(s));
        }
    }
    return out;
}

double reliability_Fn(double sigma_n, const LatticeCalib& lattice) {
    if (!(sigma_n > 0.0)) throw InvalidArgument("sigma_n must be positive");
    return std::erf((0.25 * lattice.lambda_nm) / (kSqrt2 * sigma_n));
}

// ---------------------------------------------------------------------------
// distance histogram

HistogramFit fit_distance_histogram(std::span<const DistanceSample> samples, const LatticeCalib& lattice, int n_max,
                                    const HistogramFitOptions& options) {
    if (samples.size() < 10) throw InvalidArgument("need at least 10 distance samples");
    if (n_max < 0) throw InvalidArgument("n_max must be non-negative");
    const double site = lattice.site_nm;
    const double w = options.bin_width_nm > 0.0 ? options.bin_width_nm : 0.25 * site;
    const double max_sigma = 0.5 * site;

    HistogramFit fit;
    fit.bin_width_nm = w;
    const auto nbins = static_cast<std::size_t>(std::ceil((static_cast<double>(n_max) + 0.5) * site / w)) + 1;
    fit.bins.resize(nbins);
    for (std::size_t k = 0; k < nbins; ++k) fit.bins[k].center_nm = static_cast<double>(k) * w;

    std::vector<std::vector<double>> assigned(static_cast<std::size_t>(n_max) + 1);
    for (const DistanceSample& s : samples) {
        const auto k = static_cast<std::size_t>(std::floor(s.distance_nm / w + 0.5));
        if (k < nbins) fit.bins[k].count += 1.0;
        const int n = assign_site_separation(s.distance_nm, lattice);
        if (n <= n_max) assigned[static_cast<std::size_t>(n)].push_back(s.distance_nm);
    }

    std::vector<int> active;
    for (int n = 0; n <= n_max; ++n) {
        PeakFit p;
        p.n = n;
        p.center_nm = n * site;
        p.samples = assigned[static_cast<std::size_t>(n)].size();
        p.populated = p.samples >= options.min_peak_samples;
        if (p.populated) active.push_back(n);
        fit.peaks.push_back(p);
    }

    // layout per active peak: amplitude, [sigma], [center]; a shared sigma sits last
    const bool shared = options.shared_sigma;
    const Eigen::Index per_peak = 1 + (shared ? 0 : 1) + (options.free_centers ? 1 : 0);
    const auto n_active = static_cast<Eigen::Index>(active.size());
    const Eigen::Index np = n_active * per_peak + (shared && n_active > 0 ? 1 : 0);
    auto i_amp = [&](std::size_t a) { return static_cast<Eigen::Index>(a) * per_peak; };
    auto i_sigma = [&](std::size_t a) { return shared ? n_active * per_peak : i_amp(a) + 1; };
    auto i_center = [&](std::size_t a) { return i_amp(a) + per_peak - 1; };

    Eigen::VectorXd start(np);
    double pooled_ss = 0.0, pooled_n = 0.0;
    for (std::size_t a = 0; a < active.size(); ++a) {
        const auto& v = assigned[static_cast<std::size_t>(active[a])];
        const double center = active[a] * site;
        double ss = 0.0;
        for (double d : v) ss += (d - center) * (d - center);
        pooled_ss += ss;
        pooled_n += static_cast<double>(v.size());
        const double sigma0 = std::clamp(std::sqrt(ss / static_cast<double>(v.size())), options.min_sigma_nm, max_sigma);
        start[i_amp(a)] = static_cast<double>(v.size()) * w / (kSqrt2Pi * sigma0);
        if (!shared) start[i_sigma(a)] = sigma0;
        if (options.free_centers) start[i_center(a)] = center;
    }
    if (shared && n_active > 0) {
        start[np - 1] = std::clamp(std::sqrt(pooled_ss / pooled_n), options.min_sigma_nm, max_sigma);
    }

    auto peak_center = [&](const Eigen::VectorXd& p, std::size_t a) {
        return options.free_centers ? p[i_center(a)] : active[a] * site;
    };

    // Each peak is integrated over the bin; amp stays the peak height in counts per bin.
    const auto nb = static_cast<Eigen::Index>(nbins);
    const double amp_scale = kSqrt2Pi / w;
    ResidualFn fn = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r.resize(nb);
        if (jac) jac->setZero(nb, np);
        for (Eigen::Index k = 0; k < nb; ++k) {
            const double x = fit.bins[static_cast<std::size_t>(k)].center_nm;
            double model = 0.0;
            for (std::size_t a = 0; a < active.size(); ++a) {
                const double amp = p[i_amp(a)], sigma = p[i_sigma(a)];
                const double lo = (x - 0.5 * w - peak_center(p, a)) / sigma;
                const double hi = (x + 0.5 * w - peak_center(p, a)) / sigma;
                const double mass = 0.5 * (std::erf(hi / kSqrt2) - std::erf(lo / kSqrt2));
                const double pdf_lo = std::exp(-0.5 * lo * lo) / kSqrt2Pi;
                const double pdf_hi = std::exp(-0.5 * hi * hi) / kSqrt2Pi;
                model += amp * amp_scale * sigma * mass;
                if (jac) {
                    (*jac)(k, i_amp(a)) = -amp_scale * sigma * mass;
                    (*jac)(k, i_sigma(a)) += -amp * amp_scale * (mass - (hi * pdf_hi - lo * pdf_lo));
                    if (options.free_centers) (*jac)(k, i_center(a)) = -amp * amp_scale * (pdf_lo - pdf_hi);
                }
            }
            r[k] = fit.bins[static_cast<std::size_t>(k)].count - model;
        }
    };
    ProjectFn project = [&](Eigen::VectorXd& p) {
        for (std::size_t a = 0; a < active.size(); ++a) {
            p[i_amp(a)] = std::max(p[i_amp(a)], 0.0);
            p[i_sigma(a)] = std::clamp(p[i_sigma(a)], options.min_sigma_nm, max_sigma);
            if (options.free_centers) {
                const double c = active[a] * site;
                p[i_center(a)] = std::clamp(p[i_center(a)], c - 0.5 * site, c + 0.5 * site);
            }
        }
    };

    Eigen::VectorXd params = start;
    if (np > 0) {
        LmOptions lm;
        lm.max_iterations = 500;
        lm.cost_rtol = 1e-12;
        lm.step_tol = 1e-9;
        LmResult res = levenberg_marquardt(fn, start, lm, project);
        if (res.diverged || !res.params.allFinite()) throw NonConvergence("distance histogram fit did not converge");
        params = res.params;
    }

    for (std::size_t a = 0; a < active.size(); ++a) {
        PeakFit& p = fit.peaks[static_cast<std::size_t>(active[a])];
        p.amplitude = params[i_amp(a)];
        p.sigma_n = params[i_sigma(a)];
        p.center_nm = peak_center(params, a);
        p.F_n = reliability_Fn(p.sigma_n, lattice);
    }
    Eigen::VectorXd r;
    fn(params, r, nullptr);
    for (Eigen::Index k = 0; k < nb; ++k) {
        auto& bin = fit.bins[static_cast<std::size_t>(k)];
        bin.model = bin.count - r[k];
    }
    return fit;
}

// ---------------------------------------------------------------------------
// loading and pair model

double LoadingModel::density(double x_nm) const {
    const double u = (x_nm - center_nm) / sigma_P_nm;
    return std::exp(-0.5 * u * u) / (kSqrt2Pi * sigma_P_nm);
}

LoadingModel fit_loading(std::span<const double> positions_nm, const LatticeCalib& lattice) {
    if (positions_nm.size() < 30) throw InvalidArgument("need at least 30 single-atom positions");
    const double count = static_cast<double>(positions_nm.size());
    double mean = 0.0;
    for (double x : positions_nm) mean += x;
    mean /= count;
    double var = 0.0;
    for (double x : positions_nm) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / count);
    if (!(sd > 1e-9 * std::max(1.0, std::abs(mean)))) throw DegenerateSpread("single-atom positions do not spread");

    // one bin per lattice site, centered on the circular mean site phase
    const double site = lattice.site_nm;
    double sx = 0.0, cx = 0.0;
    for (double x : positions_nm) {
        sx += std::sin(2.0 * std::numbers::pi * x / site);
        cx += std::cos(2.0 * std::numbers::pi * x / site);
    }
    const double phase = std::atan2(sx, cx) / (2.0 * std::numbers::pi) * site;
    const auto [lo_it, hi_it] = std::minmax_element(positions_nm.begin(), positions_nm.end());
    const long k_lo = std::lround(std::floor((*lo_it - phase) / site)) - 2;
    const long k_hi = std::lround(std::ceil((*hi_it - phase) / site)) + 2;
    const auto nb = static_cast<Eigen::Index>(k_hi - k_lo + 1);
    Eigen::VectorXd centers(nb), counts = Eigen::VectorXd::Zero(nb);
    for (Eigen::Index k = 0; k < nb; ++k) centers[k] = phase + static_cast<double>(k_lo + k) * site;
    for (double x : positions_nm) {
        const long k = std::lround((x - phase) / site) - k_lo;
        counts[k] += 1.0;
    }

    ResidualFn fn = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r.resize(nb);
        if (jac) jac->resize(nb, 3);
        for (Eigen::Index k = 0; k < nb; ++k) {
            const double d = centers[k] - p[1];
            const double g = std::exp(-0.5 * d * d / (p[2] * p[2]));
            r[k] = counts[k] - p[0] * g;
            if (jac) {
                (*jac)(k, 0) = -g;
                (*jac)(k, 1) = -p[0] * g * d / (p[2] * p[2]);
                (*jac)(k, 2) = -p[0] * g * d * d / (p[2] * p[2] * p[2]);
            }
        }
    };
    const double sigma0 = std::max(sd, 0.5 * site);
    Eigen::Vector3d start(count * site / (kSqrt2Pi * sigma0), mean, sigma0);
    LmOptions lm;
    lm.max_iterations = 300;
    lm.cost_rtol = 1e-14;
    lm.step_tol = 1e-9;
    LmResult res = levenberg_marquardt(fn, start, lm, [&](Eigen::VectorXd& p) { p[2] = std::max(p[2], 1e-3 * site); });
    if (res.diverged || !res.params.allFinite()) throw NonConvergence("loading fit did not converge");
    return LoadingModel{res.params[1], std::abs(res.params[2]), 0.0};
}

double pair_model_Q(const LoadingModel& model, double d_nm) {
    const double s = model.sigma_P_nm;
    return 2.0 * model.Q0 * std::exp(-d_nm * d_nm / (4.0 * s * s)) / (2.0 * std::sqrt(std::numbers::pi) * s);
}

PairDistributionFit fit_pair_distribution(std::span<const DistanceSample> samples, const LatticeCalib& lattice,
                                          int min_site) {
    if (samples.size() < 10) throw InvalidArgument("need at least 10 pair distances");
    const double site = lattice.site_nm;
    int n_hi = 0;
    double sumsq = 0.0;
    for (const DistanceSample& s : samples) {
        n_hi = std::max(n_hi, assign_site_separation(s.distance_nm, lattice));
        sumsq += s.distance_nm * s.distance_nm;
    }
    n_hi += 3;
    PairDistributionFit out;
    for (int n = 0; n <= n_hi; ++n) out.sites.push_back({n * site, 0.0, 0.0});
    for (const DistanceSample& s : samples) out.sites[static_cast<std::size_t>(assign_site_separation(s.distance_nm, lattice))].count += 1.0;

    const int first = std::max(min_site, 0);
    const auto nb = static_cast<Eigen::Index>(n_hi - first + 1);
    ResidualFn fn = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r.resize(nb);
        if (jac) jac->resize(nb, 2);
        for (Eigen::Index k = 0; k < nb; ++k) {
            const auto& bin = out.sites[static_cast<std::size_t>(first + k)];
            const double d = bin.center_nm;
            const double g = std::exp(-0.5 * d * d / (p[1] * p[1]));
            r[k] = bin.count - p[0] * g;
            if (jac) {
                (*jac)(k, 0) = -g;
                (*jac)(k, 1) = -p[0] * g * d * d / (p[1] * p[1] * p[1]);
            }
        }
    };
    const double count = static_cast<double>(samples.size());
    const double sigma0 = std::max(std::sqrt(sumsq / count), site);
    Eigen::Vector2d start(2.0 * count * site / (kSqrt2Pi * sigma0), sigma0);
    LmOptions lm;
    lm.max_iterations = 300;
    lm.cost_rtol = 1e-14;
    lm.step_tol = 1e-9;
    LmResult res = levenberg_marquardt(fn, start, lm, [&](Eigen::VectorXd& p) { p[1] = std::max(p[1], 0.1 * site); });
    if (res.diverged || !res.params.allFinite()) throw NonConvergence("pair distribution fit did not converge");

    out.amplitude_per_site = res.params[0];
    out.sigma_d_nm = std::abs(res.params[1]);
    // per-site counts A exp(-d^2 / 2 sigma_d^2) = Q(d) * site  =>  Q0 = A sigma_d sqrt(pi/2) / site
    out.model = LoadingModel{0.0, out.sigma_d_nm / kSqrt2,
                             out.amplitude_per_site * out.sigma_d_nm * std::sqrt(0.5 * std::numbers::pi) / site};
    out.pair_count = count;
    for (auto& bin : out.sites) {
        bin.model = out.amplitude_per_site * std::exp(-0.5 * bin.center_nm * bin.center_nm / (out.sigma_d_nm * out.sigma_d_nm));
    }
    return out;
}

}  // namespace latticeloc
