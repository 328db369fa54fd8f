#include "latticeloc/spike.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "latticeloc/errors.hpp"
#include "latticeloc/levenberg_marquardt.hpp"

namespace latticeloc {

using cd = std::complex<double>;

void AnalysisCalib::validate() const {
    if (!(ia > 0.0)) throw InvalidArgument("I_a must be positive");
    if (!(reliability_tol > 0.0 && reliability_tol < 1.0)) throw InvalidArgument("reliability_tol must be in (0,1)");
    if (!(mode_cutoff > 0.0 && mode_cutoff < 1.0)) throw InvalidArgument("mode_cutoff must be in (0,1)");
    if (!(count_tolerance > 0.0 && count_tolerance < 0.5)) throw InvalidArgument("count_tolerance must be in (0,0.5)");
    if (!(pixel_scale > 0.0)) throw InvalidArgument("pixel_scale must be positive");
}

AtomCount count_atoms(const Profile& roi, const NoiseEstimate& noise, const AnalysisCalib& calib) {
    if (!(calib.ia > 0.0)) throw InvalidArgument("I_a must be positive");
    AtomCount out;
    out.cumulative.reserve(roi.size());
    double sum = 0.0;
    for (double v : roi.intensities) {
        sum += v - noise.baseline;
        out.cumulative.push_back(sum);
    }
    out.total = sum;
    if (sum < -calib.count_tolerance * calib.ia) {
        throw BaselineMisestimate("ROI signal " + std::to_string(sum) + " is far below the baseline");
    }
    const double ratio = sum / calib.ia;
    const double nearest = std::max(0.0, std::round(ratio));
    out.n = static_cast<int>(nearest);
    out.ambiguous = std::abs(ratio - nearest) > calib.count_tolerance;
    return out;
}

// ---------------------------------------------------------------------------
// trigonometric moments + matrix pencil

namespace {

std::size_t next_pow2(std::size_t n) {
    std::size_t t = 1;
    while (t < n) t <<= 1;
    return t;
}

}  // namespace

int usable_modes(std::size_t length, const LsfModel& lsf, double mode_cutoff) {
    const std::size_t t = next_pow2(length);
    int m = 0;
    while (static_cast<std::size_t>(m + 1) <= t / 2 &&
           std::abs(lsf.fourier(static_cast<double>(m + 1) / static_cast<double>(t))) >= mode_cutoff) {
        ++m;
    }
    return m;
}

std::vector<double> locate_spikes(const Profile& roi, double a0, int n, const LsfModel& lsf,
                                  const LocateOptions& options) {
    if (n < 0) throw InvalidArgument("negative spike count");
    if (n == 0) return {};
    const std::size_t len = roi.size();
    if (len == 0) throw UnderResolved("empty ROI");
    const std::size_t t = next_pow2(len);
    const double td = static_cast<double>(t);

    std::vector<double> y(len);
    double total = 0.0, peak = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
        y[i] = roi.intensities[i] - a0;
        total += y[i];
        peak = std::max(peak, std::abs(y[i]));
    }
    if (peak == 0.0) throw UnderResolved("ROI carries no signal above the baseline");

    int modes = usable_modes(len, lsf, options.mode_cutoff);
    if (modes < n) {
        throw UnderResolved("only " + std::to_string(2 * modes + 1) + " usable modes for " + std::to_string(n) +
                            " spikes");
    }
    if (options.noise_sigma > 0.0 && options.min_moment_snr > 0.0 && std::abs(total) > 0.0) {
        const double floor = options.min_moment_snr * options.noise_sigma * std::sqrt(static_cast<double>(len)) /
                             std::abs(total);
        int m = n;
        while (m < modes && std::abs(lsf.fourier(static_cast<double>(m + 1) / td)) >= floor) ++m;
        modes = m;
    }
    if (options.max_modes > 0) modes = std::max(n, std::min(modes, options.max_modes));

    // Deconvolved moments m_j for j = -M..M, stored as s[j + M].
    const auto k_len = static_cast<Eigen::Index>(2 * modes + 1);
    std::vector<cd> twiddle(t);
    for (std::size_t q = 0; q < t; ++q) {
        twiddle[q] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(q) / td);
    }
    Eigen::VectorXcd s(k_len);
    for (int j = 0; j <= modes; ++j) {
        cd acc = 0.0;
        for (std::size_t i = 0; i < len; ++i) acc += y[i] * twiddle[(static_cast<std::size_t>(j) * i) % t];
        const cd moment = acc / lsf.fourier(static_cast<double>(j) / td);
        s[modes + j] = moment;
        s[modes - j] = std::conj(moment);
    }

    // Hankel matrix H(r, c) = s[r + c], rows R = K - P, columns P + 1.
    const Eigen::Index pencil = k_len / 2;
    const Eigen::Index rows = k_len - pencil;
    const Eigen::Index cols = pencil + 1;
    Eigen::MatrixXcd hankel(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) hankel(r, c) = s[r + c];

    // Signal subspace: leading eigenvectors of H H^*.
    const Eigen::MatrixXcd gram = hankel * hankel.adjoint();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(gram);
    if (eig.info() != Eigen::Success) throw UnderResolved("moment subspace decomposition failed");
    const double top = eig.eigenvalues()[rows - 1];
    if (!(top > 0.0)) throw UnderResolved("degenerate moment sequence");
    const Eigen::MatrixXcd u = eig.eigenvectors().rightCols(n);

    // Shift invariance U[1:] = U[:-1] Phi, eigenvalues of Phi are the roots.
    const Eigen::MatrixXcd upper = u.topRows(rows - 1);
    const Eigen::MatrixXcd lower = u.bottomRows(rows - 1);
    const Eigen::MatrixXcd phi = upper.completeOrthogonalDecomposition().solve(lower);
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> roots(phi, false);
    if (roots.info() != Eigen::Success) throw UnderResolved("pencil eigenvalue solve failed");

    const double len_d = static_cast<double>(len);
    std::vector<double> positions;
    positions.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index k = 0; k < n; ++k) {
        double xi = -td * std::arg(roots.eigenvalues()[k]) / (2.0 * std::numbers::pi);
        if (xi < -0.5 * (td - len_d)) xi += td;
        xi = std::clamp(xi, 0.0, len_d - 1.0);
        positions.push_back(static_cast<double>(roi.origin) + xi);
    }
    std::sort(positions.begin(), positions.end());
    return positions;
}

// ---------------------------------------------------------------------------
// amplitudes

std::vector<double> fit_amplitudes(const Profile& roi, double a0, std::span<const double> positions,
                                   const LsfModel& lsf) {
    const auto n = static_cast<Eigen::Index>(positions.size());
    if (n == 0) return {};
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            if (std::abs(positions[static_cast<std::size_t>(i)] - positions[static_cast<std::size_t>(j)]) < 1e-6) {
                throw IllConditioned("spike positions " + std::to_string(i) + " and " + std::to_string(j) +
                                         " coincide",
                                     static_cast<int>(i), static_cast<int>(j));
            }
        }
    }
    const auto m = static_cast<Eigen::Index>(roi.size());
    Eigen::MatrixXd design(m, n);
    Eigen::VectorXd rhs(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double x = roi.x(static_cast<std::size_t>(i));
        rhs[i] = roi.intensities[static_cast<std::size_t>(i)] - a0;
        for (Eigen::Index k = 0; k < n; ++k) design(i, k) = lsf.value(x - positions[static_cast<std::size_t>(k)]);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (!(sv[0] > 0.0) || sv[n - 1] < 1e-12 * sv[0]) {
        // report the closest pair
        Eigen::Index bi = 0, bj = n > 1 ? 1 : 0;
        double best = INFINITY;
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i + 1; j < n; ++j) {
                const double d =
                    std::abs(positions[static_cast<std::size_t>(i)] - positions[static_cast<std::size_t>(j)]);
                if (d < best) best = d, bi = i, bj = j;
            }
        throw IllConditioned("amplitude design matrix is singular", static_cast<int>(bi), static_cast<int>(bj));
    }
    const Eigen::VectorXd a = svd.solve(rhs);
    return {a.data(), a.data() + a.size()};
}

// ---------------------------------------------------------------------------
// objective

SpikeObjective::SpikeObjective(const Profile& roi, const LsfModel& lsf, int n) : roi_(roi), lsf_(lsf), n_(n) {}

void SpikeObjective::residuals(const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) const {
    const auto m = static_cast<Eigen::Index>(roi_.size());
    const double origin = static_cast<double>(roi_.origin);
    const double hw = lsf_.support_halfwidth();
    const bool gaussian = lsf_.form() == LsfForm::gaussian;
    const double inv_var = 1.0 / (lsf_.sigma_px() * lsf_.sigma_px());
    if (jac) {
        jac->setZero(m, 1 + 2 * n_);
        jac->col(0).setConstant(-1.0);
    }
    r.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) r[i] = roi_.intensities[static_cast<std::size_t>(i)] - p[0];
    for (int k = 0; k < n_; ++k) {
        const double amp = p[1 + k];
        const double xi = p[1 + n_ + k];
        const auto first = static_cast<Eigen::Index>(std::max(0.0, std::ceil(xi - hw - origin)));
        const auto last = static_cast<Eigen::Index>(std::min(static_cast<double>(m - 1), std::floor(xi + hw - origin)));
        for (Eigen::Index i = first; i <= last; ++i) {
            const double d = origin + static_cast<double>(i) - xi;
            const double l = lsf_.value(d);
            r[i] -= amp * l;
            if (jac) {
                (*jac)(i, 1 + k) = -l;
                (*jac)(i, 1 + n_ + k) = amp * (gaussian ? -d * inv_var * l : lsf_.derivative(d));
            }
        }
    }
}

double SpikeObjective::cost(const Eigen::VectorXd& p) const {
    Eigen::VectorXd r;
    residuals(p, r, nullptr);
    return r.squaredNorm();
}

Eigen::VectorXd SpikeObjective::gradient(const Eigen::VectorXd& p) const {
    Eigen::VectorXd r;
    Eigen::MatrixXd jac;
    residuals(p, r, &jac);
    return 2.0 * jac.transpose() * r;
}

Eigen::VectorXd SpikeObjective::pack(const SpikeFit& fit) const {
    Eigen::VectorXd p(1 + 2 * n_);
    p[0] = fit.a0;
    for (int k = 0; k < n_; ++k) {
        p[1 + k] = fit.atoms[static_cast<std::size_t>(k)].amplitude;
        p[1 + n_ + k] = fit.atoms[static_cast<std::size_t>(k)].position;
    }
    return p;
}

SpikeFit SpikeObjective::unpack(const Eigen::VectorXd& p) const {
    SpikeFit fit;
    fit.a0 = p[0];
    for (int k = 0; k < n_; ++k) fit.atoms.push_back({p[1 + k], p[1 + n_ + k]});
    std::sort(fit.atoms.begin(), fit.atoms.end(),
              [](const Spike& a, const Spike& b) { return a.position < b.position; });
    fit.residual_rms = std::sqrt(cost(p) / static_cast<double>(std::max<std::size_t>(roi_.size(), 1)));
    return fit;
}

SpikeFit refine(const Profile& roi, const SpikeFit& initial, const LsfModel& lsf, const RefineOptions& options) {
    const int n = static_cast<int>(initial.atoms.size());
    if (n < 1) throw InvalidArgument("refine needs at least one spike");
    SpikeObjective objective(roi, lsf, n);

    const double lo = roi.x(0);
    const double hi = roi.x(roi.size() - 1);
    ProjectFn project = [&](Eigen::VectorXd& p) {
        for (int k = 0; k < n; ++k) {
            p[1 + k] = std::max(p[1 + k], 1e-9);
            p[1 + n + k] = std::clamp(p[1 + n + k], lo, hi);
        }
    };

    LmOptions lm;
    lm.max_iterations = options.max_iterations;
    lm.cost_rtol = options.cost_rtol;
    lm.step_tol = options.step_tol_px;
    for (int k = 0; k < n; ++k) lm.step_params.push_back(1 + n + k);
    double data_ss = 0.0;
    for (double v : roi.intensities) data_ss += v * v;
    lm.cost_floor = 1e-24 * data_ss;

    ResidualFn fn = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        objective.residuals(p, r, jac);
    };
    const Eigen::VectorXd start = objective.pack(initial);
    LmResult res = levenberg_marquardt(fn, start, lm, project);

    if (res.diverged) {
        SpikeFit out = objective.unpack(start);
        out.converged = false;
        return out;
    }
    SpikeFit out = objective.unpack(res.params);
    out.converged = res.converged;
    return out;
}

std::vector<bool> check_reliability(const SpikeFit& fit, const AnalysisCalib& calib) {
    if (!(calib.ia > 0.0)) throw InvalidArgument("I_a must be positive");
    std::vector<bool> flags;
    flags.reserve(fit.atoms.size());
    for (const Spike& s : fit.atoms) flags.push_back(std::abs(s.amplitude - calib.ia) / calib.ia < calib.reliability_tol);
    return flags;
}

// ---------------------------------------------------------------------------
// orchestration

constexpr int kMaxModeRestarts = 6;

SpikeFit estimate_roi(const Profile& roi, const NoiseEstimate& noise, const AnalysisCalib& calib, int n) {
    LocateOptions lo;
    lo.mode_cutoff = calib.mode_cutoff;
    lo.noise_sigma = noise.sigma;
    lo.min_moment_snr = calib.min_moment_snr;
    const auto start_from = [&](const LocateOptions& opts) {
        std::vector<double> positions = locate_spikes(roi, noise.baseline, n, calib.lsf, opts);
        // Root phases can collide under noise; nudge them apart before the linear solve.
        for (std::size_t k = 1; k < positions.size(); ++k) {
            positions[k] = std::max(positions[k], positions[k - 1] + 1e-3);
        }
        const std::vector<double> amps = fit_amplitudes(roi, noise.baseline, positions, calib.lsf);
        SpikeFit initial;
        initial.a0 = noise.baseline;
        for (std::size_t k = 0; k < positions.size(); ++k) initial.atoms.push_back({amps[k], positions[k]});
        return refine(roi, initial, calib.lsf);
    };

    SpikeFit best = start_from(lo);
    if (n < 2) return best;
    const auto flags = check_reliability(best, calib);
    if (best.converged && std::all_of(flags.begin(), flags.end(), [](bool f) { return f; })) return best;

    // Fewer modes trade resolution for noise; keep whichever start ends lowest.
    const SpikeObjective objective(roi, calib.lsf, n);
    double best_cost = objective.cost(objective.pack(best));
    const int full = usable_modes(roi.size(), calib.lsf, calib.mode_cutoff);
    const int span = full - n;
    const int tries = std::min(span, kMaxModeRestarts);
    for (int t = 0; t < tries; ++t) {
        LocateOptions capped = lo;
        capped.max_modes = n + (tries > 1 ? t * (span - 1) / (tries - 1) : 0);
        capped.min_moment_snr = 0.0;
        try {
            SpikeFit fit = start_from(capped);
            const double cost = objective.cost(objective.pack(fit));
            if (cost < best_cost) best = std::move(fit), best_cost = cost;
        } catch (const Error&) {
        }
    }
    return best;
}

FrameAnalysis analyze_frame(const Frame& frame, const AnalysisCalib& calib, const SegmentParams& seg) {
    calib.validate();
    FrameAnalysis out;
    const std::string tag = "frame " + frame.frame_id + ": ";

    const Profile profile = bin_vertical(frame);
    try {
        NoiseEstimate noise = estimate_background(profile);
        std::vector<Roi> rois = segment(profile, noise, seg);
        if (!rois.empty()) {
            try {
                noise = estimate_background(profile, rois);
                rois = segment(profile, noise, seg);
            } catch (const InsufficientBackground& e) {
                out.diagnostics.push_back(tag + "kept full-profile background: " + e.what());
            }
        }
        out.noise = noise;

        for (const Roi& roi : rois) {
            const std::string roi_tag = tag + "roi " + std::to_string(roi.roi_id) + ": ";
            try {
                const Profile sub = slice(profile, roi);
                const AtomCount count = count_atoms(sub, noise, calib);
                if (count.n == 0) {
                    out.diagnostics.push_back(roi_tag + "no atoms counted");
                    continue;
                }
                if (count.ambiguous) out.diagnostics.push_back(roi_tag + "ambiguous atom count");
                SpikeFit fit = estimate_roi(sub, noise, calib, count.n);
                if (!fit.converged) out.diagnostics.push_back(roi_tag + "refinement did not converge");
                const std::vector<bool> flags = check_reliability(fit, calib);
                for (std::size_t k = 0; k < fit.atoms.size(); ++k) {
                    AtomRecord rec;
                    rec.frame_id = frame.frame_id;
                    rec.sequence_id = frame.sequence_id;
                    rec.roi_id = roi.roi_id;
                    rec.position_px = fit.atoms[k].position;
                    rec.position_nm = fit.atoms[k].position * calib.pixel_scale;
                    rec.amplitude = fit.atoms[k].amplitude;
                    rec.reliable = flags[k];
                    rec.roi_atoms = count.n;
                    rec.count_ambiguous = count.ambiguous;
                    rec.converged = fit.converged;
                    rec.residual_rms = fit.residual_rms;
                    rec.baseline = fit.a0;
                    out.records.push_back(std::move(rec));
                }
                out.rois.push_back({roi, count, std::move(fit)});
            } catch (const Error& e) {
                out.diagnostics.push_back(roi_tag + e.what());
            }
        }
    } catch (const Error& e) {
        out.diagnostics.push_back(tag + e.what());
    }
    return out;
}

}  // namespace latticeloc
