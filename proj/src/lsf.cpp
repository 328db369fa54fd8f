#include "latticeloc/lsf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "latticeloc/errors.hpp"
#include "latticeloc/key_value.hpp"
#include "latticeloc/levenberg_marquardt.hpp"

namespace latticeloc {

namespace {

constexpr double kPi = std::numbers::pi;

double gaussian_density(double x, double sigma) {
    const double u = x / sigma;
    return std::exp(-0.5 * u * u) / (std::sqrt(2.0 * kPi) * sigma);
}

double sinc(double u) {
    if (std::abs(u) < 1e-8) return 1.0 - kPi * kPi * u * u / 6.0;
    return std::sin(kPi * u) / (kPi * u);
}

}  // namespace

LsfModel LsfModel::gaussian(double sigma_px) {
    if (!(sigma_px > 0.0) || !std::isfinite(sigma_px)) throw InvalidArgument("LSF sigma must be positive");
    LsfModel m;
    m.form_ = LsfForm::gaussian;
    m.sigma_ = sigma_px;
    return m;
}

LsfModel LsfModel::empirical(double first_offset, double spacing, std::vector<double> values) {
    if (!(spacing > 0.0)) throw InvalidArgument("LSF table spacing must be positive");
    if (values.size() < 2) throw InvalidArgument("LSF table needs at least two nodes");
    for (double& v : values) {
        if (!std::isfinite(v)) throw InvalidArgument("LSF table value not finite");
        v = std::max(v, 0.0);
    }
    if (values.front() != 0.0) {
        values.insert(values.begin(), 0.0);
        first_offset -= spacing;
    }
    if (values.back() != 0.0) values.push_back(0.0);

    double area = 0.0;
    for (double v : values) area += v;
    area *= spacing;
    if (!(area > 0.0)) throw DegenerateSpread("LSF table has zero area");

    LsfModel m;
    m.form_ = LsfForm::empirical;
    m.first_offset_ = first_offset;
    m.spacing_ = spacing;
    m.values_ = std::move(values);
    double mean = 0.0, second = 0.0;
    for (std::size_t k = 0; k < m.values_.size(); ++k) {
        m.values_[k] /= area;
        const double t = first_offset + static_cast<double>(k) * spacing;
        mean += spacing * m.values_[k] * t;
        second += spacing * m.values_[k] * t * t;
    }
    // piecewise-linear interpolation adds spacing^2/6 to the node variance
    m.sigma_ = std::sqrt(std::max(second - mean * mean + spacing * spacing / 6.0, 1e-12));
    return m;
}

double LsfModel::value(double x) const {
    if (form_ == LsfForm::gaussian) return gaussian_density(x, sigma_);
    const double u = (x - first_offset_) / spacing_;
    if (u <= 0.0 || u >= static_cast<double>(values_.size() - 1)) return 0.0;
    const auto k = static_cast<std::size_t>(u);
    const double f = u - static_cast<double>(k);
    return values_[k] * (1.0 - f) + values_[k + 1] * f;
}

double LsfModel::derivative(double x) const {
    if (form_ == LsfForm::gaussian) return -x / (sigma_ * sigma_) * gaussian_density(x, sigma_);
    const double u = (x - first_offset_) / spacing_;
    if (u <= 0.0 || u >= static_cast<double>(values_.size() - 1)) return 0.0;
    const auto k = static_cast<std::size_t>(u);
    return (values_[k + 1] - values_[k]) / spacing_;
}

std::complex<double> LsfModel::fourier(double nu) const {
    if (nu == 0.0) return {1.0, 0.0};
    if (form_ == LsfForm::gaussian) return {std::exp(-2.0 * kPi * kPi * sigma_ * sigma_ * nu * nu), 0.0};
    std::complex<double> sum = 0.0;
    for (std::size_t k = 0; k < values_.size(); ++k) {
        if (values_[k] == 0.0) continue;
        const double t = first_offset_ + static_cast<double>(k) * spacing_;
        sum += values_[k] * std::polar(1.0, -2.0 * kPi * nu * t);
    }
    const double s = sinc(nu * spacing_);
    return spacing_ * s * s * sum;
}

double LsfModel::support_halfwidth() const {
    if (form_ == LsfForm::gaussian) return 12.0 * sigma_;
    const double last = first_offset_ + static_cast<double>(values_.size() - 1) * spacing_;
    return std::max(std::abs(first_offset_), std::abs(last));
}

// ---------------------------------------------------------------------------
// stacking

namespace {

struct SpotState {
    std::vector<double> x;
    std::vector<double> y;  // excess over baseline
    double center = 0.0;
    double amplitude = 0.0;
};

// Fit amplitude and center of one spot against a fixed-width gaussian.
void refit_spot(SpotState& spot, double sigma) {
    const auto n = static_cast<Eigen::Index>(spot.x.size());
    ResidualFn fn = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r.resize(n);
        if (jac) jac->resize(n, 2);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double d = spot.x[static_cast<std::size_t>(i)] - p[1];
            const double g = gaussian_density(d, sigma);
            r[i] = spot.y[static_cast<std::size_t>(i)] - p[0] * g;
            if (jac) {
                (*jac)(i, 0) = -g;
                (*jac)(i, 1) = -p[0] * g * d / (sigma * sigma);
            }
        }
    };
    LmOptions opts;
    opts.max_iterations = 100;
    opts.cost_rtol = 1e-15;
    opts.step_tol = 1e-10;
    Eigen::Vector2d start(spot.amplitude, spot.center);
    LmResult res = levenberg_marquardt(fn, start, opts);
    if (!res.diverged && std::isfinite(res.params[1]) && res.params[0] > 0.0) {
        spot.amplitude = res.params[0];
        spot.center = res.params[1];
    }
}

std::vector<StackedSample> collect(const std::vector<SpotState>& spots) {
    std::vector<StackedSample> out;
    for (const SpotState& s : spots) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            out.push_back({s.x[i] - s.center, s.y[i] / s.amplitude, 1.0});
        }
    }
    return out;
}

}  // namespace

std::vector<StackedSample> stack_isolated(std::span<const Profile> profiles, std::span<const NoiseEstimate> noise,
                                          const StackOptions& options) {
    if (profiles.empty()) throw InvalidArgument("no profiles to stack");
    if (noise.size() != profiles.size()) throw InvalidArgument("one noise estimate per profile required");

    std::vector<SpotState> spots(profiles.size());
    for (std::size_t p = 0; p < profiles.size(); ++p) {
        SpotState& s = spots[p];
        double sum = 0.0, moment = 0.0;
        for (std::size_t i = 0; i < profiles[p].size(); ++i) {
            const double x = profiles[p].x(i);
            const double y = profiles[p].intensities[i] - noise[p].baseline;
            s.x.push_back(x);
            s.y.push_back(y);
            sum += y;
            moment += x * y;
        }
        if (!(sum > 0.0)) throw DegenerateSpread("profile " + std::to_string(p) + " has no signal above baseline");
        s.amplitude = sum;
        s.center = moment / sum;
    }

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        const auto samples = collect(spots);
        const double sigma = fit_lsf(samples, LsfForm::gaussian).model.sigma_px();
        double moved = 0.0;
        for (SpotState& s : spots) {
            const double before = s.center;
            refit_spot(s, sigma);
            moved = std::max(moved, std::abs(s.center - before));
        }
        if (moved < options.center_tol) break;
    }
    return collect(spots);
}

// ---------------------------------------------------------------------------
// fitting

namespace {

LsfFit fit_gaussian(std::span<const StackedSample> samples) {
    double wsum = 0.0, m0 = 0.0, m1 = 0.0, vmax = 0.0;
    double lo = samples.front().offset, hi = samples.front().offset;
    for (const auto& s : samples) {
        const double v = std::max(s.value, 0.0);
        m0 += s.weight * v;
        m1 += s.weight * v * s.offset;
        vmax = std::max(vmax, s.value);
        wsum += s.weight;
        lo = std::min(lo, s.offset);
        hi = std::max(hi, s.offset);
    }
    if (!(m0 > 0.0) || !(wsum > 0.0)) throw DegenerateSpread("stacked samples carry no positive signal");
    const double c0 = m1 / m0;
    double m2 = 0.0;
    for (const auto& s : samples) m2 += s.weight * std::max(s.value, 0.0) * (s.offset - c0) * (s.offset - c0);
    const double sigma0 = std::sqrt(m2 / m0);
    if (!(sigma0 > 0.0) || hi - lo < 4.0 * sigma0) {
        throw DegenerateSpread("stacked offsets span less than 4 sigma");
    }

    const auto n = static_cast<Eigen::Index>(samples.size());
    ResidualFn fn = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r.resize(n);
        if (jac) jac->resize(n, 3);
        const double sigma = p[2];
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& s = samples[static_cast<std::size_t>(i)];
            const double sw = std::sqrt(s.weight);
            const double d = s.offset - p[1];
            const double g = gaussian_density(d, sigma);
            r[i] = sw * (s.value - p[0] * g);
            if (jac) {
                (*jac)(i, 0) = -sw * g;
                (*jac)(i, 1) = -sw * p[0] * g * d / (sigma * sigma);
                (*jac)(i, 2) = -sw * p[0] * g * (d * d / (sigma * sigma * sigma) - 1.0 / sigma);
            }
        }
    };
    LmOptions opts;
    opts.max_iterations = 200;
    opts.cost_rtol = 1e-15;
    opts.step_tol = 1e-12;
    Eigen::Vector3d start(vmax * std::sqrt(2.0 * kPi) * sigma0, c0, sigma0);
    LmResult res = levenberg_marquardt(fn, start, opts, [](Eigen::VectorXd& p) { p[2] = std::max(p[2], 1e-6); });
    if (res.diverged || !res.params.allFinite() || !(res.params[2] > 0.0)) {
        throw NonConvergence("gaussian LSF fit did not converge");
    }
    LsfFit fit;
    fit.model = LsfModel::gaussian(res.params[2]);
    fit.center = res.params[1];
    fit.residual_rms = std::sqrt(res.cost / wsum);
    fit.sample_count = samples.size();
    return fit;
}

LsfFit fit_table(std::span<const StackedSample> samples, double spacing) {
    double lo = samples.front().offset, hi = samples.front().offset;
    for (const auto& s : samples) {
        lo = std::min(lo, s.offset);
        hi = std::max(hi, s.offset);
    }
    if (!(hi - lo > 2.0 * spacing)) throw DegenerateSpread("stacked offsets too narrow for a table");
    const auto k0 = static_cast<long>(std::floor(lo / spacing));
    const auto k1 = static_cast<long>(std::ceil(hi / spacing));
    const auto nodes = static_cast<Eigen::Index>(k1 - k0 + 1);

    // Weighted least squares on the hat-function basis, with a weak
    // second-difference penalty so nodes without samples stay determined.
    Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(nodes, nodes);
    Eigen::VectorXd atb = Eigen::VectorXd::Zero(nodes);
    double wsum = 0.0;
    for (const auto& s : samples) {
        const double u = s.offset / spacing - static_cast<double>(k0);
        auto k = static_cast<Eigen::Index>(std::floor(u));
        k = std::clamp<Eigen::Index>(k, 0, nodes - 2);
        const double f = u - static_cast<double>(k);
        const double b0 = 1.0 - f, b1 = f;
        ata(k, k) += s.weight * b0 * b0;
        ata(k, k + 1) += s.weight * b0 * b1;
        ata(k + 1, k) += s.weight * b0 * b1;
        ata(k + 1, k + 1) += s.weight * b1 * b1;
        atb[k] += s.weight * b0 * s.value;
        atb[k + 1] += s.weight * b1 * s.value;
        wsum += s.weight;
    }
    const double ridge = 1e-6 * std::max(ata.trace() / static_cast<double>(nodes), 1e-12);
    for (Eigen::Index k = 1; k + 1 < nodes; ++k) {
        const Eigen::Index idx[3] = {k - 1, k, k + 1};
        const double c[3] = {1.0, -2.0, 1.0};
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) ata(idx[a], idx[b]) += ridge * c[a] * c[b];
    }
    const Eigen::VectorXd coef = ata.ldlt().solve(atb);
    if (!coef.allFinite()) throw NonConvergence("LSF table solve failed");

    std::vector<double> values(coef.data(), coef.data() + coef.size());
    LsfFit fit{LsfModel::empirical(static_cast<double>(k0) * spacing, spacing, std::move(values)), 0.0, 0.0,
               samples.size()};
    const auto& table = fit.model.table();
    double centroid = 0.0;
    for (std::size_t k = 0; k < table.size(); ++k) {
        centroid += spacing * table[k] * (fit.model.first_offset() + static_cast<double>(k) * spacing);
    }
    fit.center = centroid;
    double ss = 0.0;
    for (const auto& s : samples) {
        const double r = s.value - fit.model.value(s.offset);
        ss += s.weight * r * r;
    }
    fit.residual_rms = std::sqrt(ss / wsum);
    return fit;
}

}  // namespace

LsfFit fit_lsf(std::span<const StackedSample> samples, LsfForm form, double table_spacing) {
    if (samples.size() < 10) throw DegenerateSpread("need at least 10 stacked samples");
    return form == LsfForm::gaussian ? fit_gaussian(samples) : fit_table(samples, table_spacing);
}

// ---------------------------------------------------------------------------
// persistence

void write_lsf_calibration(const std::filesystem::path& path, const LsfCalibration& calib) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << std::setprecision(17);
    out << "# line spread function calibration\n";
    out << "form = " << (calib.model.form() == LsfForm::gaussian ? "gaussian" : "empirical") << "\n";
    out << "sigma_px = " << calib.model.sigma_px() << "\n";
    out << "residual_rms = " << calib.residual_rms << "\n";
    out << "sample_count = " << calib.sample_count << "\n";
    if (calib.ia_counts) out << "ia_counts = " << *calib.ia_counts << "\n";
    if (calib.pixel_scale_nm) out << "pixel_scale_nm = " << *calib.pixel_scale_nm << "\n";
    if (calib.sigma_uncertainty_nm) out << "sigma_uncertainty_nm = " << *calib.sigma_uncertainty_nm << "\n";
    if (calib.model.form() == LsfForm::empirical) {
        out << "spacing_px = " << calib.model.spacing() << "\n";
        out << "[table]\n";
        const auto& t = calib.model.table();
        for (std::size_t k = 0; k < t.size(); ++k) {
            out << calib.model.first_offset() + static_cast<double>(k) * calib.model.spacing() << " " << t[k] << "\n";
        }
    }
    if (!out) throw DataError("write failed: " + path.string());
}

LsfCalibration read_lsf_calibration(const std::filesystem::path& path) {
    const KeyValueFile kv = read_key_value(path);
    LsfCalibration calib;
    const std::string form = kv.get("form").value_or("gaussian");
    if (form == "gaussian") {
        auto sigma = kv.get_double("sigma_px");
        if (!sigma) throw DataError(path.string() + ": missing sigma_px");
        calib.model = LsfModel::gaussian(*sigma);
    } else if (form == "empirical") {
        std::vector<double> offsets, values;
        for (const std::string& line : kv.table) {
            std::istringstream ls(line);
            double o = 0.0, v = 0.0;
            if (!(ls >> o >> v)) throw DataError(path.string() + ": bad table line: " + line);
            offsets.push_back(o);
            values.push_back(v);
        }
        if (offsets.size() < 2) throw DataError(path.string() + ": LSF table too short");
        const double spacing = kv.get_double("spacing_px").value_or(offsets[1] - offsets[0]);
        calib.model = LsfModel::empirical(offsets.front(), spacing, std::move(values));
    } else {
        throw DataError(path.string() + ": unknown LSF form '" + form + "'");
    }
    calib.residual_rms = kv.get_double("residual_rms").value_or(0.0);
    calib.sample_count = static_cast<std::size_t>(kv.get_int("sample_count").value_or(0));
    calib.ia_counts = kv.get_double("ia_counts");
    calib.pixel_scale_nm = kv.get_double("pixel_scale_nm");
    calib.sigma_uncertainty_nm = kv.get_double("sigma_uncertainty_nm");
    return calib;
}

}  // namespace latticeloc
