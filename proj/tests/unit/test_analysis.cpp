#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "latticeloc/analysis.hpp"
#include "latticeloc/errors.hpp"
#include "support/oracles.hpp"

using namespace latticeloc;

namespace {

AtomRecord rec(const std::string& frame, double nm, int roi = 0, bool reliable = true) {
    AtomRecord r;
    r.frame_id = frame;
    r.sequence_id = "s";
    r.roi_id = roi;
    r.position_nm = nm;
    r.amplitude = 1.0;
    r.reliable = reliable;
    r.converged = true;
    return r;
}

double stddev(const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / (v.size() - 1));
}

}  // namespace

TEST(Lattice, Validation) {
    EXPECT_NO_THROW(LatticeCalib{}.validate());
    EXPECT_THROW((LatticeCalib{865.9, 400.0}.validate()), InvalidArgument);
    EXPECT_DOUBLE_EQ(LatticeCalib::from_wavelength(800.0).site_nm, 400.0);
}

TEST(AssignSite, Examples) {
    const LatticeCalib l;
    EXPECT_EQ(assign_site_separation(433.0, l), 1);
    EXPECT_EQ(assign_site_separation(870.0, l), 2);
    EXPECT_EQ(assign_site_separation(0.0, l), 0);
    EXPECT_EQ(assign_site_separation(0.5 * l.site_nm, l), 1);
    EXPECT_THROW(assign_site_separation(-1.0, l), InvalidArgument);
}

TEST(PairwiseDistances, Examples) {
    const LatticeCalib l;
    EXPECT_TRUE(pairwise_distances(std::vector<AtomRecord>{rec("f", 0.0)}, l).empty());
    const auto two = pairwise_distances(std::vector<AtomRecord>{rec("f", 0.0), rec("f", 433.0)}, l);
    ASSERT_EQ(two.size(), 1u);
    EXPECT_DOUBLE_EQ(two[0].distance_nm, 433.0);
    EXPECT_EQ(two[0].n_sites, 1);
    const std::vector<AtomRecord> four = {rec("f", 0.0), rec("f", 500.0), rec("f", 2000.0, 1), rec("f", 3100.0, 1)};
    EXPECT_EQ(pairwise_distances(four, l).size(), 6u);
}

TEST(PairwiseDistances, DropsRoisWithUnreliableAtoms) {
    const LatticeCalib l;
    const std::vector<AtomRecord> recs = {rec("f", 0.0), rec("f", 500.0), rec("f", 2000.0, 1), rec("f", 2400.0, 1, false)};
    EXPECT_EQ(pairwise_distances(recs, l).size(), 1u);
    auto ambiguous = recs;
    ambiguous[0].count_ambiguous = true;
    EXPECT_TRUE(pairwise_distances(ambiguous, l).empty());
}

TEST(MatchAndAverage, IdenticalFramesAreIdempotent) {
    const LatticeCalib l;
    std::vector<AtomRecord> seq;
    for (const char* f : {"a", "b", "c"}) {
        for (double x : {100.0, 540.0, 1800.0}) seq.push_back(rec(f, x));
    }
    const auto avg = match_and_average(seq, 3, l);
    const auto single = pairwise_distances(std::vector<AtomRecord>(seq.begin(), seq.begin() + 3), l);
    ASSERT_EQ(avg.samples.size(), single.size());
    for (std::size_t i = 0; i < single.size(); ++i) {
        EXPECT_NEAR(avg.samples[i].distance_nm, single[i].distance_nm, 1e-9);
        EXPECT_EQ(avg.samples[i].frames_averaged, 3);
    }
}

TEST(MatchAndAverage, SingleFrameIsIdentity) {
    const LatticeCalib l;
    const std::vector<AtomRecord> recs = {rec("a", 10.0), rec("a", 900.0), rec("a", 3000.0)};
    const auto avg = match_and_average(recs, 1, l);
    const auto single = pairwise_distances(recs, l);
    ASSERT_EQ(avg.samples.size(), single.size());
    for (std::size_t i = 0; i < single.size(); ++i) EXPECT_DOUBLE_EQ(avg.samples[i].distance_nm, single[i].distance_nm);
}

TEST(MatchAndAverage, MissingAtomExcludesItsPairs) {
    const LatticeCalib l;
    std::vector<AtomRecord> seq = {rec("a", 0.0), rec("a", 866.0), rec("a", 2165.0), rec("b", 0.0),
                                   rec("b", 2165.0), rec("c", 0.0), rec("c", 866.0), rec("c", 2165.0)};
    const auto avg = match_and_average(seq, 3, l);
    ASSERT_EQ(avg.samples.size(), 1u);
    EXPECT_NEAR(avg.samples[0].distance_nm, 2165.0, 1e-9);
    // the 866 nm atom of frames a and c
    EXPECT_EQ(avg.unmatched_atoms, 2u);
}

TEST(MatchAndAverage, ThreeFrameNoiseReduction) {
    const LatticeCalib l;
    const double sigma = 25.0;
    std::mt19937_64 rng(44);
    std::normal_distribution<double> g(0.0, sigma);
    std::vector<double> d;
    for (int t = 0; t < 10000; ++t) {
        std::vector<AtomRecord> seq;
        for (const char* f : {"a", "b", "c"}) {
            seq.push_back(rec(f, 1000.0 + g(rng)));
            seq.push_back(rec(f, 1000.0 + 4 * l.site_nm + g(rng)));
        }
        const auto avg = match_and_average(seq, 3, l);
        ASSERT_EQ(avg.samples.size(), 1u);
        d.push_back(avg.samples[0].distance_nm);
    }
    EXPECT_NEAR(stddev(d) / (sigma * std::sqrt(2.0) / std::sqrt(3.0)), 1.0, 0.05);
}

TEST(ReliabilityFn, FormulaAndOracles) {
    const LatticeCalib l;
    EXPECT_NEAR(reliability_Fn(100.0, l), 0.9696, 1e-4);
    EXPECT_NEAR(reliability_Fn(1e-3, l), 1.0, 1e-12);
    double prev = 1.1;
    for (double s : {20.0, 50.0, 100.0, 150.0, 200.0, 400.0}) {
        const double f = reliability_Fn(s, l);
        EXPECT_GT(f, 0.0);
        EXPECT_LE(f, 1.0);
        EXPECT_LT(f, prev);
        prev = f;
        EXPECT_NEAR(f, oracle::central_mass(s, 0.25 * l.lambda_nm), 1e-8);
    }
    EXPECT_THROW(reliability_Fn(0.0, l), InvalidArgument);
}

TEST(HistogramFit, RecoversPeakWidths) {
    const LatticeCalib l;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 100.0);
    std::vector<DistanceSample> samples;
    for (int n = 1; n <= 10; ++n) {
        for (int i = 0; i < 4000; ++i) {
            const double d = n * l.site_nm + g(rng);
            samples.push_back({d, assign_site_separation(d, l)});
        }
    }
    const HistogramFit fit = fit_distance_histogram(samples, l, 12);
    ASSERT_EQ(fit.peaks.size(), 13u);
    // per-peak scatter is about 3 percent at this overlap
    double mean = 0.0;
    for (int n = 1; n <= 10; ++n) {
        EXPECT_TRUE(fit.peaks[n].populated);
        EXPECT_NEAR(fit.peaks[n].sigma_n / 100.0, 1.0, 0.12) << "n=" << n;
        EXPECT_DOUBLE_EQ(fit.peaks[n].center_nm, n * l.site_nm);
        mean += 0.1 * fit.peaks[n].sigma_n / 100.0;
    }
    EXPECT_NEAR(mean, 1.0, 0.02);
    EXPECT_FALSE(fit.peaks[12].populated);
    EXPECT_EQ(fit.peaks[12].amplitude, 0.0);
    EXPECT_FALSE(fit.peaks[12].F_n.has_value());
}

TEST(HistogramFit, EmptyInteriorPeak) {
    const LatticeCalib l;
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 60.0);
    std::vector<DistanceSample> samples;
    for (int n : {5, 6, 8, 9}) {
        for (int i = 0; i < 300; ++i) {
            const double d = n * l.site_nm + g(rng);
            samples.push_back({d, assign_site_separation(d, l)});
        }
    }
    const HistogramFit fit = fit_distance_histogram(samples, l, 10);
    EXPECT_EQ(fit.peaks[7].amplitude, 0.0);
    EXPECT_FALSE(fit.peaks[7].F_n.has_value());
    EXPECT_THROW(fit_distance_histogram(std::vector<DistanceSample>(5), l, 3), InvalidArgument);
}

TEST(HistogramFit, FreeCentersFindThePeriod) {
    const LatticeCalib l;
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g(0.0, 80.0);
    std::vector<DistanceSample> samples;
    for (int n = 1; n <= 6; ++n) {
        for (int i = 0; i < 800; ++i) {
            const double d = n * l.site_nm + g(rng);
            samples.push_back({d, assign_site_separation(d, l)});
        }
    }
    HistogramFitOptions opts;
    opts.free_centers = true;
    for (bool shared : {false, true}) {
        opts.shared_sigma = shared;
        const HistogramFit fit = fit_distance_histogram(samples, l, 6, opts);
        for (int n = 1; n <= 6; ++n) EXPECT_NEAR(fit.peaks[n].center_nm, n * l.site_nm, 0.05 * l.site_nm);
    }
}

TEST(HistogramFit, ParametricBootstrap) {
    const LatticeCalib l;
    std::mt19937_64 rng(10);
    std::vector<DistanceSample> samples;
    const double widths[] = {0.0, 150.0, 110.0, 90.0};
    for (int n = 1; n <= 3; ++n) {
        std::normal_distribution<double> g(n * l.site_nm, widths[n]);
        for (int i = 0; i < 2000; ++i) {
            const double d = std::max(0.0, g(rng));
            samples.push_back({d, assign_site_separation(d, l)});
        }
    }
    const HistogramFit first = fit_distance_histogram(samples, l, 4);
    std::vector<DistanceSample> regenerated;
    for (int n = 1; n <= 3; ++n) {
        std::normal_distribution<double> g(n * l.site_nm, first.peaks[n].sigma_n);
        for (std::size_t i = 0; i < first.peaks[n].samples; ++i) {
            const double d = std::max(0.0, g(rng));
            regenerated.push_back({d, assign_site_separation(d, l)});
        }
    }
    const HistogramFit second = fit_distance_histogram(regenerated, l, 4);
    for (int n = 1; n <= 3; ++n) EXPECT_NEAR(second.peaks[n].sigma_n / first.peaks[n].sigma_n, 1.0, 0.08);
}

TEST(Loading, RecoversWidth) {
    const LatticeCalib l;
    std::mt19937_64 rng(12);
    std::normal_distribution<double> g(0.0, 9.5);
    std::vector<double> x;
    for (int i = 0; i < 10000; ++i) x.push_back(std::round(g(rng)) * l.site_nm);
    const LoadingModel m = fit_loading(x, l);
    EXPECT_NEAR(m.sigma_P_nm / (9.5 * l.site_nm), 1.0, 0.05);
    EXPECT_NEAR(oracle::simpson([&](double v) { return m.density(v); }, m.center_nm - 12 * m.sigma_P_nm,
                                m.center_nm + 12 * m.sigma_P_nm),
                1.0, 1e-6);
    EXPECT_THROW(fit_loading(std::vector<double>(40, 5.0), l), DegenerateSpread);
    EXPECT_THROW(fit_loading(std::vector<double>(5, 5.0), l), InvalidArgument);
}

TEST(PairModel, ClosedFormMatchesQuadrature) {
    LoadingModel m;
    m.sigma_P_nm = 9.5 * 432.95;
    m.Q0 = 5000.0;
    const double pi = std::numbers::pi;
    EXPECT_NEAR(pair_model_Q(m, 0.0) / (m.Q0 / (std::sqrt(pi) * m.sigma_P_nm)), 1.0, 1e-12);
    for (double d : {0.0, 433.0, 4000.0, 12000.0}) {
        const double oracle_q = oracle::pair_occurrence(m.Q0, m.sigma_P_nm, d);
        EXPECT_NEAR(pair_model_Q(m, d) / oracle_q, 1.0, 1e-6);
    }
    EXPECT_LT(pair_model_Q(m, 1e6), 1e-12);
    const double total = oracle::simpson([&](double d) { return pair_model_Q(m, d); }, 0.0, 20 * m.sigma_P_nm);
    EXPECT_NEAR(total / m.Q0, 1.0, 1e-6);
}

TEST(PairModel, FitRecoversWidthAndCount) {
    const LatticeCalib l;
    const double sigma_p = 9.5 * l.site_nm;
    std::mt19937_64 rng(77);
    std::normal_distribution<double> g(0.0, 9.5);
    std::vector<DistanceSample> samples;
    int loaded = 0;
    for (int i = 0; i < 5000; ++i) {
        const long a = std::lround(g(rng)), b = std::lround(g(rng));
        ++loaded;
        if (a == b) continue;
        const double d = std::abs(a - b) * l.site_nm;
        samples.push_back({d, assign_site_separation(d, l)});
    }
    const PairDistributionFit fit = fit_pair_distribution(samples, l);
    EXPECT_NEAR(fit.sigma_d_nm / (std::sqrt(2.0) * sigma_p), 1.0, 0.05);
    EXPECT_NEAR(fit.model.sigma_P_nm / sigma_p, 1.0, 0.05);
    EXPECT_NEAR(fit.model.Q0 / loaded, 1.0, 0.03);
}
