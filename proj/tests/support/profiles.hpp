#pragma once

#include <vector>

#include "latticeloc/frame.hpp"
#include "latticeloc/lsf.hpp"
#include "latticeloc/simulator.hpp"
#include "latticeloc/spike.hpp"

namespace testing_support {

/// a0 + sum_k a_k L(x - xi_k), sampled on pixels origin .. origin + len - 1.
inline latticeloc::Profile spike_profile(std::size_t len, double a0, const std::vector<double>& positions,
                                         const std::vector<double>& amplitudes, const latticeloc::LsfModel& lsf,
                                         std::ptrdiff_t origin = 0) {
    latticeloc::Profile p;
    p.origin = origin;
    p.intensities.assign(len, a0);
    for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t k = 0; k < positions.size(); ++k) p.intensities[i] += amplitudes[k] * lsf.value(p.x(i) - positions[k]);
    }
    return p;
}

/// Binned profile of a frame with atoms on the given sites.
inline latticeloc::RenderedFrame render_sites(const std::vector<long>& sites, const latticeloc::SimConfig& cfg,
                                              latticeloc::Rng& rng) {
    return latticeloc::render_frame(latticeloc::place_atoms(sites, cfg), cfg, rng);
}

inline latticeloc::AnalysisCalib calib_for(const latticeloc::SimConfig& cfg) {
    latticeloc::AnalysisCalib c;
    c.ia = cfg.ia;
    c.lsf = latticeloc::LsfModel::gaussian(cfg.sigma_px());
    c.pixel_scale = cfg.pixel_scale;
    return c;
}

}  // namespace testing_support
