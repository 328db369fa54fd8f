#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "latticeloc/analysis.hpp"
#include "latticeloc/commands.hpp"
#include "latticeloc/errors.hpp"
#include "latticeloc/frame.hpp"
#include "latticeloc/lsf.hpp"
#include "latticeloc/simulator.hpp"
#include "latticeloc/spike.hpp"

namespace py = pybind11;
using namespace latticeloc;

PYBIND11_MODULE(_core, m) {
    m.doc() = "Atom localization in 1D lattice fluorescence profiles";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<IllConditioned>(m, "IllConditioned", base.ptr());
    py::register_exception<BaselineMisestimate>(m, "BaselineMisestimate", base.ptr());

    py::class_<Frame>(m, "Frame")
        .def(py::init<>())
        .def_readwrite("width", &Frame::width)
        .def_readwrite("height", &Frame::height)
        .def_readwrite("values", &Frame::values)
        .def_readwrite("pixel_scale", &Frame::pixel_scale)
        .def_readwrite("frame_id", &Frame::frame_id)
        .def_readwrite("sequence_id", &Frame::sequence_id)
        .def_readwrite("exposure", &Frame::exposure);

    py::class_<Profile>(m, "Profile")
        .def(py::init<>())
        .def(py::init([](std::vector<double> v, std::ptrdiff_t origin) {
                 Profile p;
                 p.intensities = std::move(v);
                 p.origin = origin;
                 return p;
             }),
             py::arg("intensities"), py::arg("origin") = 0)
        .def_readwrite("intensities", &Profile::intensities)
        .def_readwrite("origin", &Profile::origin)
        .def_readwrite("pixel_scale", &Profile::pixel_scale);

    py::class_<NoiseEstimate>(m, "NoiseEstimate")
        .def(py::init<double, double>(), py::arg("baseline") = 0.0, py::arg("sigma") = 0.0)
        .def_readwrite("baseline", &NoiseEstimate::baseline)
        .def_readwrite("sigma", &NoiseEstimate::sigma);

    py::class_<Roi>(m, "Roi")
        .def_readonly("start", &Roi::start)
        .def_readonly("end", &Roi::end)
        .def_readonly("roi_id", &Roi::roi_id);

    py::class_<SegmentParams>(m, "SegmentParams")
        .def(py::init<>())
        .def_readwrite("k_on", &SegmentParams::k_on)
        .def_readwrite("k_off", &SegmentParams::k_off)
        .def_readwrite("boxcar", &SegmentParams::boxcar)
        .def_readwrite("padding", &SegmentParams::padding)
        .def_readwrite("min_width", &SegmentParams::min_width);

    m.def("bin_vertical", [](const Frame& f) { return bin_vertical(f); });
    m.def("estimate_background", [](const Profile& p) { return estimate_background(p); });
    m.def("segment", &segment, py::arg("profile"), py::arg("noise"), py::arg("params") = SegmentParams{});

    py::class_<LsfModel>(m, "LsfModel")
        .def_static("gaussian", &LsfModel::gaussian, py::arg("sigma_px"))
        .def("value", &LsfModel::value)
        .def("fourier_abs", [](const LsfModel& l, double nu) { return std::abs(l.fourier(nu)); })
        .def_property_readonly("sigma_px", &LsfModel::sigma_px);

    py::class_<AnalysisCalib>(m, "AnalysisCalib")
        .def(py::init<>())
        .def_readwrite("ia", &AnalysisCalib::ia)
        .def_readwrite("reliability_tol", &AnalysisCalib::reliability_tol)
        .def_readwrite("lsf", &AnalysisCalib::lsf)
        .def_readwrite("pixel_scale", &AnalysisCalib::pixel_scale)
        .def_readwrite("mode_cutoff", &AnalysisCalib::mode_cutoff);

    py::class_<Spike>(m, "Spike")
        .def_readonly("amplitude", &Spike::amplitude)
        .def_readonly("position", &Spike::position);
    py::class_<SpikeFit>(m, "SpikeFit")
        .def_readonly("a0", &SpikeFit::a0)
        .def_readonly("atoms", &SpikeFit::atoms)
        .def_readonly("residual_rms", &SpikeFit::residual_rms)
        .def_readonly("converged", &SpikeFit::converged);
    py::class_<AtomCount>(m, "AtomCount")
        .def_readonly("n", &AtomCount::n)
        .def_readonly("ambiguous", &AtomCount::ambiguous)
        .def_readonly("total", &AtomCount::total);

    m.def("count_atoms", &count_atoms);
    m.def("locate_spikes", [](const Profile& roi, double a0, int n, const LsfModel& lsf) {
        return locate_spikes(roi, a0, n, lsf);
    });
    m.def("estimate_roi", &estimate_roi, py::arg("roi"), py::arg("noise"), py::arg("calib"), py::arg("n"));

    py::class_<AtomRecord>(m, "AtomRecord")
        .def_readonly("frame_id", &AtomRecord::frame_id)
        .def_readonly("sequence_id", &AtomRecord::sequence_id)
        .def_readonly("roi_id", &AtomRecord::roi_id)
        .def_readonly("position_nm", &AtomRecord::position_nm)
        .def_readonly("amplitude", &AtomRecord::amplitude)
        .def_readonly("reliable", &AtomRecord::reliable);
    py::class_<FrameAnalysis>(m, "FrameAnalysis")
        .def_readonly("records", &FrameAnalysis::records)
        .def_readonly("diagnostics", &FrameAnalysis::diagnostics);
    m.def("analyze_frame", &analyze_frame, py::arg("frame"), py::arg("calib"), py::arg("seg") = SegmentParams{});

    py::class_<LatticeCalib>(m, "LatticeCalib")
        .def(py::init<>())
        .def_readwrite("lambda_nm", &LatticeCalib::lambda_nm)
        .def_readwrite("site_nm", &LatticeCalib::site_nm);
    m.def("reliability_Fn", &reliability_Fn, py::arg("sigma_n"), py::arg("lattice") = LatticeCalib{});

    py::class_<SimConfig>(m, "SimConfig")
        .def(py::init<>())
        .def_readwrite("pixel_scale", &SimConfig::pixel_scale)
        .def_readwrite("sigma_sp_hor", &SimConfig::sigma_sp_hor)
        .def_readwrite("width", &SimConfig::width)
        .def_readwrite("height", &SimConfig::height)
        .def_readwrite("ia", &SimConfig::ia)
        .def_readwrite("baseline", &SimConfig::baseline)
        .def_readwrite("shot_noise", &SimConfig::shot_noise)
        .def_readwrite("readout_sigma", &SimConfig::readout_sigma)
        .def_readwrite("mean_atoms", &SimConfig::mean_atoms)
        .def_readwrite("fixed_atoms", &SimConfig::fixed_atoms)
        .def_readwrite("on_site_loss", &SimConfig::on_site_loss)
        .def_readwrite("thermal_jitter_nm", &SimConfig::thermal_jitter_nm)
        .def_readwrite("drift_nm_per_s", &SimConfig::drift_nm_per_s)
        .def_readwrite("frames_per_sequence", &SimConfig::frames_per_sequence)
        .def("noiseless", &SimConfig::noiseless);

    py::class_<FrameAtomTruth>(m, "FrameAtomTruth")
        .def_readonly("site", &FrameAtomTruth::site)
        .def_readonly("position_nm", &FrameAtomTruth::position_nm)
        .def_readonly("position_px", &FrameAtomTruth::position_px)
        .def_readonly("survival", &FrameAtomTruth::survival);
    py::class_<FrameTruth>(m, "FrameTruth")
        .def_readonly("frame_id", &FrameTruth::frame_id)
        .def_readonly("atoms", &FrameTruth::atoms);
    py::class_<SequenceTruth>(m, "SequenceTruth").def_readonly("frames", &SequenceTruth::frames);
    py::class_<Dataset>(m, "Dataset")
        .def_readonly("frames", &Dataset::frames)
        .def_readonly("sequences", &Dataset::sequences);
    m.def("run_campaign", &run_campaign, py::arg("config"), py::arg("seed"), py::arg("sequences"),
          py::arg("jobs") = 1u, py::call_guard<py::gil_scoped_release>());
}
