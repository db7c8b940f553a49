#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rffi/channel.hpp"
#include "rffi/cnn.hpp"
#include "rffi/errors.hpp"
#include "rffi/experiment.hpp"
#include "rffi/fingerprint.hpp"
#include "rffi/impairments.hpp"
#include "rffi/manifest.hpp"
#include "rffi/metrics.hpp"
#include "rffi/receiver.hpp"
#include "rffi/signal.hpp"

namespace py = pybind11;
using namespace rffi;

namespace {

using CArray = py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>;
using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

CArray to_numpy(const ComplexSignal& s)
{
    CArray out(static_cast<py::ssize_t>(s.size()));
    std::copy(s.samples.begin(), s.samples.end(), out.mutable_data());
    return out;
}

ComplexSignal from_numpy(const CArray& a, double fs)
{
    require(a.ndim() == 1, "expected a 1-D complex array");
    ComplexSignal s;
    s.sample_rate_hz = fs;
    s.samples.assign(a.data(), a.data() + a.size());
    return s;
}

template <typename T>
py::array_t<T> matrix_to_numpy(const Matrix<T>& m)
{
    py::array_t<T> out({static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(m.cols())});
    std::copy(m.values().begin(), m.values().end(), out.mutable_data());
    return out;
}

RealMatrix real_from_numpy(const DArray& a)
{
    require(a.ndim() == 2, "expected a 2-D array");
    RealMatrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), m.values().begin());
    return m;
}

Spectrogram spectrogram_from(const CArray& a, PowerLevel level)
{
    require(a.ndim() == 2, "expected a 2-D complex array");
    Spectrogram s;
    s.bins = ComplexMatrix(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), s.bins.values().begin());
    s.power_level = level;
    return s;
}

py::array_t<std::uint8_t> image_to_numpy(const FingerprintImage& img)
{
    py::array_t<std::uint8_t> out({static_cast<py::ssize_t>(img.height), static_cast<py::ssize_t>(img.width)});
    std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
    return out;
}

}  // namespace

PYBIND11_MODULE(rffi, m)
{
    m.doc() = "LoRa RF fingerprinting workbench: PA-nonlinearity quotient features and CNN classification";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    py::class_<LoraConfig>(m, "LoraConfig")
        .def(py::init<>())
        .def_readwrite("carrier_freq_hz", &LoraConfig::carrier_freq_hz)
        .def_readwrite("bandwidth_hz", &LoraConfig::bandwidth_hz)
        .def_readwrite("spreading_factor", &LoraConfig::spreading_factor)
        .def_readwrite("sample_rate_hz", &LoraConfig::sample_rate_hz)
        .def_readwrite("preamble_symbols", &LoraConfig::preamble_symbols)
        .def_readwrite("coding_rate", &LoraConfig::coding_rate)
        .def("validate", &LoraConfig::validate)
        .def("samples_per_symbol", &LoraConfig::samples_per_symbol)
        .def("preamble_samples", &LoraConfig::preamble_samples)
        .def("symbol_duration_s", &LoraConfig::symbol_duration_s);

    m.def("upchirp", [](const LoraConfig& c) { return to_numpy(upchirp(c)); });
    m.def("build_preamble", [](const LoraConfig& c) { return to_numpy(build_preamble(c)); });
    m.def("frame_count", py::overload_cast<const LoraConfig&, std::size_t, std::size_t>(&frame_count),
          py::arg("config"), py::arg("window") = 1024, py::arg("hop") = 512);

    py::class_<SalehParams>(m, "SalehParams")
        .def(py::init<>())
        .def_readwrite("alpha_a", &SalehParams::alpha_a)
        .def_readwrite("beta_a", &SalehParams::beta_a)
        .def_readwrite("alpha_phi", &SalehParams::alpha_phi)
        .def_readwrite("beta_phi", &SalehParams::beta_phi);

    py::enum_<PowerLevel>(m, "PowerLevel").value("HIGH", PowerLevel::kHigh).value("LOW", PowerLevel::kLow);

    py::class_<DeviceProfile>(m, "DeviceProfile")
        .def(py::init<>())
        .def_readwrite("device_id", &DeviceProfile::device_id)
        .def_readwrite("pa", &DeviceProfile::pa)
        .def_readwrite("power_high_dbm", &DeviceProfile::power_high_dbm)
        .def_readwrite("power_low_dbm", &DeviceProfile::power_low_dbm)
        .def_readwrite("drive_low", &DeviceProfile::drive_low)
        .def("drive", &DeviceProfile::drive);

    m.def("saleh_am_am", &saleh_am_am);
    m.def("saleh_am_pm", &saleh_am_pm);
    m.def(
        "apply_pa",
        [](const CArray& x, const DeviceProfile& d, PowerLevel level, double fs) {
            return to_numpy(apply_pa(from_numpy(x, fs), d, level));
        },
        py::arg("signal"), py::arg("device"), py::arg("level"), py::arg("sample_rate_hz") = 1e6);
    m.def("sample_device_population", &sample_device_population, py::arg("n"), py::arg("nominal"),
          py::arg("spread"), py::arg("seed"));

    m.def(
        "synchronize",
        [](const CArray& rx, const CArray& t) { return synchronize(from_numpy(rx, 1.0), from_numpy(t, 1.0)); },
        py::arg("rx"), py::arg("template"));
    m.def(
        "stft",
        [](const CArray& x, std::size_t window, std::size_t hop, bool rectangular) {
            StftConfig cfg{window, hop, rectangular ? WindowKind::kRectangular : WindowKind::kHann};
            return matrix_to_numpy(stft(from_numpy(x, 1.0), cfg).bins);
        },
        py::arg("signal"), py::arg("window") = 1024, py::arg("hop") = 512, py::arg("rectangular") = false);
    m.def(
        "quotient_db",
        [](const CArray& high, const CArray& low) {
            return matrix_to_numpy(
                to_db(quotient(spectrogram_from(high, PowerLevel::kHigh), spectrogram_from(low, PowerLevel::kLow)))
                    .values);
        },
        py::arg("high"), py::arg("low"));
    m.def(
        "render_image",
        [](const DArray& db, std::size_t h, std::size_t w, double lo, double hi) {
            return image_to_numpy(render_image(real_from_numpy(db), h, w, lo, hi));
        },
        py::arg("matrix"), py::arg("height"), py::arg("width"), py::arg("clip_lo"), py::arg("clip_hi"));
    m.def(
        "peak_correlation",
        [](const CArray& high, const CArray& low) {
            return peak_correlation(spectrogram_from(high, PowerLevel::kHigh), spectrogram_from(low, PowerLevel::kLow));
        },
        py::arg("high"), py::arg("low"));

    m.def(
        "layer_parameter_counts",
        [](std::size_t input_size, std::size_t classes) {
            return build_model<float>(input_size, classes, 0).parameter_counts();
        },
        py::arg("input_size"), py::arg("num_classes"));
    m.def("feature_map_size", &feature_map_size);

    m.def(
        "roc_auc",
        [](const std::vector<double>& scores, const std::vector<bool>& positive) {
            require(scores.size() == positive.size(), "scores and labels differ in length");
            std::vector<ScoredSample> s;
            for (std::size_t i = 0; i < scores.size(); ++i) s.push_back({scores[i], positive[i]});
            const RocCurve c = roc_curve(s);
            std::vector<std::tuple<double, double, double>> pts;
            for (const RocPoint& p : c.points) pts.emplace_back(p.threshold, p.tpr, p.fpr);
            return py::make_tuple(c.auc, pts);
        },
        py::arg("scores"), py::arg("positive"));

    m.def("default_manifest", [] { return manifest_to_json(default_manifest()); });
    m.def(
        "gen_dataset",
        [](const std::string& manifest_json, const std::filesystem::path& out) {
            const ExperimentManifest man = manifest_from_json(manifest_json);
            py::gil_scoped_release release;
            std::vector<std::tuple<std::string, std::size_t, std::size_t>> rows;
            for (const PhaseSummary& s : generate_dataset(man, out)) rows.emplace_back(s.phase, s.accepted, s.removed);
            return rows;
        },
        py::arg("manifest_json"), py::arg("out"));
    m.def(
        "train",
        [](const std::filesystem::path& dataset, const std::filesystem::path& out, int epochs, std::uint64_t seed,
           const std::string& feature) {
            const FeatureKind kind = feature_from_string(feature);
            py::gil_scoped_release release;
            const LabeledImages data = load_dataset(dataset, kind);
            TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.seed = seed;
            TrainResult r;
            const CnnModel model = train_classifier(data, cfg, &r);
            write_model(out, model);
            write_model_info(out, {"base", kind, data.classes, min_per_device(data), seed, epochs, r.epoch_loss});
            return r.epoch_loss;
        },
        py::arg("dataset"), py::arg("out"), py::arg("epochs") = 30, py::arg("seed") = 1,
        py::arg("feature") = "quotient");
    m.def(
        "evaluate",
        [](const std::filesystem::path& model_path, const std::filesystem::path& dataset, const std::string& feature) {
            const FeatureKind kind = feature_from_string(feature);
            py::gil_scoped_release release;
            CnnModel model = read_model(model_path);
            return evaluate_classifier(model, load_dataset(dataset, kind)).accuracy;
        },
        py::arg("model"), py::arg("dataset"), py::arg("feature") = "quotient");
    m.def(
        "transfer",
        [](const std::filesystem::path& base, const std::filesystem::path& dataset, const std::filesystem::path& out,
           std::size_t n_per_device, int epochs, std::uint64_t seed, const std::string& feature) {
            const FeatureKind kind = feature_from_string(feature);
            py::gil_scoped_release release;
            const CnnModel base_model = read_model(base);
            const LabeledImages data = take_per_device(load_dataset(dataset, kind), n_per_device);
            TransferConfig cfg;
            cfg.epochs = epochs;
            cfg.seed = seed;
            TrainResult r;
            const CnnModel model = transfer_classifier(base_model, data, cfg, &r);
            write_model(out, model);
            write_model_info(out, {"transfer", kind, data.classes, n_per_device, seed, epochs, r.epoch_loss});
            return r.epoch_loss;
        },
        py::arg("base"), py::arg("dataset"), py::arg("out"), py::arg("n_per_device"), py::arg("epochs") = 20,
        py::arg("seed") = 1, py::arg("feature") = "quotient");
    m.def(
        "detect_rogue",
        [](const std::filesystem::path& model_path, const std::filesystem::path& legit,
           const std::filesystem::path& rogue, const std::string& feature) {
            const FeatureKind kind = feature_from_string(feature);
            py::gil_scoped_release release;
            CnnModel model = read_model(model_path);
            const LabeledImages l = load_dataset(legit, kind);
            const LabeledImages r = load_dataset(rogue, kind);
            const auto info = read_model_info(model_path);
            const std::vector<std::string> classes = info ? info->classes : l.classes;
            return detect_rogue(model, l, r, classes).roc.auc;
        },
        py::arg("model"), py::arg("legit"), py::arg("rogue"), py::arg("feature") = "quotient");
}
