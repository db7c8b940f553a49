#include "rffi/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "rffi/errors.hpp"
#include "rffi/random.hpp"

namespace rffi {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::uint64_t fnv1a(const std::string& s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Runs fn(i) for i in [0, n) on `workers` threads. The first exception wins.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn)
{
    std::size_t threads = workers > 0 ? static_cast<std::size_t>(workers)
                                      : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!error) error = std::current_exception();
                    next = n;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

std::string image_name(const std::string& device, int packet, FeatureKind kind)
{
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s_%04d_%s.pgm", device.c_str(), packet, to_string(kind));
    return buf;
}

std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

PhaseData generate_phase(const ExperimentManifest& manifest, const std::string& phase_name)
{
    manifest.validate();
    const auto ph = std::find_if(manifest.phases.begin(), manifest.phases.end(),
                                 [&](const PhaseSpec& p) { return p.name == phase_name; });
    if (ph == manifest.phases.end()) throw ValidationError("unknown phase: " + phase_name);
    const PipelineConfig& cfg = manifest.pipeline;
    const ChannelSpec& channel = manifest.preset(ph->preset).spec;
    ChannelSpec fast = fast_preset(ph->fast_doppler_hz).spec;
    fast.snr_db = channel.snr_db;

    std::vector<DeviceEntry> devices;
    std::vector<std::string> classes;
    for (DeviceEntry& d : build_population(manifest)) {
        if (d.label >= 0) classes.push_back(d.profile.device_id);
        const bool want = ph->devices == DeviceGroup::kAll || (ph->devices == DeviceGroup::kLegit) == (d.label >= 0);
        if (want) devices.push_back(std::move(d));
    }

    // Transmit waveforms and the chamber enrollment are per device.
    std::vector<DeviceWaveforms> tx(devices.size());
    std::vector<EnrollmentRecord> enrolled(devices.size());
    parallel_for(devices.size(), manifest.workers, [&](std::size_t i) {
        tx[i] = transmit_waveforms(cfg, devices[i].profile);
        enrolled[i] = enroll_device(cfg, tx[i], derive_seed(manifest.seed, {0xe9011, devices[i].index}));
    });

    const std::size_t per = static_cast<std::size_t>(ph->packets_per_device);
    const std::size_t jobs = devices.size() * per;
    const std::size_t nkinds = manifest.features.size();
    const std::size_t side = cfg.image.size;
    // Everything that outlives a job is allocated up front. Small allocations
    // made between the large per-pair temporaries fragment the heap badly.
    struct Outcome {
        std::uint64_t seed = 0;
        bool fast = false;
        DistortionResult screen;
    };
    std::vector<Outcome> results(jobs);
    std::vector<std::uint8_t> pixels(jobs * nkinds * side * side);
    const std::uint64_t preset_key = fnv1a(ph->preset);
    const auto packet_of = [&](std::size_t job) { return ph->packet_offset + static_cast<int>(job % per); };
    parallel_for(jobs, manifest.workers, [&](std::size_t job) {
        const std::size_t di = job / per;
        Outcome& o = results[job];
        o.seed = derive_seed(manifest.seed,
                             {0xda7a, devices[di].index, static_cast<std::uint64_t>(packet_of(job)), preset_key});
        Rng pick(derive_seed(o.seed, {0xfa57}));
        o.fast = ph->fast_fraction > 0.0 && pick.uniform() < ph->fast_fraction;
        const ReceivedPair pair = receive_pair(cfg, tx[di], o.fast ? fast : channel, o.seed);
        o.screen = distortion_check(pair.high, pair.low, enrolled[di], cfg.theta);
        if (o.screen.decision != Screening::kAccept) return;
        for (std::size_t k = 0; k < nkinds; ++k) {
            const FingerprintImage img = feature_image(cfg, pair, manifest.features[k]);
            require(img.pixels.size() == side * side, "feature image size differs from the manifest");
            std::copy(img.pixels.begin(), img.pixels.end(), pixels.begin() + static_cast<std::ptrdiff_t>((job * nkinds + k) * side * side));
        }
    });

    PhaseData out;
    DatasetIndex& index = out.index;
    index.phase = ph->name;
    index.preset = ph->preset;
    index.manifest_seed = manifest.seed;
    index.image_size = side;
    index.features = manifest.features;
    index.classes = classes;
    for (std::size_t job = 0; job < jobs; ++job) {
        const Outcome& o = results[job];
        const DeviceEntry& dev = devices[job / per];
        const std::string& id = dev.profile.device_id;
        if (o.screen.decision == Screening::kAccept) {
            DatasetEntry e{id, dev.label, packet_of(job), o.seed, o.fast, o.screen.rho_k, o.screen.rho_d, {}};
            for (std::size_t k = 0; k < nkinds; ++k) {
                const FeatureKind kind = manifest.features[k];
                const auto first = pixels.begin() + static_cast<std::ptrdiff_t>((job * nkinds + k) * side * side);
                FingerprintImage img;
                img.height = img.width = side;
                img.pixels.assign(first, first + static_cast<std::ptrdiff_t>(side * side));
                img.kind = kind;
                img.label = id;
                out.images[kind].push_back(std::move(img));
                e.files[kind] = image_name(id, e.packet, kind);
            }
            index.entries.push_back(std::move(e));
        } else {
            char reason[96];
            std::snprintf(reason, sizeof reason, "rho_d %.4f exceeds theta %.4f", o.screen.rho_d, cfg.theta);
            index.removed.push_back({id, dev.label, packet_of(job), o.seed, o.fast, o.screen.rho_k, o.screen.rho_d,
                                     reason});
        }
    }
    for (FeatureKind kind : manifest.features) out.images[kind];
    return out;
}

PhaseSummary summarize(const DatasetIndex& index)
{
    PhaseSummary s;
    s.phase = index.phase;
    s.accepted = index.entries.size();
    s.removed = index.removed.size();
    for (const DatasetEntry& e : index.entries) s.fast_injected += e.fast;
    for (const RemovedPair& r : index.removed) {
        s.fast_injected += r.fast;
        s.fast_removed += r.fast;
    }
    return s;
}

namespace {

json index_json(const DatasetIndex& index)
{
    json j;
    j["format"] = "rffi-dataset-1";
    j["phase"] = index.phase;
    j["preset"] = index.preset;
    j["manifest_seed"] = index.manifest_seed;
    j["image_size"] = index.image_size;
    json features = json::array();
    for (FeatureKind f : index.features) features.push_back(to_string(f));
    j["features"] = features;
    j["classes"] = index.classes;
    json entries = json::array();
    for (const DatasetEntry& e : index.entries) {
        json files = json::object();
        for (const auto& [kind, name] : e.files) files[to_string(kind)] = name;
        entries.push_back({{"device", e.device},
                           {"label", e.label},
                           {"packet", e.packet},
                           {"seed", e.seed},
                           {"fast", e.fast},
                           {"rho_k", e.rho_k},
                           {"rho_d", e.rho_d},
                           {"files", files}});
    }
    j["entries"] = entries;
    json removed = json::array();
    for (const RemovedPair& r : index.removed)
        removed.push_back({{"device", r.device},
                           {"label", r.label},
                           {"packet", r.packet},
                           {"seed", r.seed},
                           {"fast", r.fast},
                           {"rho_k", r.rho_k},
                           {"rho_d", r.rho_d},
                           {"reason", r.reason}});
    j["removed"] = removed;
    return j;
}

}  // namespace

void write_index(const fs::path& path, const DatasetIndex& index)
{
    write_text(path, index_json(index).dump(2) + "\n");
}

DatasetIndex read_index(const fs::path& path)
{
    const std::string text = read_text(path);
    DatasetIndex index;
    try {
        const json j = json::parse(text);
        if (j.value("format", std::string()) != "rffi-dataset-1")
            throw ValidationError(path.string() + " is not an rffi dataset index");
        index.phase = j.at("phase");
        index.preset = j.at("preset");
        index.manifest_seed = j.at("manifest_seed");
        index.image_size = j.at("image_size");
        for (const json& f : j.at("features")) index.features.push_back(feature_from_string(f));
        index.classes = j.at("classes").get<std::vector<std::string>>();
        for (const json& e : j.at("entries")) {
            DatasetEntry d;
            d.device = e.at("device");
            d.label = e.at("label");
            d.packet = e.at("packet");
            d.seed = e.at("seed");
            d.fast = e.at("fast");
            d.rho_k = e.at("rho_k");
            d.rho_d = e.at("rho_d");
            for (const auto& [k, v] : e.at("files").items()) d.files[feature_from_string(k)] = v.get<std::string>();
            index.entries.push_back(std::move(d));
        }
        for (const json& r : j.at("removed")) {
            index.removed.push_back({r.at("device"), r.at("label"), r.at("packet"), r.at("seed"), r.at("fast"),
                                     r.at("rho_k"), r.at("rho_d"), r.at("reason")});
        }
    } catch (const json::exception& e) {
        throw IoError("malformed dataset index " + path.string() + ": " + e.what());
    }
    return index;
}

std::vector<PhaseSummary> generate_dataset(const ExperimentManifest& manifest, const fs::path& out)
{
    manifest.validate();
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
    write_manifest(out / "manifest.json", manifest);

    std::vector<PhaseSummary> summaries;
    json summary = json::array();
    for (const PhaseSpec& ph : manifest.phases) {
        PhaseData data = generate_phase(manifest, ph.name);
        const fs::path dir = out / ph.name;
        fs::create_directories(dir, ec);
        if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
        for (FeatureKind kind : manifest.features) {
            const auto& imgs = data.images.at(kind);
            for (std::size_t i = 0; i < imgs.size(); ++i)
                write_pgm(dir / data.index.entries[i].files.at(kind), imgs[i]);
        }
        write_index(dir / "index.json", data.index);
        std::string csv = "device,packet,fast,rho_k,rho_d,reason\n";
        for (const RemovedPair& r : data.index.removed)
            csv += r.device + "," + std::to_string(r.packet) + "," + (r.fast ? "1" : "0") + "," +
                   format_double(r.rho_k) + "," + format_double(r.rho_d) + "," + r.reason + "\n";
        write_text(dir / "removals.csv", csv);

        const PhaseSummary s = summarize(data.index);
        summaries.push_back(s);
        summary.push_back({{"phase", s.phase},
                           {"preset", ph.preset},
                           {"accepted", s.accepted},
                           {"removed", s.removed},
                           {"fast_injected", s.fast_injected},
                           {"fast_removed", s.fast_removed}});
    }
    write_text(out / "summary.json", summary.dump(2) + "\n");
    return summaries;
}

namespace {

std::vector<float> to_unit(const FingerprintImage& img)
{
    std::vector<float> v(img.pixels.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(img.pixels[i]) / 255.0f;
    return v;
}

}  // namespace

LabeledImages to_labeled(const PhaseData& phase, FeatureKind kind)
{
    const auto it = phase.images.find(kind);
    if (it == phase.images.end()) throw ValidationError(std::string("dataset has no ") + to_string(kind) + " images");
    LabeledImages out;
    out.kind = kind;
    out.classes = phase.index.classes;
    out.data.image_size = phase.index.image_size;
    for (std::size_t i = 0; i < phase.index.entries.size(); ++i) {
        const DatasetEntry& e = phase.index.entries[i];
        out.data.add(to_unit(it->second[i]), e.label);
        out.devices.push_back(e.device);
        out.packets.push_back(e.packet);
    }
    return out;
}

LabeledImages load_dataset(const fs::path& dir, FeatureKind kind)
{
    const fs::path index_path = dir / "index.json";
    if (!fs::exists(index_path)) throw IoError("no dataset index at " + index_path.string());
    const DatasetIndex index = read_index(index_path);
    LabeledImages out;
    out.kind = kind;
    out.classes = index.classes;
    out.data.image_size = index.image_size;
    for (const DatasetEntry& e : index.entries) {
        const auto f = e.files.find(kind);
        if (f == e.files.end())
            throw ValidationError(std::string("dataset has no ") + to_string(kind) + " images");
        const FingerprintImage img = read_pgm(dir / f->second);
        require(img.width == index.image_size && img.height == index.image_size,
                "image " + f->second + " does not match the dataset image size");
        out.data.add(to_unit(img), e.label);
        out.devices.push_back(e.device);
        out.packets.push_back(e.packet);
    }
    return out;
}

LabeledImages take_per_device(const LabeledImages& data, std::size_t n)
{
    std::map<std::string, std::vector<std::size_t>> by_device;
    for (std::size_t i = 0; i < data.size(); ++i) by_device[data.devices[i]].push_back(i);
    LabeledImages out;
    out.kind = data.kind;
    out.classes = data.classes;
    out.data.image_size = data.data.image_size;
    std::vector<std::size_t> chosen;
    for (auto& [device, idx] : by_device) {
        if (idx.size() < n)
            throw ValidationError("device " + device + " has only " + std::to_string(idx.size()) +
                                  " accepted packets, " + std::to_string(n) + " requested");
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return data.packets[a] < data.packets[b];
        });
        chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n));
    }
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t i : chosen) {
        out.data.add(data.data.image(i), data.data.labels[i]);
        out.devices.push_back(data.devices[i]);
        out.packets.push_back(data.packets[i]);
    }
    return out;
}

LabeledImages as_rogue(const LabeledImages& data)
{
    LabeledImages out = data;
    std::fill(out.data.labels.begin(), out.data.labels.end(), -1);
    return out;
}

std::size_t min_per_device(const LabeledImages& data)
{
    std::map<std::string, std::size_t> counts;
    for (const std::string& d : data.devices) ++counts[d];
    std::size_t m = counts.empty() ? 0 : SIZE_MAX;
    for (const auto& [d, c] : counts) m = std::min(m, c);
    return m;
}

void write_model_info(const fs::path& model_path, const ModelInfo& info)
{
    json j = {{"role", info.role},
              {"feature", to_string(info.feature)},
              {"classes", info.classes},
              {"n_train_per_device", info.n_train_per_device},
              {"seed", info.seed},
              {"epochs", info.epochs},
              {"epoch_loss", info.epoch_loss}};
    write_text(fs::path(model_path.string() + ".json"), j.dump(2) + "\n");
}

std::optional<ModelInfo> read_model_info(const fs::path& model_path)
{
    const fs::path p(model_path.string() + ".json");
    if (!fs::exists(p)) return std::nullopt;
    try {
        const json j = json::parse(read_text(p));
        ModelInfo info;
        info.role = j.at("role");
        info.feature = feature_from_string(j.at("feature"));
        info.classes = j.at("classes").get<std::vector<std::string>>();
        info.n_train_per_device = j.at("n_train_per_device");
        info.seed = j.at("seed");
        info.epochs = j.at("epochs");
        info.epoch_loss = j.at("epoch_loss").get<std::vector<double>>();
        return info;
    } catch (const json::exception& e) {
        throw IoError("malformed model metadata " + p.string() + ": " + e.what());
    }
}

namespace {

void require_trainable(const LabeledImages& data)
{
    require(data.size() > 0, "training set is empty");
    require(!data.classes.empty(), "training set has no classes");
    for (int label : data.data.labels)
        require(label >= 0, "rogue devices must never appear in a training set");
}

}  // namespace

CnnModel train_classifier(const LabeledImages& data, const TrainConfig& cfg, TrainResult* result)
{
    require_trainable(data);
    CnnModel model = build_model<float>(data.data.image_size, data.classes.size(), derive_seed(cfg.seed, {0x1417}));
    TrainResult r = train(model, data.data, cfg);
    if (result) *result = std::move(r);
    return model;
}

CnnModel transfer_classifier(const CnnModel& base, const LabeledImages& data, const TransferConfig& cfg,
                             TrainResult* result)
{
    require_trainable(data);
    require(base.input_size == data.data.image_size, "base model input size does not match the dataset");
    return transfer(base, data.data, data.classes.size(), cfg, result);
}

EvalReport evaluate_classifier(CnnModel& model, const LabeledImages& data)
{
    require(data.size() > 0, "evaluation set is empty");
    require(model.num_classes == data.classes.size(), "model classes do not match the dataset");
    for (int label : data.data.labels) require(label >= 0, "evaluation set contains rogue samples");
    const std::vector<float> probs = predict_probabilities(model, data.data);
    EvalReport r;
    r.feature = data.kind;
    r.samples = data.size();
    r.confusion = ConfusionMatrix(model.num_classes);
    std::vector<ScoredPrediction> scored;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Prediction p = top_class(std::span(probs).subspan(i * model.num_classes, model.num_classes));
        r.predictions.push_back(p);
        r.confusion.add(data.data.labels[i], p.label);
        scored.push_back({p.label, p.confidence, data.data.labels[i], false});
    }
    r.accuracy = accuracy(r.confusion);
    if (r.confusion.trace() > 0 && r.confusion.trace() < r.confusion.total())
        r.auc = micro_average(scored, model.num_classes).auc;
    return r;
}

RogueReport rogue_roc(CnnModel& model, const LabeledImages& legit, const LabeledImages& rogue)
{
    require(legit.size() > 0, "legitimate set is empty");
    require(rogue.size() > 0, "rogue set is empty");
    std::vector<ScoredPrediction> scored;
    std::size_t correct = 0;
    const std::vector<float> pl = predict_probabilities(model, legit.data);
    for (std::size_t i = 0; i < legit.size(); ++i) {
        const int truth = legit.data.labels[i];
        require(truth >= 0 && static_cast<std::size_t>(truth) < model.num_classes, "legitimate label out of range");
        const Prediction p = top_class(std::span(pl).subspan(i * model.num_classes, model.num_classes));
        correct += p.label == truth;
        scored.push_back({p.label, p.confidence, truth, false});
    }
    const std::vector<float> pr = predict_probabilities(model, rogue.data);
    for (std::size_t i = 0; i < rogue.size(); ++i) {
        const Prediction p = top_class(std::span(pr).subspan(i * model.num_classes, model.num_classes));
        scored.push_back({p.label, p.confidence, -1, true});
    }
    RogueReport r;
    r.feature = legit.kind;
    r.legit_samples = legit.size();
    r.rogue_samples = rogue.size();
    r.legit_accuracy = static_cast<double>(correct) / static_cast<double>(legit.size());
    r.roc = micro_average(scored, model.num_classes);
    return r;
}

RogueReport detect_rogue(CnnModel& model, const LabeledImages& legit, const LabeledImages& rogue,
                         const std::vector<std::string>& model_classes)
{
    require(rogue.size() > 0, "rogue set is empty");
    require(legit.kind == rogue.kind, "legit and rogue sets use different features");
    const std::set<std::string> classes(model_classes.begin(), model_classes.end());
    const std::set<std::string> legit_devices(legit.devices.begin(), legit.devices.end());
    for (std::size_t i = 0; i < rogue.size(); ++i) {
        const std::string& d = rogue.devices[i];
        require(!classes.count(d) && !legit_devices.count(d) && rogue.data.labels[i] < 0,
                "rogue device " + d + " overlaps the trained classes");
    }
    return rogue_roc(model, legit, rogue);
}

void write_eval_report(const fs::path& dir, const EvalReport& report, const ReportMeta& meta)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    json j = {{"accuracy", report.accuracy},
              {"samples", report.samples},
              {"n_train_per_device", meta.n_train_per_device},
              {"feature_kind", to_string(report.feature)},
              {"seed", meta.seed}};
    j["auc"] = report.auc ? json(*report.auc) : json(nullptr);
    json cm = json::array();
    for (std::size_t t = 0; t < report.confusion.classes; ++t) {
        json row = json::array();
        for (std::size_t p = 0; p < report.confusion.classes; ++p) row.push_back(report.confusion.at(t, p));
        cm.push_back(row);
    }
    j["confusion"] = cm;
    write_text(dir / "report.json", j.dump(2) + "\n");

    std::string csv = "index,predicted,confidence\n";
    for (std::size_t i = 0; i < report.predictions.size(); ++i)
        csv += std::to_string(i) + "," + std::to_string(report.predictions[i].label) + "," +
               format_double(report.predictions[i].confidence) + "\n";
    write_text(dir / "predictions.csv", csv);
}

void write_rogue_report(const fs::path& dir, const RogueReport& report, const ReportMeta& meta)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    write_roc_csv(dir / "roc.csv", report.roc);
    json j = {{"auc", report.roc.auc},
              {"legit_accuracy", report.legit_accuracy},
              {"legit_samples", report.legit_samples},
              {"rogue_samples", report.rogue_samples},
              {"n_train_per_device", meta.n_train_per_device},
              {"feature_kind", to_string(report.feature)},
              {"seed", meta.seed}};
    write_text(dir / "report.json", j.dump(2) + "\n");
    write_text(dir / "roc.gp",
               "set datafile separator ','\n"
               "set key autotitle columnhead\n"
               "set xlabel 'False positive rate'\n"
               "set ylabel 'True positive rate'\n"
               "set xrange [0:1]\nset yrange [0:1]\n"
               "plot 'roc.csv' using 3:2 with lines title 'ROC', x with lines dt 2 title 'chance'\n");
}

std::vector<SweepPoint> sweep_train_size(const CnnModel& base, const LabeledImages& adapt, const LabeledImages& test,
                                         const std::vector<std::size_t>& sizes, const TransferConfig& transfer_cfg,
                                         const std::optional<TrainConfig>& scratch_cfg)
{
    require(!sizes.empty(), "no training sizes given");
    std::vector<SweepPoint> out;
    for (std::size_t n : sizes) {
        require(n >= 1, "training size must be positive");
        const LabeledImages subset = take_per_device(adapt, n);
        SweepPoint pt;
        pt.n_per_device = n;
        CnnModel tl = transfer_classifier(base, subset, transfer_cfg);
        pt.transfer_accuracy = evaluate_classifier(tl, test).accuracy;
        if (scratch_cfg) {
            CnnModel sc = train_classifier(subset, *scratch_cfg);
            pt.scratch_accuracy = evaluate_classifier(sc, test).accuracy;
        }
        out.push_back(pt);
    }
    return out;
}

void write_sweep(const fs::path& dir, const std::vector<SweepPoint>& points, FeatureKind feature)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    const bool scratch = !points.empty() && points.front().scratch_accuracy.has_value();
    std::string dat = std::string("# feature ") + to_string(feature) + "\n# n_per_device transfer_accuracy" +
                      (scratch ? " scratch_accuracy" : "") + "\n";
    for (const SweepPoint& p : points) {
        dat += std::to_string(p.n_per_device) + " " + format_double(p.transfer_accuracy);
        if (scratch) dat += " " + format_double(p.scratch_accuracy.value_or(0.0));
        dat += "\n";
    }
    write_text(dir / "accuracy_vs_n.dat", dat);
    std::string gp = "set xlabel 'Training packets per device'\n"
                     "set ylabel 'Accuracy'\n"
                     "set yrange [0:1]\n"
                     "set key bottom right\n"
                     "plot 'accuracy_vs_n.dat' using 1:2 with linespoints title 'transfer'";
    if (scratch) gp += ", \\\n     'accuracy_vs_n.dat' using 1:3 with linespoints title 'from scratch'";
    write_text(dir / "accuracy_vs_n.gp", gp + "\n");
}

}  // namespace rffi
