#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rffi/cnn.hpp"
#include "rffi/fingerprint.hpp"
#include "rffi/manifest.hpp"
#include "rffi/metrics.hpp"

namespace rffi {

struct DatasetEntry {
    std::string device;
    int label = -1;
    int packet = 0;
    std::uint64_t seed = 0;
    bool fast = false;  // injected fast-fading pair
    double rho_k = 0.0, rho_d = 0.0;
    std::map<FeatureKind, std::string> files;
};

struct RemovedPair {
    std::string device;
    int label = -1;
    int packet = 0;
    std::uint64_t seed = 0;
    bool fast = false;
    double rho_k = 0.0, rho_d = 0.0;
    std::string reason;
};

// Contents of a dataset directory's index.json.
struct DatasetIndex {
    std::string phase;
    std::string preset;
    std::uint64_t manifest_seed = 0;
    std::size_t image_size = 0;
    std::vector<FeatureKind> features;
    std::vector<std::string> classes;  // legitimate device ids by label
    std::vector<DatasetEntry> entries;
    std::vector<RemovedPair> removed;
};

struct PhaseData {
    DatasetIndex index;
    // Parallel to index.entries.
    std::map<FeatureKind, std::vector<FingerprintImage>> images;
};

// Everything gen-dataset produces for one phase, without touching disk.
PhaseData generate_phase(const ExperimentManifest& manifest, const std::string& phase_name);

struct PhaseSummary {
    std::string phase;
    std::size_t accepted = 0, removed = 0;
    std::size_t fast_injected = 0, fast_removed = 0;
};

// gen-dataset: out/manifest.json, out/summary.json and one directory per phase
// holding index.json, removals.csv and <device>_<packet>_<kind>.pgm images.
std::vector<PhaseSummary> generate_dataset(const ExperimentManifest& manifest, const std::filesystem::path& out);
PhaseSummary summarize(const DatasetIndex& index);

void write_index(const std::filesystem::path& path, const DatasetIndex& index);
DatasetIndex read_index(const std::filesystem::path& path);

// Images of one feature kind with their labels; rogue samples carry label -1.
struct LabeledImages {
    FeatureKind kind = FeatureKind::kQuotient;
    std::vector<std::string> classes;
    ImageDataset data;
    std::vector<std::string> devices;
    std::vector<int> packets;

    std::size_t size() const { return data.size(); }
};

LabeledImages to_labeled(const PhaseData& phase, FeatureKind kind);
LabeledImages load_dataset(const std::filesystem::path& dir, FeatureKind kind);
// First n accepted packets (by packet index) of every device present.
LabeledImages take_per_device(const LabeledImages& data, std::size_t n);
// Samples of one device relabelled as rogue; used for sanity runs.
LabeledImages as_rogue(const LabeledImages& data);
std::size_t min_per_device(const LabeledImages& data);

// Sidecar metadata written next to every model file as <model>.json.
struct ModelInfo {
    std::string role = "base";  // base | transfer | scratch
    FeatureKind feature = FeatureKind::kQuotient;
    std::vector<std::string> classes;
    std::size_t n_train_per_device = 0;
    std::uint64_t seed = 0;
    int epochs = 0;
    std::vector<double> epoch_loss;
};

void write_model_info(const std::filesystem::path& model_path, const ModelInfo& info);
std::optional<ModelInfo> read_model_info(const std::filesystem::path& model_path);

CnnModel train_classifier(const LabeledImages& data, const TrainConfig& cfg, TrainResult* result = nullptr);
CnnModel transfer_classifier(const CnnModel& base, const LabeledImages& data, const TransferConfig& cfg,
                             TrainResult* result = nullptr);

struct EvalReport {
    FeatureKind feature = FeatureKind::kQuotient;
    std::size_t samples = 0;
    double accuracy = 0.0;
    ConfusionMatrix confusion{1};
    std::optional<double> auc;  // correct-vs-wrong micro-average, when both occur
    std::vector<Prediction> predictions;
};

EvalReport evaluate_classifier(CnnModel& model, const LabeledImages& data);

struct RogueReport {
    FeatureKind feature = FeatureKind::kQuotient;
    std::size_t legit_samples = 0, rogue_samples = 0;
    double legit_accuracy = 0.0;
    RocCurve roc;
};

// Scores legit and rogue samples without checking device ids.
RogueReport rogue_roc(CnnModel& model, const LabeledImages& legit, const LabeledImages& rogue);
// detect-rogue: additionally requires a non-empty rogue set whose devices
// are neither model classes nor present in the legit set.
RogueReport detect_rogue(CnnModel& model, const LabeledImages& legit, const LabeledImages& rogue,
                         const std::vector<std::string>& model_classes);

struct ReportMeta {
    std::size_t n_train_per_device = 0;
    std::uint64_t seed = 0;
};

void write_eval_report(const std::filesystem::path& dir, const EvalReport& report, const ReportMeta& meta);
void write_rogue_report(const std::filesystem::path& dir, const RogueReport& report, const ReportMeta& meta);

struct SweepPoint {
    std::size_t n_per_device = 0;
    double transfer_accuracy = 0.0;
    std::optional<double> scratch_accuracy;
};

// Transfer the base model with n packets per device from `adapt` for each n,
// evaluate on `test`; optionally also train from scratch on the same subset.
std::vector<SweepPoint> sweep_train_size(const CnnModel& base, const LabeledImages& adapt, const LabeledImages& test,
                                         const std::vector<std::size_t>& sizes, const TransferConfig& transfer_cfg,
                                         const std::optional<TrainConfig>& scratch_cfg);
// accuracy_vs_n.dat plus a gnuplot script that plots it.
void write_sweep(const std::filesystem::path& dir, const std::vector<SweepPoint>& points, FeatureKind feature);

}  // namespace rffi
