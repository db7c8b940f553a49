#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rffi {

// counts(true, predicted)
struct ConfusionMatrix {
    std::size_t classes = 0;
    std::vector<std::size_t> counts;

    explicit ConfusionMatrix(std::size_t n = 0) : classes(n), counts(n * n, 0) {}
    void add(int truth, int predicted);
    std::size_t at(std::size_t truth, std::size_t predicted) const { return counts[truth * classes + predicted]; }
    std::size_t total() const;
    std::size_t trace() const;
    std::size_t row_sum(std::size_t truth) const;
};

double accuracy(const ConfusionMatrix& cm);

struct ScoredSample {
    double confidence = 0.0;
    bool positive = false;
};

struct RocPoint {
    double threshold = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;  // thresholds descending
    double auc = 0.0;
};

// 1001 evenly spaced thresholds on [0, 1] merged with the observed scores.
std::vector<double> default_thresholds(std::span<const ScoredSample> scores);

// A sample is predicted positive iff confidence >= threshold. AUC integrates
// TPR over FPR with the trapezoid rule, endpoints (0,0) and (1,1) included.
RocCurve roc_curve(std::span<const ScoredSample> scores, std::optional<std::vector<double>> thresholds = {});

struct ScoredPrediction {
    int predicted = 0;
    double confidence = 0.0;
    int true_label = -1;  // ignored for rogue samples
    bool rogue = false;
};

// Micro-averaged one-vs-rest ROC. Every sample is a decision in the binary
// problem of its predicted class, accepted when its confidence clears the
// threshold. It is a true positive only when the predicted class is the
// sample's own legitimate label; rogue samples are negatives everywhere.
RocCurve micro_average(std::span<const ScoredPrediction> samples, std::size_t num_classes,
                       std::optional<std::vector<double>> thresholds = {});

void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve);

}  // namespace rffi
