#include "rffi/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "rffi/errors.hpp"

namespace rffi {

void ConfusionMatrix::add(int truth, int predicted)
{
    require(truth >= 0 && static_cast<std::size_t>(truth) < classes, "true label out of range");
    require(predicted >= 0 && static_cast<std::size_t>(predicted) < classes, "predicted label out of range");
    ++counts[static_cast<std::size_t>(truth) * classes + static_cast<std::size_t>(predicted)];
}

std::size_t ConfusionMatrix::total() const
{
    std::size_t t = 0;
    for (std::size_t c : counts) t += c;
    return t;
}

std::size_t ConfusionMatrix::trace() const
{
    std::size_t t = 0;
    for (std::size_t i = 0; i < classes; ++i) t += at(i, i);
    return t;
}

std::size_t ConfusionMatrix::row_sum(std::size_t truth) const
{
    std::size_t t = 0;
    for (std::size_t j = 0; j < classes; ++j) t += at(truth, j);
    return t;
}

double accuracy(const ConfusionMatrix& cm)
{
    const std::size_t total = cm.total();
    require(total > 0, "confusion matrix is empty");
    return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

std::vector<double> default_thresholds(std::span<const ScoredSample> scores)
{
    std::vector<double> t;
    t.reserve(1001 + scores.size());
    for (int i = 0; i <= 1000; ++i) t.push_back(i / 1000.0);
    for (const ScoredSample& s : scores) t.push_back(s.confidence);
    std::sort(t.begin(), t.end(), std::greater<>());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
}

RocCurve roc_curve(std::span<const ScoredSample> scores, std::optional<std::vector<double>> thresholds)
{
    std::size_t pos = 0;
    for (const ScoredSample& s : scores) pos += s.positive ? 1 : 0;
    const std::size_t neg = scores.size() - pos;
    require(pos > 0 && neg > 0, "ROC needs at least one positive and one negative sample");

    std::vector<double> grid = thresholds ? std::move(*thresholds) : default_thresholds(scores);
    require(!grid.empty(), "threshold grid is empty");
    for (double t : grid) require(t >= 0.0 && t <= 1.0, "thresholds must lie in [0, 1]");
    std::sort(grid.begin(), grid.end(), std::greater<>());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    // Sweep thresholds in descending order over descending scores.
    std::vector<ScoredSample> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const ScoredSample& a, const ScoredSample& b) { return a.confidence > b.confidence; });

    RocCurve curve;
    curve.points.reserve(grid.size());
    std::size_t idx = 0, tp = 0, fp = 0;
    for (double t : grid) {
        while (idx < sorted.size() && sorted[idx].confidence >= t) {
            (sorted[idx].positive ? tp : fp) += 1;
            ++idx;
        }
        curve.points.push_back({t, static_cast<double>(tp) / pos, static_cast<double>(fp) / neg});
    }

    std::vector<std::pair<double, double>> xy;
    xy.reserve(curve.points.size() + 2);
    xy.emplace_back(0.0, 0.0);
    for (const RocPoint& p : curve.points) xy.emplace_back(p.fpr, p.tpr);
    xy.emplace_back(1.0, 1.0);
    std::sort(xy.begin(), xy.end());
    double auc = 0.0;
    for (std::size_t i = 1; i < xy.size(); ++i) {
        auc += (xy[i].first - xy[i - 1].first) * 0.5 * (xy[i].second + xy[i - 1].second);
    }
    curve.auc = std::clamp(auc, 0.0, 1.0);
    return curve;
}

RocCurve micro_average(std::span<const ScoredPrediction> samples, std::size_t num_classes,
                       std::optional<std::vector<double>> thresholds)
{
    require(!samples.empty(), "micro-averaging needs samples");
    require(num_classes >= 1, "micro-averaging needs at least one class");
    std::vector<ScoredSample> pooled;
    pooled.reserve(samples.size());
    for (const ScoredPrediction& s : samples) {
        require(s.predicted >= 0 && static_cast<std::size_t>(s.predicted) < num_classes, "predicted class out of range");
        require(s.rogue || (s.true_label >= 0 && static_cast<std::size_t>(s.true_label) < num_classes),
                "true label out of range");
        // Each sample sits in the one-vs-rest problem of the class it was
        // routed to; the remaining classes never accept it.
        pooled.push_back({s.confidence, !s.rogue && s.true_label == s.predicted});
    }
    return roc_curve(pooled, std::move(thresholds));
}

void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve)
{
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << "threshold,tpr,fpr\n";
    char line[96];
    for (const RocPoint& p : curve.points) {
        std::snprintf(line, sizeof line, "%.6f,%.6f,%.6f\n", p.threshold, p.tpr, p.fpr);
        out << line;
    }
}

}  // namespace rffi
