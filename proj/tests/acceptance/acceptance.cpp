#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <CLI11.hpp>

#include "../common/gradcheck.hpp"
#include "../common/quotient_oracles.hpp"
#include "../common/support.hpp"
#include "rffi/cnn.hpp"
#include "rffi/experiment.hpp"
#include "rffi/manifest.hpp"
#include "rffi/metrics.hpp"
#include "rffi/random.hpp"
#include "rffi/signal.hpp"

namespace fs = std::filesystem;
using namespace rffi;

namespace {

// Tolerances and budgets.
constexpr double kCancelFlatDb = 1e-6;
constexpr double kCancelMultipathDb = 1.0;
constexpr double kGradTolerance = 1e-4;
constexpr double kAccuracyMargin = 0.10;
constexpr double kAccuracyFloor = 0.85;
constexpr double kTransferMargin = 0.05;
constexpr double kRogueAucFloor = 0.9;
constexpr double kFastRemoved = 0.90;
constexpr double kCleanKept = 0.95;
constexpr double kTheta = 0.2;
constexpr double kFastDopplerHz = 300.0;
constexpr double kChanceBand = 0.05;

constexpr int kLegit = 10;
constexpr int kRogueLegit = 8;
constexpr int kTrainPackets = 200;
constexpr int kTestPackets = 100;
constexpr int kTransferPackets = 50;
constexpr int kRogueAdaptPackets = 100;
constexpr int kOutdoorPackets = 50;
constexpr int kRoguePackets = 100;

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* title;
    double budget_s;
    std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double mean(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::string list(const std::vector<double>& v)
{
    std::string s;
    for (double x : v) s += (s.empty() ? "" : " ") + fmt("%.3f", x);
    return s;
}

// Desk-scale experiment for one seed: chamber training, indoor adaptation and
// test, outdoor legitimate and rogue captures. Phases are generated on first use.
class SeedRun {
public:
    explicit SeedRun(std::uint64_t seed)
    {
        ExperimentManifest m = default_manifest();
        m.seed = seed;
        m.population.legit = kLegit;
        m.population.rogue = 2;
        m.phases = {
            PhaseSpec{"train", "chamber", kTrainPackets, 0, DeviceGroup::kLegit},
            PhaseSpec{"adapt", "indoor", kTransferPackets, 0, DeviceGroup::kLegit},
            PhaseSpec{"test", "indoor", kTestPackets, kTrainPackets, DeviceGroup::kLegit},
            PhaseSpec{"outdoor_adapt", "outdoor", kRogueAdaptPackets, 0, DeviceGroup::kLegit},
            PhaseSpec{"outdoor_test", "outdoor", kOutdoorPackets, kRogueAdaptPackets, DeviceGroup::kLegit},
            PhaseSpec{"rogue", "outdoor", kRoguePackets, 0, DeviceGroup::kRogue},
        };
        // The JSON round trip derives the training seeds and validates.
        manifest_ = manifest_from_json(manifest_to_json(m));
    }

    const ExperimentManifest& manifest() const { return manifest_; }

    const LabeledImages& data(const std::string& phase, FeatureKind kind)
    {
        auto it = phases_.find(phase);
        if (it == phases_.end()) it = phases_.emplace(phase, generate_phase(manifest_, phase)).first;
        const auto key = std::make_pair(phase, kind);
        auto d = labeled_.find(key);
        if (d == labeled_.end()) d = labeled_.emplace(key, to_labeled(it->second, kind)).first;
        return d->second;
    }

    CnnModel& base(FeatureKind kind)
    {
        auto it = base_.find(kind);
        if (it == base_.end()) it = base_.emplace(kind, train_classifier(data("train", kind), manifest_.train)).first;
        return it->second;
    }

private:
    ExperimentManifest manifest_;
    std::map<std::string, PhaseData> phases_;
    std::map<std::pair<std::string, FeatureKind>, LabeledImages> labeled_;
    std::map<FeatureKind, CnnModel> base_;
};

// Legitimate devices with labels below `classes`.
LabeledImages first_classes(const LabeledImages& d, int classes)
{
    LabeledImages out;
    out.kind = d.kind;
    out.classes.assign(d.classes.begin(), d.classes.begin() + classes);
    out.data.image_size = d.data.image_size;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d.data.labels[i] < 0 || d.data.labels[i] >= classes) continue;
        out.data.add(d.data.image(i), d.data.labels[i]);
        out.devices.push_back(d.devices[i]);
        out.packets.push_back(d.packets[i]);
    }
    return out;
}

class Acceptance {
public:
    explicit Acceptance(int seeds)
    {
        for (int s = 1; s <= seeds; ++s) runs_.emplace_back(static_cast<std::uint64_t>(s));
    }

    Outcome table_ii()
    {
        const std::vector<std::size_t> expected{80, 16, 1168, 32, 4640, 64, 2304020};
        const std::vector<std::size_t> got = build_model<float>(256, 20, 1).parameter_counts();
        std::string s;
        for (std::size_t c : got) s += (s.empty() ? "" : " ") + std::to_string(c);
        return {got == expected, "per-layer counts " + s};
    }

    Outcome frame_count_319()
    {
        LoraConfig c;
        c.preamble_symbols = 10;
        c.spreading_factor = 10;
        c.bandwidth_hz = 62.5e3;
        c.sample_rate_hz = 1e6;
        const std::size_t m = frame_count(c, 1024, 512);
        return {m == 319, fmt("M = %zu", m)};
    }

    Outcome cancellation()
    {
        double flat = 0.0, multipath = 0.0;
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            const DeviceWaveforms tx = oracles::device_waveforms(seed);
            const oracles::Pair ref = oracles::through(tx, ChannelSpec{});
            Rng rng(derive_seed(seed, {0xca9}));
            for (int k = 0; k < 4; ++k) {
                const Sample g = std::polar(std::pow(10.0, rng.uniform(-3.0, 1.0)), rng.uniform(0.0, 6.283185307179586));
                flat = std::max(flat, oracles::masked_gap(oracles::through_gain(tx, g), ref));
            }
            multipath = std::max(multipath, oracles::ridge_median_gap(oracles::through(tx, oracles::short_multipath(seed)), ref));
        }
        return {flat <= kCancelFlatDb && multipath <= kCancelMultipathDb,
                fmt("single tap max |dQ| %.2e dB (<= %.0e), 3-tap worst ridge median %.2e dB (<= %.1f)", flat,
                    kCancelFlatDb, multipath, kCancelMultipathDb)};
    }

    Outcome gradients()
    {
        double worst = 0.0;
        std::size_t checked = 0;
        std::string bad;
        for (const auto& r : gradcheck::check_standard_models()) {
            worst = std::max(worst, r.worst);
            checked += r.checked;
            if (r.worst > kGradTolerance || r.checked == 0) bad += " " + r.name;
        }
        return {bad.empty(), fmt("%zu coordinates, worst relative error %.2e (<= %.0e)%s", checked, worst,
                                 kGradTolerance, bad.empty() ? "" : (" failing:" + bad).c_str())};
    }

    Outcome accuracy_gap()
    {
        std::vector<double> q, s;
        for (SeedRun& run : runs_) {
            q.push_back(evaluate_classifier(run.base(FeatureKind::kQuotient), run.data("test", FeatureKind::kQuotient)).accuracy);
            s.push_back(evaluate_classifier(run.base(FeatureKind::kSpectrogram), run.data("test", FeatureKind::kSpectrogram)).accuracy);
        }
        const double mq = mean(q), ms = mean(s);
        return {mq >= ms + kAccuracyMargin && mq >= kAccuracyFloor,
                fmt("indoor accuracy quotient %.3f [%s] vs spectrogram %.3f [%s] (need +%.2f and >= %.2f)", mq,
                    list(q).c_str(), ms, list(s).c_str(), kAccuracyMargin, kAccuracyFloor)};
    }

    Outcome transfer_gain()
    {
        std::vector<double> tr, sc;
        for (SeedRun& run : runs_) {
            const ExperimentManifest& m = run.manifest();
            const LabeledImages adapt = take_per_device(run.data("adapt", FeatureKind::kQuotient), kTransferPackets);
            const LabeledImages& test = run.data("test", FeatureKind::kQuotient);
            CnnModel t = transfer_classifier(run.base(FeatureKind::kQuotient), adapt, m.transfer);
            TrainConfig scratch = m.train;
            scratch.epochs = m.transfer.epochs;
            scratch.seed = derive_seed(m.seed, {0x5c7a});
            CnnModel f = train_classifier(adapt, scratch);
            tr.push_back(evaluate_classifier(t, test).accuracy);
            sc.push_back(evaluate_classifier(f, test).accuracy);
        }
        std::vector<double> gain;
        for (std::size_t i = 0; i < tr.size(); ++i) gain.push_back(tr[i] - sc[i]);
        return {mean(gain) >= kTransferMargin,
                fmt("%d/device: transfer %.3f [%s] vs scratch %.3f [%s], gain %+.3f (need >= +%.2f)", kTransferPackets,
                    mean(tr), list(tr).c_str(), mean(sc), list(sc).c_str(), mean(gain), kTransferMargin)};
    }

    Outcome rogue_auc()
    {
        std::vector<double> q, s;
        for (SeedRun& run : runs_) {
            for (FeatureKind kind : {FeatureKind::kQuotient, FeatureKind::kSpectrogram}) {
                // The chamber base is retrained on outdoor captures of the enrolled devices.
                const LabeledImages adapt = first_classes(run.data("outdoor_adapt", kind), kRogueLegit);
                CnnModel model = transfer_classifier(run.base(kind), adapt, run.manifest().transfer);
                const LabeledImages legit = first_classes(run.data("outdoor_test", kind), kRogueLegit);
                const RogueReport r = detect_rogue(model, legit, run.data("rogue", kind), adapt.classes);
                curves_.push_back(r.roc);
                (kind == FeatureKind::kQuotient ? q : s).push_back(r.roc.auc);
            }
        }
        const double mq = mean(q), ms = mean(s);
        return {mq > ms && mq >= kRogueAucFloor,
                fmt("%d legit + 2 rogue outdoor, retrained on %d/device: AUC quotient %.3f [%s] vs spectrogram %.3f [%s] (need > and >= %.2f)",
                    kRogueLegit, kRogueAdaptPackets, mq, list(q).c_str(), ms, list(s).c_str(), kRogueAucFloor)};
    }

    Outcome screening()
    {
        ExperimentManifest m = default_manifest();
        m.seed = 8;
        m.population.legit = kLegit;
        m.pipeline.theta = kTheta;
        m.phases = {PhaseSpec{"mixed", "indoor", 50, 0, DeviceGroup::kLegit, 0.2, kFastDopplerHz}};
        m.features = {FeatureKind::kQuotient};
        const PhaseSummary s = summarize(generate_phase(m, "mixed").index);
        const std::size_t clean = s.accepted + s.removed - s.fast_injected;
        const std::size_t clean_removed = s.removed - s.fast_removed;
        const double removed = s.fast_injected ? static_cast<double>(s.fast_removed) / s.fast_injected : 0.0;
        const double kept = clean ? 1.0 - static_cast<double>(clean_removed) / clean : 0.0;
        return {s.fast_injected > 0 && removed >= kFastRemoved && kept >= kCleanKept,
                fmt("%zu fast pairs at %.0f Hz: %.1f%% removed (>= %.0f%%); %zu clean: %.1f%% kept (>= %.0f%%)",
                    s.fast_injected, kFastDopplerHz, 100 * removed, 100 * kFastRemoved, clean, 100 * kept,
                    100 * kCleanKept)};
    }

    Outcome metrics()
    {
        std::vector<ScoredSample> sep;
        for (int i = 0; i < 50; ++i) sep.push_back({0.6 + 0.008 * i, true});
        for (int i = 0; i < 50; ++i) sep.push_back({0.1 + 0.008 * i, false});
        const RocCurve separable = roc_curve(sep);
        curves_.push_back(separable);
        double worst_random = 0.0;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            Rng rng(derive_seed(seed, {0x3e7}));
            std::vector<ScoredSample> r;
            for (int i = 0; i < 2000; ++i) r.push_back({rng.uniform(), rng.uniform() < 0.5});
            curves_.push_back(roc_curve(r));
            worst_random = std::max(worst_random, std::abs(curves_.back().auc - 0.5));
        }
        std::size_t broken = 0;
        for (const RocCurve& c : curves_) {
            for (std::size_t i = 1; i < c.points.size(); ++i) {
                const RocPoint &a = c.points[i - 1], &b = c.points[i];
                if (b.threshold > a.threshold || b.tpr < a.tpr || b.fpr < a.fpr) ++broken;
            }
        }
        const bool ok = separable.auc == 1.0 && worst_random <= kChanceBand && broken == 0;
        return {ok, fmt("separable AUC %.6f, random |AUC-0.5| <= %.3f (<= %.2f), %zu curves monotone, %zu violations",
                        separable.auc, worst_random, kChanceBand, curves_.size(), broken)};
    }

    Outcome determinism()
    {
        ExperimentManifest m = default_manifest();
        m.seed = 5;
        m.population.legit = 2;
        m.population.rogue = 1;
        m.phases = {PhaseSpec{"train", "chamber", 6, 0, DeviceGroup::kLegit},
                    PhaseSpec{"test", "indoor", 4, 0, DeviceGroup::kLegit},
                    PhaseSpec{"rogue", "outdoor", 4, 0, DeviceGroup::kRogue}};
        m.train.epochs = 3;
        m.transfer.epochs = 2;
        m = manifest_from_json(manifest_to_json(m));

        auto stage = [&](const fs::path& root) {
            generate_dataset(m, root / "data");
            const LabeledImages train = load_dataset(root / "data" / "train", FeatureKind::kQuotient);
            const LabeledImages test = load_dataset(root / "data" / "test", FeatureKind::kQuotient);
            const LabeledImages rogue = load_dataset(root / "data" / "rogue", FeatureKind::kQuotient);
            CnnModel base = train_classifier(train, m.train);
            write_model(root / "base.bin", base);
            CnnModel tuned = transfer_classifier(base, take_per_device(test, 2), m.transfer);
            write_model(root / "transfer.bin", tuned);
            write_eval_report(root / "eval", evaluate_classifier(tuned, test), {2, m.seed});
            write_rogue_report(root / "rogue", detect_rogue(base, test, rogue, train.classes), {6, m.seed});
            return testing::read_tree(root);
        };
        testing::TempDir a("accept_a"), b("accept_b");
        const auto ta = stage(a.path), tb = stage(b.path);
        std::size_t differing = 0;
        for (const auto& [name, bytes] : ta) {
            const auto it = tb.find(name);
            differing += it == tb.end() || it->second != bytes;
        }
        differing += tb.size() > ta.size() ? tb.size() - ta.size() : 0;
        return {differing == 0 && ta.size() > 10,
                fmt("%zu artifacts (images, indexes, models, reports) compared, %zu differ", ta.size(), differing)};
    }

private:
    std::vector<SeedRun> runs_;
    std::vector<RocCurve> curves_;
};

}  // namespace

int main(int argc, char** argv)
{
#ifdef __GLIBC__
    // Pair generation churns through multi-megabyte buffers; keep them on the
    // heap instead of a fresh mmap (and page faults) per allocation.
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    CLI::App app{"Acceptance criteria for the RF fingerprinting workbench"};
    std::vector<int> only;
    int seeds = 3;
    app.add_option("--only", only, "Run only these criteria")->delimiter(',');
    app.add_option("--seeds", seeds, "Seeds for the averaged experiments")->check(CLI::Range(1, 10));
    CLI11_PARSE(app, argc, argv);

    Acceptance acc(seeds);
    const std::vector<Criterion> criteria{
        {1, "parameter counts", 1, [&] { return acc.table_ii(); }},
        {2, "STFT frame count", 1, [&] { return acc.frame_count_319(); }},
        {3, "channel cancellation", 10, [&] { return acc.cancellation(); }},
        {4, "gradient check", 30, [&] { return acc.gradients(); }},
        {5, "quotient vs spectrogram accuracy", 900, [&] { return acc.accuracy_gap(); }},
        {6, "transfer learning benefit", 900, [&] { return acc.transfer_gain(); }},
        {7, "rogue detection AUC", 600, [&] { return acc.rogue_auc(); }},
        {8, "distortion screen", 120, [&] { return acc.screening(); }},
        {9, "metrics sanity", 10, [&] { return acc.metrics(); }},
        {10, "determinism", 300, [&] { return acc.determinism(); }},
    };

    int failed = 0;
    const std::set<int> chosen(only.begin(), only.end());
    for (const Criterion& c : criteria) {
        if (!chosen.empty() && !chosen.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= c.budget_s;
        const bool pass = o.pass && in_time;
        failed += !pass;
        std::printf("criterion %2d %s  %s: %s [%.1f s of %.0f s%s]\n", c.id, pass ? "PASS" : "FAIL", c.title,
                    o.detail.c_str(), secs, c.budget_s, in_time ? "" : ", over budget");
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
