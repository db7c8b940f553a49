#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "rffi/errors.hpp"
#include "rffi/experiment.hpp"
#include "rffi/manifest.hpp"
#include "rffi/random.hpp"

namespace fs = std::filesystem;
using namespace rffi;

namespace {

FeatureKind parse_feature(const std::string& s)
{
    return feature_from_string(s);
}

std::vector<std::string> model_classes(const fs::path& model, const CnnModel& m, const LabeledImages& fallback)
{
    if (auto info = read_model_info(model)) {
        require(info->classes.size() == m.num_classes, "model metadata disagrees with the model");
        return info->classes;
    }
    require(fallback.classes.size() == m.num_classes, "model classes do not match the dataset");
    return fallback.classes;
}

}  // namespace

int main(int argc, char** argv)
{
#ifdef __GLIBC__
    // Keep multi-megabyte pair buffers on the heap instead of a fresh mmap per allocation.
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    CLI::App app{"LoRa RF fingerprinting workbench"};
    app.require_subcommand(1);

    std::string manifest_path, out, dataset, base, model_path, report, legit, rogue, adapt, test;
    std::string feature = "quotient";
    int epochs = -1;
    std::uint64_t seed = 1;
    std::size_t n_per_device = 50;
    std::vector<std::size_t> sizes{50, 100, 150, 200};
    int workers = -1;
    bool scratch = false;

    auto* gen = app.add_subcommand("gen-dataset", "Synthesize labeled fingerprint datasets from a manifest");
    gen->add_option("--manifest", manifest_path, "Experiment manifest (JSON)")->required();
    gen->add_option("--out", out, "Output directory")->required();
    gen->add_option("--workers", workers, "Worker threads (0 = all cores)");

    auto* dm = app.add_subcommand("default-manifest", "Print the default experiment manifest");

    auto* tr = app.add_subcommand("train", "Train a classifier from scratch");
    tr->add_option("--dataset", dataset, "Dataset directory")->required();
    tr->add_option("--out", out, "Model file")->required();
    tr->add_option("--epochs", epochs, "Epochs (default 30)");
    tr->add_option("--seed", seed, "Seed");
    tr->add_option("--feature", feature, "quotient | spectrogram");
    tr->add_option("--n-per-device", n_per_device, "Use only the first N packets per device (0 = all)");

    auto* tf = app.add_subcommand("transfer", "Fine-tune a base model with a new output layer");
    tf->add_option("--base", base, "Base model file")->required();
    tf->add_option("--dataset", dataset, "Dataset directory")->required();
    tf->add_option("--n-per-device", n_per_device, "Packets per device")->required();
    tf->add_option("--out", out, "Output model file (default <base>.transfer.bin)");
    tf->add_option("--epochs", epochs, "Epochs (default 20)");
    tf->add_option("--seed", seed, "Seed");
    tf->add_option("--feature", feature, "quotient | spectrogram");

    auto* ev = app.add_subcommand("evaluate", "Evaluate a model on a dataset");
    ev->add_option("--model", model_path, "Model file")->required();
    ev->add_option("--dataset", dataset, "Dataset directory")->required();
    ev->add_option("--report", report, "Report directory")->required();
    ev->add_option("--feature", feature, "quotient | spectrogram (default from model metadata)");

    auto* dr = app.add_subcommand("detect-rogue", "ROC analysis of legitimate versus rogue devices");
    dr->add_option("--model", model_path, "Model file")->required();
    dr->add_option("--legit", legit, "Legitimate dataset directory")->required();
    dr->add_option("--rogue", rogue, "Rogue dataset directory")->required();
    dr->add_option("--report", report, "Report directory (default ./rogue_report)");
    dr->add_option("--feature", feature, "quotient | spectrogram (default from model metadata)");

    auto* sw = app.add_subcommand("sweep", "Accuracy versus training-set size");
    sw->add_option("--base", base, "Base model file")->required();
    sw->add_option("--adapt", adapt, "Dataset for transfer")->required();
    sw->add_option("--test", test, "Held-out dataset")->required();
    sw->add_option("--out", out, "Output directory")->required();
    sw->add_option("--sizes", sizes, "Packets per device")->delimiter(',');
    sw->add_option("--epochs", epochs, "Transfer epochs (default 20)");
    sw->add_option("--seed", seed, "Seed");
    sw->add_option("--feature", feature, "quotient | spectrogram (default from model metadata)");
    sw->add_flag("--scratch", scratch, "Also train from scratch on each subset");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const CLI::Option* feature_opt = app.get_subcommand()->get_option_no_throw("--feature");
        const bool feature_given = feature_opt && feature_opt->count() > 0;
        auto model_feature = [&](const fs::path& m) {
            if (!feature_given)
                if (auto info = read_model_info(m)) return info->feature;
            return parse_feature(feature);
        };

        if (*dm) {
            std::cout << manifest_to_json(default_manifest());
        } else if (*gen) {
            ExperimentManifest m = read_manifest(manifest_path);
            if (workers >= 0) m.workers = workers;
            for (const PhaseSummary& s : generate_dataset(m, out))
                std::printf("%-14s accepted %zu removed %zu (fast injected %zu, removed %zu)\n", s.phase.c_str(),
                            s.accepted, s.removed, s.fast_injected, s.fast_removed);
        } else if (*tr) {
            const FeatureKind kind = parse_feature(feature);
            LabeledImages data = load_dataset(dataset, kind);
            if (n_per_device > 0 && tr->count("--n-per-device")) data = take_per_device(data, n_per_device);
            TrainConfig cfg;
            if (epochs >= 0) cfg.epochs = epochs;
            cfg.seed = seed;
            TrainResult result;
            const CnnModel model = train_classifier(data, cfg, &result);
            write_model(out, model);
            write_model_info(out, {tr->count("--n-per-device") ? "scratch" : "base", kind, data.classes,
                                   min_per_device(data), seed, cfg.epochs, result.epoch_loss});
            std::printf("trained %zu samples, final loss %.6f\n", data.size(),
                        result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back());
        } else if (*tf) {
            const FeatureKind kind = model_feature(base);
            const CnnModel base_model = read_model(base);
            const LabeledImages data = take_per_device(load_dataset(dataset, kind), n_per_device);
            TransferConfig cfg;
            if (epochs >= 0) cfg.epochs = epochs;
            cfg.seed = seed;
            TrainResult result;
            const CnnModel model = transfer_classifier(base_model, data, cfg, &result);
            const std::string dst = out.empty() ? base + ".transfer.bin" : out;
            write_model(dst, model);
            write_model_info(dst, {"transfer", kind, data.classes, n_per_device, seed, cfg.epochs, result.epoch_loss});
            std::printf("transferred on %zu samples -> %s\n", data.size(), dst.c_str());
        } else if (*ev) {
            const FeatureKind kind = model_feature(model_path);
            CnnModel model = read_model(model_path);
            const LabeledImages data = load_dataset(dataset, kind);
            const EvalReport r = evaluate_classifier(model, data);
            const auto info = read_model_info(model_path);
            write_eval_report(report, r, {info ? info->n_train_per_device : 0, info ? info->seed : 0});
            std::printf("accuracy %.4f on %zu samples\n", r.accuracy, r.samples);
        } else if (*dr) {
            const FeatureKind kind = model_feature(model_path);
            CnnModel model = read_model(model_path);
            const LabeledImages l = load_dataset(legit, kind);
            const LabeledImages r = load_dataset(rogue, kind);
            const RogueReport rep = detect_rogue(model, l, r, model_classes(model_path, model, l));
            const auto info = read_model_info(model_path);
            write_rogue_report(report.empty() ? "rogue_report" : report, rep,
                               {info ? info->n_train_per_device : 0, info ? info->seed : 0});
            std::printf("AUC %.4f (%zu legit, %zu rogue)\n", rep.roc.auc, rep.legit_samples, rep.rogue_samples);
        } else if (*sw) {
            const FeatureKind kind = model_feature(base);
            const CnnModel base_model = read_model(base);
            TransferConfig tcfg;
            if (epochs >= 0) tcfg.epochs = epochs;
            tcfg.seed = seed;
            std::optional<TrainConfig> scfg;
            if (scratch) {
                scfg = TrainConfig{};
                scfg->epochs = tcfg.epochs;
                scfg->seed = derive_seed(seed, {0x5c7a});
            }
            const auto points = sweep_train_size(base_model, load_dataset(adapt, kind), load_dataset(test, kind),
                                                 sizes, tcfg, scfg);
            write_sweep(out, points, kind);
            for (const SweepPoint& p : points) {
                std::printf("n=%zu transfer %.4f", p.n_per_device, p.transfer_accuracy);
                if (p.scratch_accuracy) std::printf(" scratch %.4f", *p.scratch_accuracy);
                std::printf("\n");
            }
        }
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
