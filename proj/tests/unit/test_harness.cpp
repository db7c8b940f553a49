#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <map>

#include "rffi/errors.hpp"
#include "rffi/experiment.hpp"
#include "rffi/manifest.hpp"
#include "../common/support.hpp"

namespace fs = std::filesystem;
using namespace rffi;

namespace {

// SF7 with a 256-sample window keeps every pair 8x cheaper than the defaults.
ExperimentManifest small_manifest(int devices, int packets, const std::string& preset)
{
    ExperimentManifest m = default_manifest();
    m.seed = 11;
    m.pipeline.lora.spreading_factor = 7;
    m.pipeline.stft.window_len = 256;
    m.pipeline.stft.hop = 128;
    m.population.legit = devices;
    m.population.rogue = 1;
    m.phases = {PhaseSpec{"train", preset, packets, 0, DeviceGroup::kLegit}};
    m.workers = 2;
    return m;
}

int run_cli(const std::string& args)
{
    const std::string cmd = std::string(RFFI_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TrainConfig quick_train(int epochs = 15)
{
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.seed = 3;
    return cfg;
}

}  // namespace

TEST_CASE("manifest json round-trips")
{
    const ExperimentManifest m = default_manifest();
    const std::string text = manifest_to_json(m);
    CHECK(manifest_to_json(manifest_from_json(text)) == text);

    ExperimentManifest s = small_manifest(3, 4, "indoor");
    s.presets.at("indoor").spec.snr_db.reset();
    s.phases.push_back({"fast", "indoor", 5, 10, DeviceGroup::kAll, 0.2, 250.0});
    const std::string t2 = manifest_to_json(s);
    const ExperimentManifest back = manifest_from_json(t2);
    CHECK(manifest_to_json(back) == t2);
    CHECK(back.pipeline.lora.spreading_factor == 7);
    CHECK(!back.presets.at("indoor").spec.snr_db);
    CHECK(back.phases.at(1).fast_doppler_hz == 250.0);
    CHECK(back.phases.at(1).devices == DeviceGroup::kAll);

    testing::TempDir dir("manifest");
    write_manifest(dir.path / "m.json", s);
    CHECK(manifest_to_json(read_manifest(dir.path / "m.json")) == t2);
    CHECK_THROWS_AS(read_manifest(dir.path / "missing.json"), IoError);
}

TEST_CASE("manifest validation")
{
    CHECK_NOTHROW(default_manifest().validate());
    CHECK_THROWS_AS(manifest_from_json("{not json"), ValidationError);
    CHECK_THROWS_AS(manifest_from_json("[1, 2]"), ValidationError);
    CHECK_THROWS_AS(manifest_from_json(R"({"lora": {"preamble_symbols": 5}})"), ValidationError);
    CHECK_THROWS_AS(manifest_from_json(R"({"lora": {"spreading_factor": 13}})"), ValidationError);
    CHECK_THROWS_AS(manifest_from_json(R"({"phases": [{"name": "a", "preset": "lunar"}]})"), ValidationError);
    CHECK_THROWS_AS(manifest_from_json(R"({"phases": []})"), ValidationError);
    CHECK_THROWS_AS(manifest_from_json(R"({"seed": "x"})"), ValidationError);
    CHECK_THROWS_AS(manifest_from_json(R"({"image": {"quotient_clip": [1]}})"), ValidationError);

    ExperimentManifest m = small_manifest(2, 10, "indoor");
    m.phases.push_back({"test", "indoor", 10, 5, DeviceGroup::kLegit});
    CHECK_THROWS_AS(m.validate(), ValidationError);  // packets 5..9 in both
    m.phases.back().packet_offset = 10;
    CHECK_NOTHROW(m.validate());
    m.phases.back().preset = "outdoor";
    m.phases.back().packet_offset = 0;
    CHECK_NOTHROW(m.validate());
    m.phases.push_back({"train", "chamber", 1, 0, DeviceGroup::kLegit});
    CHECK_THROWS_AS(m.validate(), ValidationError);  // duplicate name

    ExperimentManifest r = small_manifest(2, 10, "indoor");
    r.population.rogue = 0;
    r.phases.push_back({"rogue", "outdoor", 10, 0, DeviceGroup::kRogue});
    CHECK_THROWS_AS(r.validate(), ValidationError);
}

TEST_CASE("default phases keep training and test packets disjoint")
{
    const ExperimentManifest m = default_manifest();
    std::map<std::string, const PhaseSpec*> by_name;
    for (const PhaseSpec& p : m.phases) by_name[p.name] = &p;
    const PhaseSpec& adapt = *by_name.at("adapt");
    const PhaseSpec& test = *by_name.at("test");
    CHECK(adapt.preset == test.preset);
    CHECK(adapt.packet_offset + adapt.packets_per_device <= test.packet_offset);
    CHECK(by_name.at("rogue")->devices == DeviceGroup::kRogue);
    for (const PhaseSpec& p : m.phases) CHECK((p.devices != DeviceGroup::kRogue || p.name == "rogue"));
}

TEST_CASE("population lists legitimate devices before rogues")
{
    const auto pop = build_population(small_manifest(3, 1, "chamber"));
    REQUIRE(pop.size() == 4);
    CHECK(pop[0].profile.device_id == "dev00");
    CHECK(pop[2].profile.device_id == "dev02");
    CHECK(pop[2].label == 2);
    CHECK(pop[3].profile.device_id == "rogue00");
    CHECK(pop[3].label == -1);
}

TEST_CASE("chamber dataset: complete, unscreened and byte-identical on rerun")
{
    ExperimentManifest m = small_manifest(3, 8, "chamber");
    testing::TempDir a("gen_a"), b("gen_b"), c("gen_c");
    const auto sa = generate_dataset(m, a.path);
    generate_dataset(m, b.path);
    m.workers = 1;
    generate_dataset(m, c.path);

    REQUIRE(sa.size() == 1);
    CHECK(sa[0].accepted == 24);
    CHECK(sa[0].removed == 0);
    const DatasetIndex index = read_index(a.path / "train" / "index.json");
    CHECK(index.entries.size() == 24);
    CHECK(index.classes == std::vector<std::string>{"dev00", "dev01", "dev02"});
    for (FeatureKind kind : {FeatureKind::kQuotient, FeatureKind::kSpectrogram}) {
        const LabeledImages d = load_dataset(a.path / "train", kind);
        CHECK(d.size() == 24);
        CHECK(d.data.image_size == 64);
    }

    auto ta = testing::read_tree(a.path), tc = testing::read_tree(c.path);
    CHECK(ta.size() == 24 * 2 + 4);  // images, manifest, summary, index, removals
    CHECK(ta == testing::read_tree(b.path));
    // Only the recorded worker count may differ between thread counts.
    ta.erase("manifest.json");
    tc.erase("manifest.json");
    CHECK(ta == tc);
}

TEST_CASE("injected fast-fading pairs are screened out")
{
    ExperimentManifest m = small_manifest(4, 40, "indoor");
    m.phases[0].fast_fraction = 0.2;
    const PhaseData d = generate_phase(m, "train");
    const PhaseSummary s = summarize(d.index);
    const std::size_t clean = s.accepted + s.removed - s.fast_injected;
    CHECK(s.fast_injected >= 20);
    CHECK(s.fast_removed * 10 >= s.fast_injected * 9);
    CHECK((s.removed - s.fast_removed) * 20 <= clean);
    for (const RemovedPair& r : d.index.removed) CHECK(r.reason.find("rho_d") != std::string::npos);
}

TEST_CASE("take_per_device keeps the lowest packet indices")
{
    LabeledImages d;
    d.data.image_size = 1;
    const std::vector<std::pair<std::string, int>> rows{{"a", 5}, {"b", 1}, {"a", 2}, {"a", 9}, {"b", 0}};
    const std::vector<float> pixel{0.0f};
    for (const auto& [dev, pkt] : rows) {
        d.data.add(pixel, dev == "a" ? 0 : 1);
        d.devices.push_back(dev);
        d.packets.push_back(pkt);
    }
    const LabeledImages t = take_per_device(d, 2);
    CHECK(t.packets == std::vector<int>{5, 1, 2, 0});
    CHECK(min_per_device(d) == 2);
    CHECK_THROWS_AS(take_per_device(d, 3), ValidationError);
}

TEST_CASE("toy quotient run: training, rogue checks and reports")
{
    const ExperimentManifest m = small_manifest(2, 20, "chamber");
    const LabeledImages train = to_labeled(generate_phase(m, "train"), FeatureKind::kQuotient);
    REQUIRE(train.size() == 40);

    TrainResult tr;
    CnnModel model = train_classifier(train, quick_train(), &tr);
    CHECK(tr.epoch_loss.size() == 15);
    const EvalReport ev = evaluate_classifier(model, train);
    CHECK(ev.accuracy == 1.0);
    CHECK(ev.confusion.trace() == 40);

    SUBCASE("a copy of a training device is indistinguishable")
    {
        LabeledImages dev0 = take_per_device(train, 20);
        LabeledImages only;
        only.kind = dev0.kind;
        only.classes = dev0.classes;
        only.data.image_size = dev0.data.image_size;
        for (std::size_t i = 0; i < dev0.size(); ++i) {
            if (dev0.devices[i] != "dev00") continue;
            only.data.add(dev0.data.image(i), dev0.data.labels[i]);
            only.devices.push_back(dev0.devices[i]);
            only.packets.push_back(dev0.packets[i]);
        }
        const RogueReport r = rogue_roc(model, only, as_rogue(only));
        CHECK(r.roc.auc == doctest::Approx(0.5).epsilon(1e-9));
        CHECK_THROWS_AS(detect_rogue(model, train, as_rogue(only), train.classes), ValidationError);
    }
    SUBCASE("empty rogue set is rejected")
    {
        LabeledImages empty;
        empty.kind = FeatureKind::kQuotient;
        CHECK_THROWS_AS(detect_rogue(model, train, empty, train.classes), ValidationError);
    }
    SUBCASE("retraining and reports are byte-identical")
    {
        testing::TempDir dir("toy");
        CnnModel again = train_classifier(train, quick_train());
        write_model(dir.path / "a.bin", model);
        write_model(dir.path / "b.bin", again);
        CHECK(testing::read_file(dir.path / "a.bin") == testing::read_file(dir.path / "b.bin"));
        write_eval_report(dir.path / "ra", evaluate_classifier(model, train), {20, 3});
        write_eval_report(dir.path / "rb", evaluate_classifier(again, train), {20, 3});
        CHECK(testing::read_tree(dir.path / "ra") == testing::read_tree(dir.path / "rb"));
        CHECK(!testing::read_tree(dir.path / "ra").empty());
    }
}

TEST_CASE("training rejects unusable datasets")
{
    LabeledImages one;
    one.data.image_size = 64;
    one.classes = {"dev00"};
    CHECK_THROWS_AS(train_classifier(one, quick_train(1)), ValidationError);
}

TEST_CASE("cli exit codes")
{
    testing::TempDir dir("cli");
    const std::string d = dir.path.string();
    CHECK(run_cli("") == 2);
    CHECK(run_cli("no-such-command") == 2);
    CHECK(run_cli("default-manifest") == 0);
    CHECK(run_cli("train --dataset " + d + "/missing --out " + d + "/m.bin") == 1);
    {
        std::ofstream(dir.path / "bad.json") << R"({"lora": {"preamble_symbols": 3}})";
    }
    CHECK(run_cli("gen-dataset --manifest " + d + "/bad.json --out " + d + "/out") == 2);
    CHECK(run_cli("gen-dataset --manifest " + d + "/absent.json --out " + d + "/out") == 1);

    ExperimentManifest m = small_manifest(2, 3, "chamber");
    write_manifest(dir.path / "ok.json", m);
    CHECK(run_cli("gen-dataset --manifest " + d + "/ok.json --out " + d + "/ds") == 0);
    CHECK(fs::exists(dir.path / "ds" / "train" / "index.json"));
    CHECK(run_cli("train --dataset " + d + "/ds/train --out " + d + "/m.bin --epochs 1") == 0);
    CHECK(run_cli("evaluate --model " + d + "/m.bin --dataset " + d + "/ds/train --report " + d + "/rep") == 0);
    CHECK(fs::exists(dir.path / "m.bin.json"));
    CHECK(run_cli("transfer --base " + d + "/m.bin --dataset " + d + "/ds/train --n-per-device 9") == 2);
}
