#include "rffi/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rffi/errors.hpp"
#include "rffi/random.hpp"

namespace rffi {

using nlohmann::json;

const char* to_string(DeviceGroup group)
{
    switch (group) {
    case DeviceGroup::kLegit: return "legit";
    case DeviceGroup::kRogue: return "rogue";
    case DeviceGroup::kAll: return "all";
    }
    return "?";
}

DeviceGroup device_group_from_string(const std::string& name)
{
    if (name == "legit") return DeviceGroup::kLegit;
    if (name == "rogue") return DeviceGroup::kRogue;
    if (name == "all") return DeviceGroup::kAll;
    throw ValidationError("unknown device group: " + name);
}

namespace {

std::map<std::string, ChannelPreset> builtin_presets()
{
    std::map<std::string, ChannelPreset> out;
    for (ChannelPreset p : {chamber_preset(), indoor_preset(), outdoor_preset(), fast_preset()})
        out.emplace(p.name, p);
    return out;
}

}  // namespace

ExperimentManifest default_manifest()
{
    ExperimentManifest m;
    m.presets = builtin_presets();
    // A scalar-per-device PA leaves nothing for the CNN to separate; a small
    // transmit ripple gives each device a frequency-dependent signature, and
    // +-5 dB spends the 8-bit range on the ~1 dB spread that carries it.
    m.population.tx_ripple_db = 0.5;
    m.pipeline.image.quotient_lo = -5.0;
    m.pipeline.image.quotient_hi = 5.0;
    m.phases = {
        PhaseSpec{"train", "chamber", 200, 0, DeviceGroup::kLegit},
        PhaseSpec{"adapt", "indoor", 200, 0, DeviceGroup::kLegit},
        PhaseSpec{"test", "indoor", 100, 200, DeviceGroup::kLegit},
        PhaseSpec{"outdoor_test", "outdoor", 100, 0, DeviceGroup::kLegit},
        PhaseSpec{"rogue", "outdoor", 100, 0, DeviceGroup::kRogue},
    };
    return m;
}

const ChannelPreset& ExperimentManifest::preset(const std::string& name) const
{
    const auto it = presets.find(name);
    if (it == presets.end()) throw ValidationError("unknown channel preset: " + name);
    return it->second;
}

void ExperimentManifest::validate() const
{
    pipeline.validate();
    require(population.legit >= 1, "at least one legitimate device is required");
    require(population.rogue >= 0, "rogue count must be nonnegative");
    require(population.spread >= 0.0 && population.spread < 0.5, "spread must be in [0, 0.5)");
    require(population.tx_ripple_db >= 0.0 && population.tx_ripple_terms >= 0, "invalid transmit ripple");
    population.nominal.validate();
    // The distortion screen needs enough frames for a meaningful peak-profile correlation.
    require(pipeline.lora.preamble_symbols >= 10, "preamble_symbols must be at least 10");
    require(!features.empty(), "at least one feature kind is required");
    require(workers >= 0, "workers must be nonnegative");
    require(train.batch_size >= 1 && train.epochs >= 1 && train.learning_rate > 0.0, "invalid train config");
    require(transfer.batch_size >= 1 && transfer.epochs >= 1 && transfer.learning_rate > 0.0,
            "invalid transfer config");
    for (const auto& [name, p] : presets) {
        require(name == p.name, "preset key does not match its name");
        p.spec.validate();
    }
    require(!phases.empty(), "manifest has no phases");
    std::set<std::string> names;
    for (const PhaseSpec& ph : phases) {
        require(!ph.name.empty() && ph.name.find('/') == std::string::npos && ph.name != "." && ph.name != "..",
                "invalid phase name: " + ph.name);
        require(names.insert(ph.name).second, "duplicate phase name: " + ph.name);
        preset(ph.preset);
        require(ph.packets_per_device >= 1, "packets_per_device must be positive");
        require(ph.packet_offset >= 0, "packet_offset must be nonnegative");
        require(ph.fast_fraction >= 0.0 && ph.fast_fraction <= 1.0, "fast_fraction must be in [0, 1]");
        require(ph.fast_fraction == 0.0 || ph.fast_doppler_hz > 0.0, "fast_doppler_hz must be positive");
        require(ph.devices != DeviceGroup::kRogue || population.rogue > 0, "rogue phase without rogue devices");
    }
    for (std::size_t i = 0; i < phases.size(); ++i) {
        for (std::size_t j = i + 1; j < phases.size(); ++j) {
            const PhaseSpec& a = phases[i];
            const PhaseSpec& b = phases[j];
            if (a.preset != b.preset) continue;
            const bool devices_meet = a.devices == DeviceGroup::kAll || b.devices == DeviceGroup::kAll ||
                                      a.devices == b.devices;
            const bool overlap = a.packet_offset < b.packet_offset + b.packets_per_device &&
                                 b.packet_offset < a.packet_offset + a.packets_per_device;
            require(!(devices_meet && overlap),
                    "phases '" + a.name + "' and '" + b.name + "' reuse packet indices under preset " + a.preset);
        }
    }
}

std::vector<DeviceEntry> build_population(const ExperimentManifest& m)
{
    const PopulationSpec& pop = m.population;
    const int total = pop.legit + pop.rogue;
    std::vector<DeviceProfile> profiles =
        sample_device_population(total, pop.nominal, pop.spread, derive_seed(m.seed, {0x909}));
    assign_tx_ripple(profiles, pop.tx_ripple_db, pop.tx_ripple_terms, m.pipeline.lora.bandwidth_hz,
                     derive_seed(m.seed, {0x91991e}));
    std::vector<DeviceEntry> out;
    out.reserve(profiles.size());
    char id[32];
    for (int i = 0; i < total; ++i) {
        DeviceProfile& p = profiles[static_cast<std::size_t>(i)];
        const bool legit = i < pop.legit;
        std::snprintf(id, sizeof id, legit ? "dev%02d" : "rogue%02d", legit ? i : i - pop.legit);
        p.device_id = id;
        p.drive_low = pop.drive_low;
        p.power_high_dbm = pop.power_high_dbm;
        p.power_low_dbm = pop.power_low_dbm;
        p.validate();
        out.push_back({p, legit ? i : -1, static_cast<std::size_t>(i)});
    }
    return out;
}

namespace {

json saleh_json(const SalehParams& p)
{
    return {{"alpha_a", p.alpha_a}, {"beta_a", p.beta_a}, {"alpha_phi", p.alpha_phi}, {"beta_phi", p.beta_phi}};
}

SalehParams saleh_from(const json& j, SalehParams p)
{
    p.alpha_a = j.value("alpha_a", p.alpha_a);
    p.beta_a = j.value("beta_a", p.beta_a);
    p.alpha_phi = j.value("alpha_phi", p.alpha_phi);
    p.beta_phi = j.value("beta_phi", p.beta_phi);
    return p;
}

json channel_json(const ChannelSpec& c)
{
    json taps = json::array();
    for (const Tap& t : c.taps) taps.push_back({{"delay", t.delay}, {"power", t.power}});
    json j = {{"taps", taps},
              {"fading", to_string(c.fading)},
              {"doppler_hz", c.doppler_hz},
              {"slow_drift", c.slow_drift},
              {"oscillators", c.oscillators}};
    j["snr_db"] = c.snr_db ? json(*c.snr_db) : json(nullptr);
    return j;
}

ChannelSpec channel_from(const json& j, ChannelSpec c)
{
    if (j.contains("taps")) {
        c.taps.clear();
        for (const json& t : j.at("taps")) c.taps.push_back({t.at("delay").get<std::size_t>(), t.at("power")});
    }
    if (j.contains("fading")) c.fading = fading_from_string(j.at("fading").get<std::string>());
    c.doppler_hz = j.value("doppler_hz", c.doppler_hz);
    c.slow_drift = j.value("slow_drift", c.slow_drift);
    c.oscillators = j.value("oscillators", c.oscillators);
    if (j.contains("snr_db")) {
        if (j.at("snr_db").is_null()) c.snr_db.reset();
        else c.snr_db = j.at("snr_db").get<double>();
    }
    return c;
}

}  // namespace

std::string manifest_to_json(const ExperimentManifest& m)
{
    const PipelineConfig& p = m.pipeline;
    json j;
    j["seed"] = m.seed;
    j["workers"] = m.workers;
    j["lora"] = {{"carrier_freq_hz", p.lora.carrier_freq_hz}, {"bandwidth_hz", p.lora.bandwidth_hz},
                 {"spreading_factor", p.lora.spreading_factor}, {"sample_rate_hz", p.lora.sample_rate_hz},
                 {"preamble_symbols", p.lora.preamble_symbols}, {"coding_rate", p.lora.coding_rate}};
    j["stft"] = {{"window_len", p.stft.window_len},
                 {"hop", p.stft.hop},
                 {"window", p.stft.window == WindowKind::kHann ? "hann" : "rectangular"}};
    j["image"] = {{"size", p.image.size},
                  {"quotient_clip", {p.image.quotient_lo, p.image.quotient_hi}},
                  {"spectrogram_range_db", p.image.spectrogram_range_db},
                  {"band_crop", p.image.band_crop},
                  {"ridge_fraction", p.image.ridge_fraction}};
    j["gap_samples"] = p.gap();
    j["max_lead"] = p.max_lead;
    j["theta"] = p.theta;
    const PopulationSpec& pop = m.population;
    j["population"] = {{"legit", pop.legit},
                       {"rogue", pop.rogue},
                       {"spread", pop.spread},
                       {"nominal", saleh_json(pop.nominal)},
                       {"drive_low", pop.drive_low},
                       {"power_high_dbm", pop.power_high_dbm},
                       {"power_low_dbm", pop.power_low_dbm},
                       {"tx_ripple_db", pop.tx_ripple_db},
                       {"tx_ripple_terms", pop.tx_ripple_terms}};
    json presets = json::object();
    for (const auto& [name, preset] : m.presets) presets[name] = channel_json(preset.spec);
    j["presets"] = presets;
    json phases = json::array();
    for (const PhaseSpec& ph : m.phases)
        phases.push_back({{"name", ph.name},
                          {"preset", ph.preset},
                          {"packets_per_device", ph.packets_per_device},
                          {"packet_offset", ph.packet_offset},
                          {"devices", to_string(ph.devices)},
                          {"fast_fraction", ph.fast_fraction},
                          {"fast_doppler_hz", ph.fast_doppler_hz}});
    j["phases"] = phases;
    json features = json::array();
    for (FeatureKind f : m.features) features.push_back(to_string(f));
    j["features"] = features;
    j["classifier"] = {
        {"train",
         {{"learning_rate", m.train.learning_rate}, {"batch_size", m.train.batch_size}, {"epochs", m.train.epochs}}},
        {"transfer",
         {{"learning_rate", m.transfer.learning_rate},
          {"new_layer_lr_factor", m.transfer.new_layer_lr_factor},
          {"batch_size", m.transfer.batch_size},
          {"epochs", m.transfer.epochs}}}};
    return j.dump(2) + "\n";
}

ExperimentManifest manifest_from_json(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("manifest is not valid JSON: ") + e.what());
    }
    require(j.is_object(), "manifest must be a JSON object");
    ExperimentManifest m = default_manifest();
    try {
        m.seed = j.value("seed", m.seed);
        m.workers = j.value("workers", m.workers);
        PipelineConfig& p = m.pipeline;
        if (j.contains("lora")) {
            const json& l = j.at("lora");
            p.lora.carrier_freq_hz = l.value("carrier_freq_hz", p.lora.carrier_freq_hz);
            p.lora.bandwidth_hz = l.value("bandwidth_hz", p.lora.bandwidth_hz);
            p.lora.spreading_factor = l.value("spreading_factor", p.lora.spreading_factor);
            p.lora.sample_rate_hz = l.value("sample_rate_hz", p.lora.sample_rate_hz);
            p.lora.preamble_symbols = l.value("preamble_symbols", p.lora.preamble_symbols);
            p.lora.coding_rate = l.value("coding_rate", p.lora.coding_rate);
        }
        if (j.contains("stft")) {
            const json& s = j.at("stft");
            p.stft.window_len = s.value("window_len", p.stft.window_len);
            p.stft.hop = s.value("hop", p.stft.hop);
            const std::string w = s.value("window", std::string("hann"));
            require(w == "hann" || w == "rectangular", "unknown window: " + w);
            p.stft.window = w == "hann" ? WindowKind::kHann : WindowKind::kRectangular;
        }
        if (j.contains("image")) {
            const json& im = j.at("image");
            p.image.size = im.value("size", p.image.size);
            if (im.contains("quotient_clip")) {
                const json& c = im.at("quotient_clip");
                require(c.is_array() && c.size() == 2, "quotient_clip must be [lo, hi]");
                p.image.quotient_lo = c[0];
                p.image.quotient_hi = c[1];
            }
            p.image.spectrogram_range_db = im.value("spectrogram_range_db", p.image.spectrogram_range_db);
            p.image.band_crop = im.value("band_crop", p.image.band_crop);
            p.image.ridge_fraction = im.value("ridge_fraction", p.image.ridge_fraction);
        }
        p.gap_samples = j.value("gap_samples", p.gap_samples);
        p.max_lead = j.value("max_lead", p.max_lead);
        p.theta = j.value("theta", p.theta);
        if (j.contains("population")) {
            const json& pj = j.at("population");
            PopulationSpec& pop = m.population;
            pop.legit = pj.value("legit", pop.legit);
            pop.rogue = pj.value("rogue", pop.rogue);
            pop.spread = pj.value("spread", pop.spread);
            if (pj.contains("nominal")) pop.nominal = saleh_from(pj.at("nominal"), pop.nominal);
            pop.drive_low = pj.value("drive_low", pop.drive_low);
            pop.power_high_dbm = pj.value("power_high_dbm", pop.power_high_dbm);
            pop.power_low_dbm = pj.value("power_low_dbm", pop.power_low_dbm);
            pop.tx_ripple_db = pj.value("tx_ripple_db", pop.tx_ripple_db);
            pop.tx_ripple_terms = pj.value("tx_ripple_terms", pop.tx_ripple_terms);
        }
        if (j.contains("presets")) {
            for (const auto& [name, spec] : j.at("presets").items()) {
                auto it = m.presets.find(name);
                ChannelPreset base = it != m.presets.end() ? it->second : ChannelPreset{name, ChannelSpec{}};
                base.spec = channel_from(spec, base.spec);
                m.presets[name] = base;
            }
        }
        if (j.contains("phases")) {
            m.phases.clear();
            for (const json& ph : j.at("phases")) {
                PhaseSpec s;
                s.name = ph.at("name").get<std::string>();
                s.preset = ph.value("preset", s.preset);
                s.packets_per_device = ph.value("packets_per_device", s.packets_per_device);
                s.packet_offset = ph.value("packet_offset", s.packet_offset);
                s.devices = device_group_from_string(ph.value("devices", std::string("legit")));
                s.fast_fraction = ph.value("fast_fraction", s.fast_fraction);
                s.fast_doppler_hz = ph.value("fast_doppler_hz", s.fast_doppler_hz);
                m.phases.push_back(s);
            }
        }
        if (j.contains("features")) {
            m.features.clear();
            for (const json& f : j.at("features")) m.features.push_back(feature_from_string(f.get<std::string>()));
        }
        if (j.contains("classifier")) {
            const json& c = j.at("classifier");
            if (c.contains("train")) {
                const json& t = c.at("train");
                m.train.learning_rate = t.value("learning_rate", m.train.learning_rate);
                m.train.batch_size = t.value("batch_size", m.train.batch_size);
                m.train.epochs = t.value("epochs", m.train.epochs);
            }
            if (c.contains("transfer")) {
                const json& t = c.at("transfer");
                m.transfer.learning_rate = t.value("learning_rate", m.transfer.learning_rate);
                m.transfer.new_layer_lr_factor = t.value("new_layer_lr_factor", m.transfer.new_layer_lr_factor);
                m.transfer.batch_size = t.value("batch_size", m.transfer.batch_size);
                m.transfer.epochs = t.value("epochs", m.transfer.epochs);
            }
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed manifest: ") + e.what());
    }
    m.train.seed = derive_seed(m.seed, {0x7a1});
    m.transfer.seed = derive_seed(m.seed, {0x7f2});
    m.validate();
    return m;
}

ExperimentManifest read_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return manifest_from_json(ss.str());
}

void write_manifest(const std::filesystem::path& path, const ExperimentManifest& manifest)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << manifest_to_json(manifest);
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace rffi
