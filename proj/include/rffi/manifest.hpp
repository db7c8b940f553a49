#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rffi/cnn.hpp"
#include "rffi/fingerprint.hpp"
#include "rffi/impairments.hpp"
#include "rffi/pipeline.hpp"

namespace rffi {

struct PopulationSpec {
    int legit = 10;
    int rogue = 2;
    double spread = 0.02;
    SalehParams nominal;
    double drive_low = 0.5;
    double power_high_dbm = 17.0;
    double power_low_dbm = 10.0;
    // Per-device transmit-chain ripple ahead of the PA; 0 keeps the
    // constant-envelope model where each device reduces to one gain ratio.
    double tx_ripple_db = 0.0;
    int tx_ripple_terms = 3;
};

enum class DeviceGroup { kLegit, kRogue, kAll };

// One block of packet pairs captured under a single channel preset. Packet
// indices [packet_offset, packet_offset + packets_per_device) key the seeds.
struct PhaseSpec {
    std::string name;
    std::string preset = "chamber";
    int packets_per_device = 200;
    int packet_offset = 0;
    DeviceGroup devices = DeviceGroup::kLegit;
    double fast_fraction = 0.0;  // share of pairs replaced by fast fading
    double fast_doppler_hz = 300.0;
};

struct ExperimentManifest {
    std::uint64_t seed = 1;
    PipelineConfig pipeline;
    PopulationSpec population;
    std::map<std::string, ChannelPreset> presets;  // built-ins plus overrides
    std::vector<PhaseSpec> phases;
    std::vector<FeatureKind> features{FeatureKind::kQuotient, FeatureKind::kSpectrogram};
    TrainConfig train;
    TransferConfig transfer;
    int workers = 0;  // 0 picks the hardware concurrency

    // Throws ValidationError. Also rejects phases that share a preset and
    // overlap in packet indices, which would duplicate packets across sets.
    void validate() const;
    const ChannelPreset& preset(const std::string& name) const;
};

// Desk-scale defaults: chamber training, indoor adaptation and test, rogue
// devices under the outdoor preset.
ExperimentManifest default_manifest();

struct DeviceEntry {
    DeviceProfile profile;
    int label = -1;  // class index, -1 for rogue devices
    std::size_t index = 0;
};

// Legitimate devices first (dev00, dev01, ...), then rogues (rogue00, ...).
std::vector<DeviceEntry> build_population(const ExperimentManifest& manifest);

std::string manifest_to_json(const ExperimentManifest& manifest);
ExperimentManifest manifest_from_json(const std::string& text);
ExperimentManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const ExperimentManifest& manifest);

const char* to_string(DeviceGroup group);
DeviceGroup device_group_from_string(const std::string& name);

}  // namespace rffi
