#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "framediff/denoiser.hpp"
#include "framediff/framing.hpp"
#include "framediff/predictors.hpp"
#include "framediff/schedule.hpp"

namespace framediff {

// Self-describing model container: a JSON header (kind, configs, training
// state, array directory) followed by raw little-endian f64 blocks. Doubles
// round-trip bit-exactly.
struct Checkpoint {
    std::string kind;  // "denoiser", "duration" or "energy"
    nlohmann::json meta;
    std::vector<std::pair<std::string, std::vector<double>>> arrays;

    const std::vector<double>* find(const std::string& name) const;
    std::vector<double>& add(const std::string& name, std::size_t count);
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Content hash of a checkpoint file, echoed into output metadata sidecars.
std::uint64_t checkpoint_file_hash(const std::string& path);

nlohmann::json denoiser_config_to_json(const DenoiserConfig& cfg);
DenoiserConfig denoiser_config_from_json(const nlohmann::json& j);

nlohmann::json schedule_spec_to_json(const ScheduleSpec& spec);
ScheduleSpec schedule_spec_from_json(const nlohmann::json& j);

nlohmann::json predictor_config_to_json(const PredictorConfig& cfg);
PredictorConfig predictor_config_from_json(const nlohmann::json& j);

// Copies every "param.<name>" array of the checkpoint into the matching
// collected parameter; errors on anything missing or mis-sized.
void restore_params(const Checkpoint& ck, std::vector<ParamRef>& refs);

// A denoiser checkpoint rehydrated for inference: architecture, schedule
// hyperparameters and training frame geometry travel with the weights.
struct LoadedDenoiser {
    DenoiserConfig config;
    ScheduleSpec schedule;
    FrameSpec frame;
    std::unique_ptr<Denoiser> model;
    std::uint64_t file_hash = 0;
};

LoadedDenoiser load_denoiser_checkpoint(const std::string& path);
std::unique_ptr<DurationPredictor> load_duration_checkpoint(const std::string& path);
std::unique_ptr<EnergyPredictor> load_energy_checkpoint(const std::string& path);

}  // namespace framediff
