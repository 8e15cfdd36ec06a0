#pragma once

#include "json.hpp"
#include "vhp/trainer/trainer.hpp"

namespace vhp::trainer {

// Readers reject unknown keys and fill missing ones from the value passed in,
// so a preset can be loaded first and then overridden key by key.

nlohmann::json to_json(const diffcore::NetworkSpec& spec);
nlohmann::json to_json(const ModelConfig& cfg);
nlohmann::json to_json(const schedule::ScheduleConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);

void merge(const nlohmann::json& j, diffcore::NetworkSpec& spec, const std::string& where);
void merge(const nlohmann::json& j, ModelConfig& cfg, const std::string& where);
void merge(const nlohmann::json& j, schedule::ScheduleConfig& cfg, const std::string& where);
void merge(const nlohmann::json& j, TrainConfig& cfg, const std::string& where);

}  // namespace vhp::trainer
