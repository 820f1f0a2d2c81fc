#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "berth/agent.hpp"
#include "berth/dynamics.hpp"
#include "berth/env.hpp"
#include "berth/ppo.hpp"

namespace berth::harness {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunSettings {
  std::int64_t episodes = 300;
  int workers = 1;
  int checkpoint_every = 50;  // updates
  int eval_every = 50;        // updates; 0 disables evaluation snapshots
  int eval_starts = 10;
  std::uint64_t eval_seed = 777;
};

struct RunConfig {
  std::string profile = "desk";
  std::uint64_t seed = 0;
  dynamics::ShipModel ship;
  env::EnvConfig env;
  agent::AgentConfig agent;
  ppo::TrainConfig ppo;
  RunSettings run;

  json to_json() const;
  static RunConfig from_json(const json& j);

  agent::ActionBounds action_bounds() const;
  void validate() const;
};

// Profile defaults for the env/agent/ppo/run sections ("desk" or "paper").
json profile_defaults(const std::string& profile);

// Reads a JSON config file; throws ConfigError on IO/parse failures.
json read_json_file(const std::filesystem::path& path);

// Overlays `user` on the profile defaults and parses the result. The profile
// is taken from `profile_override`, else the file's "profile", else "desk".
RunConfig resolve_config(const json& user, const std::string& profile_override = "");
RunConfig load_config(const std::filesystem::path& path, const std::string& profile_override = "");

dynamics::ShipModel parse_ship_model(const json& j);
json ship_model_to_json(const dynamics::ShipModel& model);

}  // namespace berth::harness
