#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "marl/diffnet/agent_net.hpp"
#include "marl/diffnet/mixing_net.hpp"

namespace marl::diffnet {

inline constexpr int kCheckpointFormatVersion = 1;

// On-disk document:
// {
//   "format_version": 1,
//   "kind": "team" | "adversary",
//   "method": free-form tag ("qmix", "ow", "owr", ...),
//   "networks": { name: { "type": "agent" | "mixing", <architecture fields>,
//                         "params": { param: {"shape": [...], "data": [...]}}}},
//   "rng_seed": u64,
//   "config": {...},
//   "config_hash": hex FNV-1a of config.dump()
// }
struct Checkpoint {
  std::string kind;
  std::string method;
  std::map<std::string, AgentNet> agents;
  std::map<std::string, MixingNet> mixers;
  std::uint64_t rng_seed = 0;
  nlohmann::json config = nlohmann::json::object();

  std::string config_hash() const;
  bool operator==(const Checkpoint& other) const;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fnv1a_hex(const std::string& bytes);

nlohmann::json to_json(const ParamSet& params);
ParamSet params_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Checkpoint& ckpt);
// FNV-1a over the whole serialized document (parameters included).
std::string content_hash(const Checkpoint& ckpt);
// Verifies format version and config hash; throws CheckpointError.
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

bool operator==(const AgentNet& a, const AgentNet& b);
bool operator==(const MixingNet& a, const MixingNet& b);

}  // namespace marl::diffnet
