#include "marl/diffnet/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace marl::diffnet {

using nlohmann::json;

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string Checkpoint::config_hash() const { return fnv1a_hex(config.dump()); }

bool operator==(const AgentNet& a, const AgentNet& b) {
  return a.config == b.config && a.params == b.params;
}

bool operator==(const MixingNet& a, const MixingNet& b) {
  return a.config == b.config && a.params == b.params;
}

bool Checkpoint::operator==(const Checkpoint& o) const {
  return kind == o.kind && method == o.method && agents == o.agents &&
         mixers == o.mixers && rng_seed == o.rng_seed && config == o.config;
}

json to_json(const ParamSet& params) {
  json j = json::object();
  for (const auto& [name, t] : params) {
    if (!t.all_finite())
      throw CheckpointError("refusing to serialize non-finite parameter " +
                            name);
    j[name] = {{"shape", t.shape}, {"data", t.data}};
  }
  return j;
}

ParamSet params_from_json(const json& j) {
  ParamSet out;
  for (const auto& [name, v] : j.items()) {
    try {
      out.emplace(name, Tensor(v.at("shape").get<std::vector<std::size_t>>(),
                               v.at("data").get<std::vector<double>>()));
    } catch (const std::exception& e) {
      throw CheckpointError("bad parameter " + name + ": " + e.what());
    }
  }
  return out;
}

json to_json(const Checkpoint& ckpt) {
  json nets = json::object();
  for (const auto& [name, net] : ckpt.agents) {
    nets[name] = {{"type", "agent"},
                  {"arch", to_string(net.config.arch)},
                  {"input_dim", net.config.input_dim},
                  {"hidden_dim", net.config.hidden_dim},
                  {"n_actions", net.config.n_actions},
                  {"params", to_json(net.params)}};
  }
  for (const auto& [name, mix] : ckpt.mixers) {
    if (nets.contains(name))
      throw CheckpointError("duplicate network name " + name);
    nets[name] = {{"type", "mixing"},
                  {"n_agents", mix.config.n_agents},
                  {"state_dim", mix.config.state_dim},
                  {"embed_dim", mix.config.embed_dim},
                  {"params", to_json(mix.params)}};
  }
  return {{"format_version", kCheckpointFormatVersion},
          {"kind", ckpt.kind},
          {"method", ckpt.method},
          {"networks", nets},
          {"rng_seed", ckpt.rng_seed},
          {"config", ckpt.config},
          {"config_hash", ckpt.config_hash()}};
}

std::string content_hash(const Checkpoint& ckpt) {
  return fnv1a_hex(to_json(ckpt).dump());
}

Checkpoint checkpoint_from_json(const json& j) {
  Checkpoint ckpt;
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion)
      throw CheckpointError("unsupported checkpoint format_version " +
                            std::to_string(version));
    ckpt.kind = j.at("kind").get<std::string>();
    ckpt.method = j.at("method").get<std::string>();
    ckpt.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    ckpt.config = j.at("config");
    for (const auto& [name, n] : j.at("networks").items()) {
      const std::string type = n.at("type").get<std::string>();
      if (type == "agent") {
        AgentNetConfig c;
        c.arch = agent_arch_from_string(n.at("arch").get<std::string>());
        c.input_dim = n.at("input_dim").get<int>();
        c.hidden_dim = n.at("hidden_dim").get<int>();
        c.n_actions = n.at("n_actions").get<int>();
        AgentNet net = AgentNet::zeros(c);
        ParamSet p = params_from_json(n.at("params"));
        if (!same_layout(p, net.params))
          throw CheckpointError("network " + name +
                                " parameters do not match its architecture");
        net.params = std::move(p);
        ckpt.agents.emplace(name, std::move(net));
      } else if (type == "mixing") {
        MixingNetConfig c;
        c.n_agents = n.at("n_agents").get<int>();
        c.state_dim = n.at("state_dim").get<int>();
        c.embed_dim = n.at("embed_dim").get<int>();
        MixingNet mix = MixingNet::zeros(c);
        ParamSet p = params_from_json(n.at("params"));
        if (!same_layout(p, mix.params))
          throw CheckpointError("network " + name +
                                " parameters do not match its architecture");
        mix.params = std::move(p);
        ckpt.mixers.emplace(name, std::move(mix));
      } else {
        throw CheckpointError("unknown network type " + type);
      }
    }
    const std::string recorded = j.at("config_hash").get<std::string>();
    if (recorded != ckpt.config_hash())
      throw CheckpointError("config_hash mismatch: recorded " + recorded +
                            ", computed " + ckpt.config_hash());
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  } catch (const DimensionError& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path.string());
  out << to_json(ckpt).dump() << '\n';
  if (!out) throw CheckpointError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw CheckpointError("cannot parse " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace marl::diffnet
