#include "marl/harness/experiment.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>

#include "marl/advpolicy/adversary.hpp"
#include "marl/qmix/train.hpp"

#ifndef MARL_CODE_VERSION
#define MARL_CODE_VERSION "dev"
#endif

namespace marl::harness {

namespace {

const std::set<std::string> kPolicies = {"none", "greedy", "random", "lw",
                                         "qmix-worst", "ow", "owr"};
const std::set<std::string> kAttacks = {"none", "fgsm", "it-fgsm", "jsma", "d-jsma"};

bool needs_adversary(const std::string& policy) {
  return policy == "ow" || policy == "owr";
}

}  // namespace

void ExperimentConfig::validate() const {
  if (schema_version != kSchemaVersion)
    throw ExperimentError("experiment config: unsupported schema_version " +
                          std::to_string(schema_version));
  if (!kPolicies.contains(target_policy))
    throw ExperimentError("unknown target_policy: " + target_policy);
  if (!kAttacks.contains(attack)) throw ExperimentError("unknown attack: " + attack);
  if (attack != "none" && attack != "fgsm" && target_policy == "none")
    throw ExperimentError("targeted attack '" + attack + "' needs a target_policy");
  if (needs_adversary(target_policy) && !adversaries.contains(target_policy))
    throw ExperimentError("target_policy " + target_policy +
                          " needs adversaries." + target_policy);
  if (n_episodes < 0) throw ExperimentError("n_episodes must be >= 0");
  if (!(theta > 0.0 && theta <= 1.0)) throw ExperimentError("theta must lie in (0, 1]");
  try {
    budget.validate();
  } catch (const std::invalid_argument& e) {
    throw ExperimentError(std::string("budget: ") + e.what());
  }
}

int ExperimentConfig::episodes() const {
  if (n_episodes > 0) return n_episodes;
  return attack == "none" ? kDefaultDirectEpisodes : kDefaultAttackEpisodes;
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"schema_version", c.schema_version},
       {"team", c.team_checkpoint},
       {"adversaries", c.adversaries},
       {"victim", c.victim},
       {"target_policy", c.target_policy},
       {"attack", c.attack},
       {"budget", c.budget},
       {"theta", c.theta},
       {"n_episodes", c.n_episodes},
       {"seed", c.seed},
       {"output_dir", c.output_dir},
       {"write_trace", c.write_trace},
       {"label", c.label}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  static const std::set<std::string> known = {
      "schema_version", "team",       "adversaries", "victim",     "target_policy",
      "attack",         "budget",     "theta",       "n_episodes", "seed",
      "output_dir",     "write_trace", "label"};
  for (const auto& [k, _] : j.items())
    if (!known.contains(k)) throw ExperimentError("unknown experiment key: " + k);
  if (!j.contains("schema_version"))
    throw ExperimentError("experiment config: missing schema_version");
  c.schema_version = j.at("schema_version").get<int>();
  auto read = [&](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
  };
  read("team", c.team_checkpoint);
  read("adversaries", c.adversaries);
  read("victim", c.victim);
  read("target_policy", c.target_policy);
  read("attack", c.attack);
  if (j.contains("budget")) advexample::from_json(j.at("budget"), c.budget);
  read("theta", c.theta);
  read("n_episodes", c.n_episodes);
  read("seed", c.seed);
  read("output_dir", c.output_dir);
  read("write_trace", c.write_trace);
  read("label", c.label);
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ExperimentError("cannot open " + path.string());
  ExperimentConfig c = nlohmann::json::parse(in).get<ExperimentConfig>();
  c.validate();
  return c;
}

bool apply_seed_override(std::uint64_t& seed) {
  const char* v = std::getenv("MARL_REDTEAM_SEED");
  if (!v || !*v) return false;
  char* end = nullptr;
  const unsigned long long s = std::strtoull(v, &end, 10);
  if (*end != '\0') throw ExperimentError("MARL_REDTEAM_SEED is not an integer");
  seed = s;
  return true;
}

Loaded assemble(const diffnet::Checkpoint& team,
                const std::map<std::string, diffnet::Checkpoint>& adversaries,
                int victim) {
  Loaded l;
  l.team_checkpoint = team;
  l.team = qmix::team_from_checkpoint(team);
  l.env = qmix::env_config_from_checkpoint(team);
  if (victim < 0 || victim >= l.team.n_agents())
    throw ExperimentError("victim index " + std::to_string(victim) +
                          " out of range");
  const std::string hash = diffnet::content_hash(team);
  for (const auto& [name, ckpt] : adversaries) {
    advpolicy::AdvPolicy p = advpolicy::adversary_from_checkpoint(ckpt);
    if (advpolicy::adversary_team_hash(ckpt) != hash)
      throw ExperimentError("adversary '" + name +
                            "' was trained against a different team checkpoint");
    if (p.victim != victim)
      throw ExperimentError("adversary '" + name + "' was trained for victim " +
                            std::to_string(p.victim));
    if (advpolicy::to_string(p.variant) != name)
      throw ExperimentError("adversary '" + name + "' checkpoint has method " +
                            ckpt.method);
    l.adversary_checkpoints.emplace(name, ckpt);
    l.adversaries.emplace(name, std::move(p));
  }
  return l;
}

Loaded load_checkpoints(const ExperimentConfig& config) {
  config.validate();
  const diffnet::Checkpoint team = diffnet::load_checkpoint(config.team_checkpoint);
  std::map<std::string, diffnet::Checkpoint> adv;
  for (const auto& [name, path] : config.adversaries)
    adv.emplace(name, diffnet::load_checkpoint(path));
  return assemble(team, adv, config.victim);
}

long long Histogram::total() const {
  long long t = 0;
  for (long long c : counts) t += c;
  return t;
}

Histogram l1_histogram(const std::vector<double>& values) {
  Histogram h;
  h.edges = {0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0, 12.0,
             16.0, 20.0, 30.0, 50.0, 100.0, 2.0 * env::kObsDim};
  h.counts.assign(h.edges.size() - 1, 0);
  for (double v : values) {
    std::size_t k = 0;
    while (k + 2 < h.edges.size() && v >= h.edges[k + 1]) ++k;
    ++h.counts[k];
  }
  return h;
}

Interval wilson_interval(long long k, long long n) {
  if (n <= 0) return {0.0, 1.0};
  const double z = 1.959963984540054;
  const double p = static_cast<double>(k) / n;
  const double denom = 1.0 + z * z / n;
  const double centre = (p + z * z / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

MetricsRow metrics_from_stats(const qmix::EvalStats& s) {
  MetricsRow r;
  r.n_episodes = s.n_episodes;
  r.avg_reward = s.avg_reward();
  if (s.n_episodes > 1) {
    double var = 0.0;
    for (double v : s.episode_rewards) var += (v - r.avg_reward) * (v - r.avg_reward);
    var /= (s.n_episodes - 1);
    r.reward_stderr = std::sqrt(var / s.n_episodes);
  }
  r.win_rate = s.win_rate();
  r.win_ci = wilson_interval(s.wins, s.n_episodes);
  r.misclassification_rate = s.misclassification_rate();
  r.target_success_rate = s.target_success_rate();
  r.success_ci = wilson_interval(s.successes, s.attacked_steps);
  r.avg_l1 = s.avg_l1();
  r.attacked_steps = s.attacked_steps;
  r.l1_hist = l1_histogram(s.l1);
  r.safety = s.safety;
  r.episode_rewards = s.episode_rewards;
  return r;
}

nlohmann::json to_json(const MetricsRow& r) {
  return {{"label", r.label},
          {"target_policy", r.target_policy},
          {"attack", r.attack},
          {"param", r.param},
          {"avg_reward", r.avg_reward},
          {"reward_stderr", r.reward_stderr},
          {"win_rate", r.win_rate},
          {"win_ci", {r.win_ci.low, r.win_ci.high}},
          {"misclassification_rate", r.misclassification_rate},
          {"target_success_rate", r.target_success_rate},
          {"success_ci", {r.success_ci.low, r.success_ci.high}},
          {"avg_l1", r.avg_l1},
          {"attacked_steps", r.attacked_steps},
          {"l1_histogram", {{"edges", r.l1_hist.edges}, {"counts", r.l1_hist.counts}}},
          {"n_episodes", r.n_episodes},
          {"seed", r.seed},
          {"safety",
           {{"box_violations", r.safety.box_violations},
            {"success_mismatches", r.safety.success_mismatches},
            {"unavailable_selections", r.safety.unavailable_selections}}},
          {"episode_rewards", r.episode_rewards}};
}

std::vector<MetricsRow> rows_from_json(const nlohmann::json& j) {
  std::vector<MetricsRow> rows;
  for (const auto& e : j.at("rows")) {
    MetricsRow r;
    r.label = e.at("label").get<std::string>();
    r.target_policy = e.at("target_policy").get<std::string>();
    r.attack = e.at("attack").get<std::string>();
    r.param = e.at("param").get<double>();
    r.avg_reward = e.at("avg_reward").get<double>();
    r.reward_stderr = e.at("reward_stderr").get<double>();
    r.win_rate = e.at("win_rate").get<double>();
    r.win_ci = {e.at("win_ci").at(0).get<double>(), e.at("win_ci").at(1).get<double>()};
    r.misclassification_rate = e.at("misclassification_rate").get<double>();
    r.target_success_rate = e.at("target_success_rate").get<double>();
    r.success_ci = {e.at("success_ci").at(0).get<double>(),
                    e.at("success_ci").at(1).get<double>()};
    r.avg_l1 = e.at("avg_l1").get<double>();
    r.attacked_steps = e.at("attacked_steps").get<long long>();
    r.l1_hist.edges = e.at("l1_histogram").at("edges").get<std::vector<double>>();
    r.l1_hist.counts =
        e.at("l1_histogram").at("counts").get<std::vector<long long>>();
    r.n_episodes = e.at("n_episodes").get<int>();
    r.seed = e.at("seed").get<std::uint64_t>();
    const auto& s = e.at("safety");
    r.safety.box_violations = s.at("box_violations").get<long long>();
    r.safety.success_mismatches = s.at("success_mismatches").get<long long>();
    r.safety.unavailable_selections = s.at("unavailable_selections").get<long long>();
    r.episode_rewards = e.at("episode_rewards").get<std::vector<double>>();
    rows.push_back(std::move(r));
  }
  return rows;
}

TwoStepHook::TwoStepHook(int victim, advpolicy::TargetSelector& selector,
                         std::string attack, advexample::AttackBudget budget,
                         double theta)
    : victim_(victim),
      selector_(selector),
      attack_(std::move(attack)),
      budget_(std::move(budget)),
      theta_(theta) {}

void TwoStepHook::begin_episode(int, std::uint64_t seed, const env::Snapshot&) {
  selector_.begin_episode(seed);
}

qmix::HookDecision TwoStepHook::decide(const qmix::VictimView& view) {
  // Step one always runs so stateful selectors stay aligned with the episode.
  const int target = selector_.select(view);
  qmix::HookDecision d;
  if (!view.victim_alive) return d;
  const auto& net = view.team->net_for(view.victim);
  const std::vector<double>& obs = view.clean_obs->features;
  const std::vector<bool>& mask = view.clean_obs->available;
  const diffnet::Vector& h = *view.hidden_before;
  const std::span<const double> hidden(h.data(), h.size());

  advexample::AttackResult r;
  d.target = target;
  if (attack_ == "fgsm") {
    r = advexample::fgsm_untargeted(net, obs, hidden, mask, budget_.epsilon);
    d.untargeted = true;
    d.target = -1;
  } else if (attack_ == "it-fgsm") {
    r = advexample::it_fgsm(net, obs, hidden, mask, target, budget_);
  } else if (attack_ == "jsma") {
    r = advexample::jsma_2f(net, obs, hidden, mask, target, theta_,
                            budget_.max_iters_per_theta);
  } else if (attack_ == "d-jsma") {
    if (budget_.theta_schedule.empty()) {
      // Nothing to try: the observation passes through untouched.
      r.perturbed_obs = obs;
      r.success = view.clean_action == target;
    } else {
      r = advexample::d_jsma(net, obs, hidden, mask, target, budget_);
    }
  } else {
    throw ExperimentError("TwoStepHook: unknown attack " + attack_);
  }
  d.kind = qmix::HookDecision::Kind::kPerturb;
  d.perturbed = std::move(r.perturbed_obs);
  d.reported_success = r.success;
  d.iterations = r.iterations_used;
  d.theta_used = r.theta_used;
  return d;
}

std::unique_ptr<advpolicy::TargetSelector> make_target_selector(
    const std::string& target_policy, const Loaded& loaded) {
  if (target_policy == "greedy" || target_policy == "none")
    return std::make_unique<advpolicy::GreedySelector>();
  const advpolicy::AdvVariant v = advpolicy::adv_variant_from_string(target_policy);
  if (v == advpolicy::AdvVariant::kOw || v == advpolicy::AdvVariant::kOwr) {
    auto it = loaded.adversaries.find(target_policy);
    if (it == loaded.adversaries.end())
      throw ExperimentError("no adversary checkpoint loaded for " + target_policy);
    return advpolicy::make_selector(it->second);
  }
  advpolicy::AdvPolicy p;
  p.variant = v;
  return advpolicy::make_selector(p);
}

namespace {

MetricsRow label_row(MetricsRow r, const ExperimentConfig& c) {
  r.label = c.label;
  r.target_policy = c.target_policy;
  r.attack = c.attack;
  if (c.attack == "fgsm" || c.attack == "it-fgsm") r.param = c.budget.epsilon;
  else if (c.attack == "jsma") r.param = c.theta;
  r.seed = c.seed;
  return r;
}

}  // namespace

MetricsRow run_baseline(const ExperimentConfig& config, const Loaded& loaded,
                        qmix::TraceSink* trace) {
  const env::MicroBattle env(loaded.env);
  const qmix::EvalStats s =
      qmix::evaluate(env, loaded.team, config.episodes(), config.seed, nullptr, trace);
  return label_row(metrics_from_stats(s), config);
}

MetricsRow run_direct_control(const ExperimentConfig& config, const Loaded& loaded,
                              qmix::TraceSink* trace) {
  if (config.attack != "none")
    throw ExperimentError("direct control takes no perturbation method");
  if (config.target_policy == "none")
    throw ExperimentError("direct control needs a target_policy");
  const env::MicroBattle env(loaded.env);
  auto selector = make_target_selector(config.target_policy, loaded);
  advpolicy::DirectControlHook hook(config.victim, *selector);
  const qmix::EvalStats s =
      qmix::evaluate(env, loaded.team, config.episodes(), config.seed, &hook, trace);
  return label_row(metrics_from_stats(s), config);
}

MetricsRow run_two_step(const ExperimentConfig& config, const Loaded& loaded,
                        qmix::TraceSink* trace) {
  if (config.attack == "none")
    throw ExperimentError("two-step run needs a perturbation method");
  const env::MicroBattle env(loaded.env);
  auto selector = make_target_selector(config.target_policy, loaded);
  TwoStepHook hook(config.victim, *selector, config.attack, config.budget,
                   config.theta);
  const qmix::EvalStats s =
      qmix::evaluate(env, loaded.team, config.episodes(), config.seed, &hook, trace);
  return label_row(metrics_from_stats(s), config);
}

MetricsRow run_experiment(const ExperimentConfig& config, const Loaded& loaded,
                          qmix::TraceSink* trace) {
  config.validate();
  if (config.attack != "none") return run_two_step(config, loaded, trace);
  if (config.target_policy == "none") return run_baseline(config, loaded, trace);
  return run_direct_control(config, loaded, trace);
}

std::vector<MetricsRow> sweep(const ExperimentConfig& base, const Loaded& loaded,
                              const std::string& axis, const nlohmann::json& values) {
  if (!values.is_array()) throw ExperimentError("sweep values must be an array");
  if (axis != "epsilon" && axis != "theta" && axis != "method")
    throw ExperimentError("unknown sweep axis: " + axis);
  std::vector<MetricsRow> rows;
  for (const auto& v : values) {
    ExperimentConfig c = base;
    if (axis == "epsilon") {
      c.budget.epsilon = v.get<double>();
    } else if (axis == "theta") {
      c.theta = v.get<double>();
    } else {
      const std::string m = v.get<std::string>();
      const auto plus = m.find('+');
      c.target_policy = m.substr(0, plus);
      c.attack = plus == std::string::npos ? "none" : m.substr(plus + 1);
    }
    rows.push_back(run_experiment(c, loaded));
  }
  return rows;
}

namespace {

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

void write_csv(const std::vector<MetricsRow>& rows, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const MetricsRow& r : rows) {
    out << csv_field(r.label) << ',' << r.target_policy << ',' << r.attack << ','
        << fixed2(r.param) << ',' << r.n_episodes << ',' << r.seed << ','
        << fixed2(r.avg_reward) << ',' << fixed2(r.reward_stderr) << ','
        << fixed2(100.0 * r.win_rate) << ',' << fixed2(100.0 * r.win_ci.low) << ','
        << fixed2(100.0 * r.win_ci.high) << ','
        << fixed2(100.0 * r.misclassification_rate) << ','
        << fixed2(100.0 * r.target_success_rate) << ',' << fixed2(r.avg_l1) << ','
        << r.attacked_steps << '\n';
  }
}

void write_json(const std::vector<MetricsRow>& rows, std::ostream& out) {
  nlohmann::json j = {{"schema_version", kSchemaVersion},
                      {"rows", nlohmann::json::array()}};
  for (const MetricsRow& r : rows) j["rows"].push_back(to_json(r));
  out << j.dump(2) << '\n';
}

void write_report(const std::vector<MetricsRow>& rows,
                  const std::filesystem::path& dir, const std::string& stem) {
  if (rows.empty()) throw ExperimentError("report: no rows");
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / (stem + ".csv"), std::ios::binary);
  std::ofstream js(dir / (stem + ".json"), std::ios::binary);
  if (!csv || !js) throw ExperimentError("report: cannot write into " + dir.string());
  write_csv(rows, csv);
  write_json(rows, js);
}

std::string code_version() { return MARL_CODE_VERSION; }

nlohmann::json to_json(const RunManifest& m) {
  return {{"config", m.config},
          {"code_version", m.code_version},
          {"checkpoint_hashes", m.checkpoint_hashes},
          {"wall_seconds", m.wall_seconds}};
}

RunManifest make_manifest(const ExperimentConfig& config, const Loaded& loaded) {
  RunManifest m;
  m.config = config;
  m.code_version = code_version();
  m.checkpoint_hashes["team"] = diffnet::content_hash(loaded.team_checkpoint);
  for (const auto& [name, ckpt] : loaded.adversary_checkpoints)
    m.checkpoint_hashes[name] = diffnet::content_hash(ckpt);
  return m;
}

void JsonlTrace::record(const nlohmann::json& step) { out_ << step.dump() << '\n'; }

}  // namespace marl::harness
