// marl-redteam: train a QMIX team, train adversarial victim policies against
// it, and run / sweep / report attack experiments.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "marl/advpolicy/adversary.hpp"
#include "marl/diffnet/checkpoint.hpp"
#include "marl/harness/experiment.hpp"
#include "marl/harness/scenario.hpp"
#include "marl/qmix/train.hpp"

using namespace marl;

namespace {

harness::Scenario scenario_from(const std::string& path) {
  return path.empty() ? harness::default_scenario() : harness::load_scenario(path);
}

void override_seed(std::uint64_t& seed) {
  if (harness::apply_seed_override(seed))
    std::fprintf(stderr, "seed overridden by MARL_REDTEAM_SEED: %llu\n",
                 static_cast<unsigned long long>(seed));
}

void print_progress(const qmix::TrainLogRow& r) {
  if (r.eval_win_rate >= 0.0)
    std::fprintf(stderr,
                 "episode %6d  loss %.4f  epsilon %.3f  eval win %.3f  reward %.3f\n",
                 r.episode, r.loss, r.epsilon, r.eval_win_rate, r.eval_reward);
}

void write_log(const std::string& path, const std::vector<qmix::TrainLogRow>& log) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  qmix::write_train_log_csv(log, out);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// Runs the experiment(s), writes <stem>.csv/.json and a manifest into the
// config's output directory.
void emit(const harness::ExperimentConfig& cfg, const harness::Loaded& loaded,
          const std::vector<harness::MetricsRow>& rows, const std::string& stem,
          double seconds) {
  const std::filesystem::path dir = cfg.output_dir;
  harness::write_report(rows, dir, stem);
  harness::RunManifest m = harness::make_manifest(cfg, loaded);
  m.wall_seconds = seconds;
  write_text(dir / (stem + ".manifest.json"), harness::to_json(m).dump(2) + "\n");
  harness::write_csv(rows, std::cout);
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string action_name(int a) {
  static const char* names[] = {"noop", "stop", "N", "S", "E", "W"};
  if (a >= 0 && a < env::kActionAttackBase) return names[a];
  return "atk" + std::to_string(a - env::kActionAttackBase);
}

void replay(const std::string& path, int only_episode) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    const int ep = j.value("episode", 0);
    if (only_episode >= 0 && ep != only_episode) continue;
    std::printf("ep %d step %2d reward %.3f  actions", ep, j.at("step").get<int>(),
                j.at("reward").get<double>());
    for (int a : j.at("joint_action")) std::printf(" %s", action_name(a).c_str());
    std::printf("\n");
    for (const auto& u : j.at("units")) {
      if (!u.at("alive").get<bool>()) continue;
      std::printf("    %-5s %-6s (%2d,%2d) hp %3d cd %d\n",
                  u.at("team").get<std::string>().c_str(),
                  u.at("class").get<std::string>().c_str(), u.at("x").get<int>(),
                  u.at("y").get<int>(), u.at("health").get<int>(),
                  u.at("cooldown").get<int>());
    }
    if (j.contains("attack")) {
      const auto& a = j.at("attack");
      std::printf("    attack on %d: target %s clean %s taken %s %s l1 %.3f\n",
                  a.at("victim").get<int>(),
                  action_name(a.at("target").get<int>()).c_str(),
                  action_name(a.at("clean_action").get<int>()).c_str(),
                  action_name(a.at("taken_action").get<int>()).c_str(),
                  a.at("success").get<bool>() ? "hit" : "miss",
                  a.at("l1").get<double>());
    }
    if (j.contains("team_won"))
      std::printf("  episode over: %s\n", j.at("team_won").get<bool>() ? "won" : "lost");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Red-team cooperative multi-agent policies"};
  app.require_subcommand(1);

  std::string scenario_path, out_path, log_path, team_path, method = "ow";
  std::string config_path, axis, values, stem = "results", trace_path;
  std::vector<std::string> inputs;
  int victim = -1, episode = -1, episodes = -1;
  double lambda = -1.0, epsilon = -1.0, alpha = -1.0, theta = -1.0;
  std::vector<double> theta_schedule;
  std::string attack_method, target_policy;
  std::uint64_t seed = 0;
  std::string csv_out, json_out;

  auto* tq = app.add_subcommand("train-qmix", "train the cooperative team");
  tq->add_option("--config", scenario_path, "scenario json");
  tq->add_option("--out", out_path, "team checkpoint to write")->required();
  tq->add_option("--log", log_path, "training log csv");
  auto* tq_seed = tq->add_option("--seed", seed, "training seed");

  auto* ta = app.add_subcommand("train-adv", "train an adversarial victim policy");
  ta->add_option("--method", method, "ow | owr")->check(CLI::IsMember({"ow", "owr"}));
  ta->add_option("--lambda", lambda, "shaping weight (owr)");
  ta->add_option("--team", team_path, "team checkpoint")->required();
  ta->add_option("--victim", victim, "victim agent index");
  ta->add_option("--out", out_path, "adversary checkpoint to write")->required();
  ta->add_option("--config", scenario_path, "scenario json");
  ta->add_option("--log", log_path, "training log csv");
  auto* ta_seed = ta->add_option("--seed", seed, "training seed");

  auto* at = app.add_subcommand("attack", "run one experiment");
  at->add_option("--config", config_path, "experiment json")->required();
  at->add_option("--stem", stem, "output file stem");
  at->add_option("--method", attack_method, "none | fgsm | it-fgsm | jsma | d-jsma");
  at->add_option("--target-policy", target_policy,
                 "none | greedy | random | lw | qmix-worst | ow | owr");
  at->add_option("--epsilon", epsilon, "FGSM-family L-inf budget");
  at->add_option("--alpha", alpha, "it-FGSM step");
  at->add_option("--theta", theta, "fixed JSMA step");
  at->add_option("--theta-schedule", theta_schedule, "d-JSMA steps, ascending");
  at->add_option("--episodes", episodes, "episode count");

  auto* sw = app.add_subcommand("sweep", "run an experiment over a parameter list");
  sw->add_option("--config", config_path, "experiment json")->required();
  sw->add_option("--axis", axis, "epsilon | theta | method")->required();
  sw->add_option("--values", values, "json array of values")->required();
  sw->add_option("--stem", stem, "output file stem");

  auto* rp = app.add_subcommand("report", "merge result json files into one table");
  rp->add_option("--in", inputs, "result json files")->required();
  rp->add_option("--csv", csv_out, "write merged csv here (default stdout)");
  rp->add_option("--json", json_out, "write merged json here");

  auto* rl = app.add_subcommand("replay", "print an episode trace");
  rl->add_option("--trace", trace_path, "trace jsonl")->required();
  rl->add_option("--episode", episode, "only this episode");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto t0 = std::chrono::steady_clock::now();
    if (*tq) {
      harness::Scenario s = scenario_from(scenario_path);
      if (*tq_seed) s.seed = seed;
      override_seed(s.seed);
      qmix::TrainResult r = qmix::train(s.env, s.team, s.seed, print_progress);
      diffnet::save_checkpoint(r.checkpoint, out_path);
      write_log(log_path, r.log);
      std::fprintf(stderr, "wrote %s (%lld updates, %.0f s)\n", out_path.c_str(),
                   r.updates, since(t0));
    } else if (*ta) {
      harness::Scenario s = scenario_from(scenario_path);
      if (*ta_seed) s.seed = seed;
      override_seed(s.seed);
      if (victim >= 0) s.victim = victim;
      advpolicy::AdvTrainConfig c = s.adversary;
      if (method == "ow") c.lambda = 0.0;
      else if (lambda >= 0.0) c.lambda = lambda;
      const diffnet::Checkpoint team = diffnet::load_checkpoint(team_path);
      const env::EnvConfig ec = qmix::env_config_from_checkpoint(team);
      advpolicy::AdvTrainResult r =
          method == "ow" ? advpolicy::train_ow(ec, team, s.victim, c, s.seed, print_progress)
                         : advpolicy::train_owr(ec, team, s.victim, c, s.seed,
                                                print_progress);
      diffnet::save_checkpoint(r.checkpoint, out_path);
      write_log(log_path, r.log);
      std::fprintf(stderr, "wrote %s (%lld updates, %.0f s)\n", out_path.c_str(),
                   r.updates, since(t0));
    } else if (*at || *sw) {
      harness::ExperimentConfig cfg = harness::load_experiment_config(config_path);
      if (!attack_method.empty()) cfg.attack = attack_method;
      if (!target_policy.empty()) cfg.target_policy = target_policy;
      if (epsilon >= 0.0) cfg.budget.epsilon = epsilon;
      if (alpha >= 0.0) cfg.budget.alpha = alpha;
      if (theta >= 0.0) cfg.theta = theta;
      if (!theta_schedule.empty()) cfg.budget.theta_schedule = theta_schedule;
      if (episodes >= 0) cfg.n_episodes = episodes;
      override_seed(cfg.seed);
      cfg.validate();
      const harness::Loaded loaded = harness::load_checkpoints(cfg);
      std::vector<harness::MetricsRow> rows;
      if (*at) {
        std::unique_ptr<std::ofstream> trace_file;
        std::unique_ptr<harness::JsonlTrace> trace;
        if (cfg.write_trace) {
          std::filesystem::create_directories(cfg.output_dir);
          trace_file = std::make_unique<std::ofstream>(
              std::filesystem::path(cfg.output_dir) / (stem + ".trace.jsonl"),
              std::ios::binary);
          trace = std::make_unique<harness::JsonlTrace>(*trace_file);
        }
        rows.push_back(harness::run_experiment(cfg, loaded, trace.get()));
      } else {
        rows = harness::sweep(cfg, loaded, axis, nlohmann::json::parse(values));
      }
      emit(cfg, loaded, rows, stem, since(t0));
    } else if (*rp) {
      std::vector<harness::MetricsRow> rows;
      for (const auto& p : inputs) {
        std::ifstream in(p);
        if (!in) throw std::runtime_error("cannot open " + p);
        for (auto& r : harness::rows_from_json(nlohmann::json::parse(in)))
          rows.push_back(std::move(r));
      }
      std::ostringstream csv;
      harness::write_csv(rows, csv);
      if (csv_out.empty()) std::cout << csv.str();
      else write_text(csv_out, csv.str());
      if (!json_out.empty()) {
        std::ostringstream js;
        harness::write_json(rows, js);
        write_text(json_out, js.str());
      }
    } else if (*rl) {
      replay(trace_path, episode);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
