#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "marl/advpolicy/adversary.hpp"
#include "marl/harness/experiment.hpp"
#include "support.hpp"

using namespace marl;
using namespace marl::harness;

namespace {

struct Fixture {
  diffnet::Checkpoint team;
  std::map<std::string, diffnet::Checkpoint> advs;
  Loaded loaded;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture x;
    env::EnvConfig ec;
    qmix::TrainConfig tc;
    tc.hidden_dim = 8;
    tc.embed_dim = 4;
    qmix::TeamModel team = qmix::TeamModel::create(ec, 8, 4, 21);
    x.team = qmix::to_checkpoint(team, qmix::team_config_json(ec, tc, 21), 21);
    advpolicy::AdvTrainConfig ac;
    ac.train.n_episodes = 6;
    ac.train.hidden_dim = 6;
    ac.train.batch_size = 2;
    ac.train.eval_every = 0;
    ac.lambda = 0.0;
    x.advs["ow"] = advpolicy::train_ow(ec, x.team, 2, ac, 1).checkpoint;
    ac.lambda = 0.05;
    x.advs["owr"] = advpolicy::train_owr(ec, x.team, 2, ac, 1).checkpoint;
    x.loaded = assemble(x.team, x.advs, 2);
    return x;
  }();
  return f;
}

ExperimentConfig base_config() {
  ExperimentConfig c;
  c.victim = 2;
  c.n_episodes = 4;
  c.seed = 3;
  c.label = "t";
  c.adversaries = {{"ow", "ow.json"}, {"owr", "owr.json"}};
  return c;
}

std::string csv_of(const std::vector<MetricsRow>& rows) {
  std::ostringstream s;
  write_csv(rows, s);
  return s.str();
}

}  // namespace

TEST_CASE("greedy direct control and zero-budget attacks equal the baseline") {
  const auto& f = fixture();
  ExperimentConfig c = base_config();
  MetricsRow base = run_experiment(c, f.loaded);
  c.target_policy = "greedy";
  MetricsRow greedy = run_experiment(c, f.loaded);
  CHECK(greedy.episode_rewards == base.episode_rewards);

  c.target_policy = "ow";
  c.attack = "it-fgsm";
  c.budget.epsilon = 0.0;
  MetricsRow zero = run_experiment(c, f.loaded);
  CHECK(zero.episode_rewards == base.episode_rewards);
  CHECK(zero.avg_l1 == 0.0);
  CHECK(zero.safety.total() == 0);
}

TEST_CASE("every policy and attack runs with zero safety violations") {
  const auto& f = fixture();
  for (const char* p : {"random", "lw", "qmix-worst", "ow", "owr"})
    for (const char* a : {"none", "fgsm", "it-fgsm", "jsma", "d-jsma"}) {
      ExperimentConfig c = base_config();
      c.n_episodes = 2;
      c.target_policy = p;
      c.attack = a;
      MetricsRow r = run_experiment(c, f.loaded);
      CHECK(r.safety.total() == 0);
      CHECK(r.n_episodes == 2);
      CHECK(r.l1_hist.total() == r.attacked_steps);
      // direct control overrides without perturbing
      if (std::string(a) == "none") CHECK(r.avg_l1 == 0.0);
    }
}

TEST_CASE("reports are byte identical across reruns") {
  const auto& f = fixture();
  ExperimentConfig c = base_config();
  c.target_policy = "owr";
  c.attack = "d-jsma";
  const std::string a = csv_of({run_experiment(c, f.loaded)});
  const std::string b = csv_of({run_experiment(c, f.loaded)});
  CHECK(a == b);
  std::istringstream lines(a);
  std::string header, row, extra;
  std::getline(lines, header);
  std::getline(lines, row);
  CHECK(header == kCsvHeader);
  CHECK(row.rfind("t,owr,d-jsma,", 0) == 0);
  CHECK_FALSE(std::getline(lines, extra));

  std::ostringstream j1, j2;
  MetricsRow r = run_experiment(c, f.loaded);
  write_json({r}, j1);
  write_json(rows_from_json(nlohmann::json::parse(j1.str())), j2);
  CHECK(j1.str() == j2.str());
}

TEST_CASE("report files") {
  const auto& f = fixture();
  const auto dir = std::filesystem::temp_directory_path() / "marl_report_test";
  std::filesystem::remove_all(dir);
  MetricsRow r = run_experiment(base_config(), f.loaded);
  write_report({r}, dir, "x");
  CHECK(std::filesystem::exists(dir / "x.csv"));
  CHECK(std::filesystem::exists(dir / "x.json"));
  CHECK_THROWS(write_report({}, dir, "y"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("sweeps") {
  const auto& f = fixture();
  ExperimentConfig c = base_config();
  c.n_episodes = 2;
  c.target_policy = "ow";
  c.attack = "jsma";
  CHECK(sweep(c, f.loaded, "theta", nlohmann::json::array()).empty());
  auto rows = sweep(c, f.loaded, "theta", {0.1, 0.5});
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].param == 0.5);
  rows = sweep(c, f.loaded, "method", {"random", "lw+fgsm"});
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].attack == "fgsm");
  CHECK_THROWS(sweep(c, f.loaded, "gamma", {1}));
}

TEST_CASE("histogram and wilson interval") {
  Histogram h = l1_histogram({0.0, 0.4, 1.0, 5.0, 192.0, 300.0});
  CHECK(h.total() == 6);
  CHECK(h.counts.front() == 2);
  CHECK(h.counts.back() == 2);
  Interval w = wilson_interval(0, 100);
  CHECK(w.low == doctest::Approx(0.0));
  CHECK(w.high == doctest::Approx(0.037).epsilon(0.02));
  w = wilson_interval(50, 100);
  CHECK(w.low < 0.5);
  CHECK(w.high > 0.5);
}

TEST_CASE("checkpoint pairing is enforced") {
  const auto& f = fixture();
  CHECK_THROWS_AS(assemble(f.team, f.advs, 1), ExperimentError);
  auto swapped = f.advs;
  std::swap(swapped["ow"], swapped["owr"]);
  CHECK_THROWS_AS(assemble(f.team, swapped, 2), ExperimentError);
  diffnet::Checkpoint other = f.team;
  other.rng_seed += 1;
  CHECK_THROWS_AS(assemble(other, f.advs, 2), ExperimentError);
}

TEST_CASE("config parsing and the seed override") {
  nlohmann::json j = base_config();
  CHECK(j.at("schema_version") == kSchemaVersion);
  ExperimentConfig back = j.get<ExperimentConfig>();
  CHECK(back.victim == 2);
  nlohmann::json bad = j;
  bad.erase("schema_version");
  CHECK_THROWS(bad.get<ExperimentConfig>());
  bad = j;
  bad["schema_version"] = 99;
  CHECK_THROWS(bad.get<ExperimentConfig>().validate());
  bad = j;
  bad["attack"] = "pgd";
  CHECK_THROWS(bad.get<ExperimentConfig>().validate());

  ExperimentConfig d;
  CHECK(d.episodes() == kDefaultDirectEpisodes);
  d.attack = "fgsm";
  CHECK(d.episodes() == kDefaultAttackEpisodes);

  std::uint64_t seed = 5;
  unsetenv("MARL_REDTEAM_SEED");
  CHECK_FALSE(apply_seed_override(seed));
  CHECK(seed == 5);
  setenv("MARL_REDTEAM_SEED", "1234", 1);
  CHECK(apply_seed_override(seed));
  CHECK(seed == 1234);
  setenv("MARL_REDTEAM_SEED", "12x", 1);
  CHECK_THROWS(apply_seed_override(seed));
  unsetenv("MARL_REDTEAM_SEED");
}

TEST_CASE("trace lines are json objects") {
  const auto& f = fixture();
  std::ostringstream out;
  JsonlTrace trace(out);
  ExperimentConfig c = base_config();
  c.n_episodes = 1;
  c.target_policy = "lw";
  c.attack = "fgsm";
  run_experiment(c, f.loaded, &trace);
  std::istringstream in(out.str());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    CHECK(nlohmann::json::parse(line).is_object());
    ++n;
  }
  CHECK(n > 0);
}
