// hmlab command-line front end: dataset generation, training, attacks, sweeps and reports.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "CLI11.hpp"
#include "hmlab/config.hpp"
#include "hmlab/dataset.hpp"
#include "hmlab/report.hpp"
#include "hmlab/robustness.hpp"
#include "hmlab/train.hpp"

namespace fs = std::filesystem;
using namespace hmlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitCollapse = 3;

fs::path output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("HMLAB_OUT"); env && *env) return env;
  return "hmlab_out";
}

struct ConfigFlags {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string eps, alpha, pgd_steps;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_file, "flat key=value config file");
    app->add_option("--set", overrides, "override one config key, e.g. --set defense=hm+ics")->take_all();
    app->add_option("--eps", eps, "perturbation budget epsilon (accepts fractions like 8/255)");
    app->add_option("--alpha", alpha, "PGD step size");
    app->add_option("--pgd-steps", pgd_steps, "PGD steps used during training");
  }

  TrainConfig resolve() const {
    TrainConfig cfg = config_file.empty() ? TrainConfig{} : load_config(config_file);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      set_field(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!eps.empty()) set_field(cfg, "epsilon", eps);
    if (!alpha.empty()) set_field(cfg, "alpha", alpha);
    if (!pgd_steps.empty()) set_field(cfg, "pgd_steps", pgd_steps);
    cfg.validate();
    return cfg;
  }
};

SyntheticDataset dataset_for(const TrainConfig& cfg, const std::string& data_path) {
  if (data_path.empty()) return generate_dataset(cfg.dataset_config());
  return load_dataset(data_path);
}

std::string run_stem(const TrainConfig& cfg) {
  std::string label = cfg.defense + "_" + cfg.destination + "_eta" + std::to_string(cfg.pgd_steps) + "_seed" +
                      std::to_string(cfg.seed);
  for (char& c : label) {
    if (c == ':' || c == '+' || c == '/' || c == ' ') c = '-';
  }
  return label;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) return out;
    start = pos + 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hmlab: adversarial robustness lab for triplet metric learning"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string out_flag;
  app.add_option("-o,--out-dir", out_flag, "output directory (default: $HMLAB_OUT or ./hmlab_out)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  ConfigFlags gen_flags;
  gen_flags.attach(gen);
  std::string gen_path;
  gen->add_option("--path", gen_path, "dataset file (default: <out>/dataset.json)");

  // train
  auto* tr = app.add_subcommand("train", "train one encoder and write its run record");
  ConfigFlags tr_flags;
  tr_flags.attach(tr);
  std::string tr_data, tr_name;
  tr->add_option("--data", tr_data, "dataset file (default: generate from config)");
  tr->add_option("--name", tr_name, "run name (default derived from config)");

  // evaluate / attack
  auto* ev = app.add_subcommand("evaluate", "benign retrieval metrics of a checkpoint");
  auto* at = app.add_subcommand("attack", "run the attack suite against a checkpoint");
  std::string ck_path, ck_data;
  ConfigFlags at_flags;
  for (auto* sub : {ev, at}) {
    sub->add_option("--checkpoint", ck_path, "encoder checkpoint JSON")->required();
    sub->add_option("--data", ck_data, "dataset file (default: generate from config)");
  }
  at_flags.attach(at);
  std::string attack_steps;
  at->add_option("--attack-steps", attack_steps, "PGD steps for the attacks (default 32)");

  // sweep
  auto* sw = app.add_subcommand("sweep", "train a grid of configurations and report");
  ConfigFlags sw_flags;
  sw_flags.attach(sw);
  std::vector<std::string> grid;
  std::string seeds = "0";
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  sw->add_option("--grid", grid, "key=v1,v2,... axis; repeat for a cartesian product")->take_all();
  sw->add_option("--seeds", seeds, "comma-separated seeds");
  sw->add_option("-j,--jobs", jobs, "parallel runs");

  // report
  auto* rp = app.add_subcommand("report", "comparison table and cost curves from run summaries");
  std::vector<std::string> summaries;
  rp->add_option("summaries", summaries, "*.summary.json files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }
  const fs::path out = output_dir(out_flag);

  try {
    if (*gen) {
      const TrainConfig cfg = gen_flags.resolve();
      const fs::path path = gen_path.empty() ? out / "dataset.json" : fs::path(gen_path);
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      save_dataset(generate_dataset(cfg.dataset_config()), path);
      std::cout << path.string() << '\n';
      return kExitOk;
    }

    if (*tr) {
      const TrainConfig cfg = tr_flags.resolve();
      const SyntheticDataset data = dataset_for(cfg, tr_data);
      TrainOptions options;
      options.on_epoch = [](const EpochRow& row) {
        std::cerr << "epoch " << row.epoch << " loss " << row.adversarial_loss << " R@1 " << row.r_at_1 << " cos "
                  << row.collapse_similarity << '\n';
      };
      const TrainResult res = train(cfg, data, options);
      const fs::path stem = out / (tr_name.empty() ? run_stem(cfg) : tr_name);
      write_run_record(res.record, stem);
      fs::path ck = stem;
      ck += ".checkpoint.json";
      save_checkpoint(res.model, ck);
      std::cout << "status " << to_string(res.record.status);
      if (res.record.report) std::cout << " ERS-style " << res.record.report->ers << " R@1 " << res.record.report->r_at_1;
      std::cout << '\n';
      if (!res.record.diagnostic.empty()) std::cerr << res.record.diagnostic << '\n';
      return res.record.status == RunStatus::Collapsed ? kExitCollapse : kExitOk;
    }

    if (*ev || *at) {
      TrainConfig cfg = at_flags.resolve();
      if (!attack_steps.empty()) set_field(cfg, "eval_pgd_steps", attack_steps);
      const EncoderModel model = load_checkpoint(ck_path);
      const EvalCorpus corpus = dataset_for(cfg, ck_data).corpus();
      if (*ev) {
        const RetrievalMetrics m = benign_metrics(model, corpus);
        std::cout << nlohmann::json{{"r_at_1", m.r_at_1}, {"r_at_2", m.r_at_2}, {"map", m.map}}.dump(2) << '\n';
      } else {
        const RobustnessReport r = evaluate_robustness(model, corpus, cfg.attack_config());
        nlohmann::json j = to_json(r);
        j["attack_config"] = to_json(cfg.attack_config());
        std::cout << j.dump(2) << '\n';
      }
      return kExitOk;
    }

    if (*sw) {
      const TrainConfig base = sw_flags.resolve();
      std::vector<TrainConfig> configs{base};
      for (const auto& axis : grid) {
        const auto eq = axis.find('=');
        if (eq == std::string::npos) throw ConfigError("--grid expects key=v1,v2,..., got '" + axis + "'");
        std::vector<TrainConfig> next;
        for (const auto& cfg : configs) {
          for (const auto& v : split(axis.substr(eq + 1), ',')) {
            TrainConfig c = cfg;
            set_field(c, axis.substr(0, eq), v);
            next.push_back(c);
          }
        }
        configs = std::move(next);
      }
      std::vector<TrainConfig> runs;
      for (const auto& s : split(seeds, ',')) {
        for (auto c : configs) {
          set_field(c, "seed", s);
          c.validate();
          runs.push_back(c);
        }
      }
      const SyntheticDataset data = generate_dataset(base.dataset_config());
      std::vector<RunRecord> records(runs.size());
      std::size_t next = 0;
      std::mutex mu;
      auto worker = [&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard lock(mu);
            if (next == runs.size()) return;
            i = next++;
          }
          records[i] = train(runs[i], data).record;
          write_run_record(records[i], out / run_stem(runs[i]));
          std::lock_guard lock(mu);
          std::cerr << "done " << run_stem(runs[i]) << " (" << to_string(records[i].status) << ")\n";
        }
      };
      std::vector<std::jthread> pool;
      for (unsigned t = 0; t < std::max(1u, jobs); ++t) pool.emplace_back(worker);
      pool.clear();
      write_report(records, out);
      std::cout << comparison_table([&] {
        std::vector<RunSummary> s;
        for (const auto& r : records) s.push_back(summarize(r));
        return s;
      }());
      return kExitOk;
    }

    if (*rp) {
      std::vector<RunRecord> records;
      for (const auto& p : summaries) records.push_back(read_run_record(p));
      write_report(records, out);
      std::vector<RunSummary> s;
      for (const auto& r : records) s.push_back(summarize(r));
      std::cout << comparison_table(s);
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
