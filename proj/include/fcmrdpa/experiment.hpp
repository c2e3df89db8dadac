#pragma once

#include <json.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "fcmrdpa/data.hpp"
#include "fcmrdpa/model_io.hpp"
#include "fcmrdpa/rng.hpp"
#include "fcmrdpa/trainer.hpp"

namespace fcmrdpa {

inline constexpr const char* kResultsSchema = "fcm-rdpa/results/v1";
inline constexpr const char* kAggregateSchema = "fcm-rdpa/aggregate/v1";
inline constexpr const char* kTraceSchema = "fcm-rdpa/trace/v1";
inline constexpr const char* kSweepSchema = "fcm-rdpa/sweep/v1";

struct DatasetSpec {
  std::string name;
  std::string path;  // resolved against the manifest location
  CsvSchema schema;
};

inline std::vector<DatasetSpec> load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("manifest: cannot open " + path);
  nlohmann::json j;
  is >> j;
  const auto base = std::filesystem::path(path).parent_path();
  std::vector<DatasetSpec> specs;
  for (const auto& e : j.at("datasets")) {
    DatasetSpec s;
    s.name = e.at("name").get<std::string>();
    s.path = (base / e.at("path").get<std::string>()).string();
    s.schema.target = e.at("target").get<std::string>();
    if (e.contains("categorical"))
      s.schema.categorical = e["categorical"].get<std::vector<std::string>>();
    if (e.contains("ignore"))
      s.schema.ignore = e["ignore"].get<std::vector<std::string>>();
    if (e.contains("separator")) {
      const auto sep = e["separator"].get<std::string>();
      if (sep == "\\t" || sep == "\t")
        s.schema.separator = '\t';
      else if (sep.size() == 1)
        s.schema.separator = sep[0];
      else
        throw std::runtime_error("manifest: bad separator for " + s.name);
    }
    if (e.contains("has_header")) s.schema.has_header = e["has_header"].get<bool>();
    if (e.contains("columns"))
      s.schema.column_names = e["columns"].get<std::vector<std::string>>();
    specs.push_back(std::move(s));
  }
  if (specs.empty()) throw std::runtime_error("manifest: no datasets listed");
  return specs;
}

struct ExperimentConfig {
  std::string manifest;
  std::vector<std::string> pipelines;
  std::vector<int> rule_counts{16};
  int repeats = 8;
  std::uint64_t base_seed = 1;
  HyperParams hp;
  std::string output_dir;
  bool write_traces = false;
  bool save_models = false;
  int workers = 0;  ///< 0 = hardware concurrency

  void validate() const {
    if (repeats < 1) throw std::invalid_argument("config: repeats must be >= 1");
    if (pipelines.empty())
      throw std::invalid_argument("config: no pipelines listed");
    if (rule_counts.empty())
      throw std::invalid_argument("config: no rule counts listed");
    for (const auto& name : pipelines) {
      const Pipeline p = parse_pipeline(name);  // throws on unknown names
      const bool clustering_init =
          p != Pipeline::RR && p != Pipeline::RandRdpa;
      if (clustering_init)
        for (int r : rule_counts)
          if (r < 2)
            throw std::invalid_argument(
                "config: rule counts must be >= 2 for clustering inits");
    }
  }
};

/// Reads an experiment config; every hyperparameter default matches the
/// method's published defaults, so an empty overrides block reproduces them.
inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  nlohmann::json j;
  is >> j;
  ExperimentConfig cfg;
  const auto base = std::filesystem::path(path).parent_path();
  cfg.manifest = (base / j.at("manifest").get<std::string>()).string();
  cfg.pipelines = j.at("pipelines").get<std::vector<std::string>>();
  if (j.contains("rules")) cfg.rule_counts = j["rules"].get<std::vector<int>>();
  if (j.contains("repeats")) cfg.repeats = j["repeats"].get<int>();
  if (j.contains("base_seed")) cfg.base_seed = j["base_seed"].get<std::uint64_t>();
  if (j.contains("output_dir"))
    cfg.output_dir = (base / j["output_dir"].get<std::string>()).string();
  if (j.contains("write_traces")) cfg.write_traces = j["write_traces"].get<bool>();
  if (j.contains("save_models")) cfg.save_models = j["save_models"].get<bool>();
  if (j.contains("workers")) cfg.workers = j["workers"].get<int>();
  if (j.contains("overrides")) {
    const auto& o = j["overrides"];
    if (o.contains("alpha")) cfg.hp.alpha = o["alpha"].get<double>();
    if (o.contains("p")) cfg.hp.drop_p = o["p"].get<double>();
    if (o.contains("gamma")) cfg.hp.gamma = o["gamma"].get<double>();
    if (o.contains("lambda")) cfg.hp.lambda = o["lambda"].get<double>();
    if (o.contains("batch_size")) cfg.hp.batch_size = o["batch_size"].get<int>();
    if (o.contains("iterations")) cfg.hp.iterations = o["iterations"].get<int>();
    if (o.contains("val_stride")) cfg.hp.val_stride = o["val_stride"].get<int>();
  }
  cfg.validate();
  return cfg;
}

struct ResultRow {
  std::string dataset;
  std::string pipeline;
  int rules = 0;  ///< 0 for RR (its result does not depend on R)
  int repeat = 0;
  double test_rmse = 0.0;
  int best_iter = 0;
  double wall_time_s = 0.0;
};

struct SkipRecord {
  std::string dataset, pipeline;
  int rules = 0;
  std::string reason;
};

struct AggregateRow {
  std::string pipeline;
  int rules = 0;
  double mean_normalized_rmse = 0.0;
  int n_datasets = 0;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<AggregateRow> aggregate;
  std::vector<SkipRecord> skips;
  std::vector<std::string> errors;  ///< aborted datasets / failed cells
};

/// Called after each finished training cell (under a lock); used by tests to
/// inspect full reports without retaining them all.
using RunObserver =
    std::function<void(const ResultRow&, const TrainReport&)>;

// Run-level seed discipline: the split seed depends only on (base seed,
// dataset, repeat), so every pipeline sees the same splits within a repeat;
// the training seed additionally mixes in the pipeline name and R.
inline std::uint64_t split_seed_for(std::uint64_t base,
                                    const std::string& dataset, int repeat) {
  return mix_seed(mix_seed(base, dataset), static_cast<std::uint64_t>(repeat));
}

inline std::uint64_t train_seed_for(std::uint64_t split_seed,
                                    const std::string& pipeline, int rules) {
  return mix_seed(mix_seed(split_seed, pipeline),
                  static_cast<std::uint64_t>(rules));
}

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_trace_csv(const std::string& path, const TrainReport& r) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os << "# schema: " << kTraceSchema << "\n";
  os << "iteration,batch_loss,val_rmse\n";
  for (std::size_t t = 0; t < r.val_rmse_trace.size(); ++t) {
    os << (t + 1) << ',';
    os << (t < r.batch_loss_trace.size() ? fmt_double(r.batch_loss_trace[t])
                                         : std::string());
    os << ',' << fmt_double(r.val_rmse_trace[t]) << '\n';
  }
}

struct Cell {
  int dataset_idx;
  Pipeline pipeline;
  int rules;   // 0 for RR
  int repeat;
};

}  // namespace detail

/// Runs every (dataset x pipeline x R x repeat) cell of the config, in
/// parallel across a worker pool, and (optionally) writes results.csv,
/// aggregate.csv, per-run traces and skip logs under output_dir. The ridge
/// baseline runs once per (dataset, repeat) regardless of R and is always
/// included, since the aggregate normalizes against it.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const RunObserver& observer = {},
                                       bool write_files = true) {
  cfg.validate();
  ExperimentResult result;

  const std::vector<DatasetSpec> specs = load_manifest(cfg.manifest);
  std::vector<std::optional<EncodedData>> data(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    try {
      data[i] = one_hot(load_csv(specs[i].path, specs[i].schema));
    } catch (const std::exception& e) {
      result.errors.push_back("dataset " + specs[i].name + " aborted: " +
                              e.what());
      std::cerr << result.errors.back() << '\n';
    }
  }

  // assemble cells: ridge once per (dataset, repeat), everything else per R
  std::vector<detail::Cell> cells;
  std::vector<Pipeline> mbgd;
  bool user_listed_rr = false;
  for (const auto& name : cfg.pipelines) {
    const Pipeline p = parse_pipeline(name);
    if (p == Pipeline::RR)
      user_listed_rr = true;
    else
      mbgd.push_back(p);
  }
  (void)user_listed_rr;
  for (std::size_t d = 0; d < specs.size(); ++d) {
    if (!data[d]) continue;
    for (int rep = 0; rep < cfg.repeats; ++rep) {
      cells.push_back({static_cast<int>(d), Pipeline::RR, 0, rep});
      for (Pipeline p : mbgd)
        for (int r : cfg.rule_counts)
          cells.push_back({static_cast<int>(d), p, r, rep});
    }
  }

  struct CellOutcome {
    std::optional<ResultRow> row;
    std::optional<SkipRecord> skip;
    std::string error;
  };
  std::vector<CellOutcome> outcomes(cells.size());
  std::mutex observer_mutex;

  const auto run_cell = [&](const detail::Cell& cell) {
    CellOutcome out;
    const DatasetSpec& spec = specs[cell.dataset_idx];
    const EncodedData& enc = *data[cell.dataset_idx];
    const std::uint64_t split_seed =
        split_seed_for(cfg.base_seed, spec.name, cell.repeat);
    const std::string pname = pipeline_name(cell.pipeline);
    try {
      const SplitIndices idx = split(enc.X.rows(), split_seed);
      const std::uint64_t train_seed =
          train_seed_for(split_seed, pname, cell.rules);
      PipelineResult pr = run_pipeline(enc, idx, cell.pipeline, cell.rules,
                                       cfg.hp, train_seed);
      if (pr.skipped) {
        out.skip = SkipRecord{spec.name, pname, cell.rules, pr.skip_reason};
        return out;
      }
      ResultRow row{spec.name,          pname,
                    cell.rules,         cell.repeat,
                    pr.report.test_rmse, pr.report.best_iter,
                    pr.report.wall_time_s};
      if (write_files && cfg.write_traces && cell.pipeline != Pipeline::RR) {
        const auto dir = std::filesystem::path(cfg.output_dir) / "traces";
        detail::write_trace_csv(
            (dir / (spec.name + "__" + pname + "__R" +
                    std::to_string(cell.rules) + "__rep" +
                    std::to_string(cell.repeat) + ".csv"))
                .string(),
            pr.report);
      }
      if (write_files && cfg.save_models && cell.pipeline != Pipeline::RR) {
        const auto dir = std::filesystem::path(cfg.output_dir) / "models";
        const auto path =
            (dir / (spec.name + "__" + pname + "__R" +
                    std::to_string(cell.rules) + "__rep" +
                    std::to_string(cell.repeat) + ".model"))
                .string();
        std::visit([&](const auto& m) { save_model(path, m); },
                   pr.report.best_model);
      }
      if (observer) {
        std::lock_guard<std::mutex> lock(observer_mutex);
        observer(row, pr.report);
      }
      out.row = std::move(row);
    } catch (const std::exception& e) {
      out.error = spec.name + " " + pname + " R=" +
                  std::to_string(cell.rules) + " rep=" +
                  std::to_string(cell.repeat) + ": " + e.what();
    }
    return out;
  };

  if (write_files && !cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    if (cfg.write_traces)
      std::filesystem::create_directories(
          std::filesystem::path(cfg.output_dir) / "traces");
    if (cfg.save_models)
      std::filesystem::create_directories(
          std::filesystem::path(cfg.output_dir) / "models");
  }

  int workers = cfg.workers > 0
                    ? cfg.workers
                    : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min<int>(workers, static_cast<int>(cells.size())));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < cells.size();
         i = next.fetch_add(1))
      outcomes[i] = run_cell(cells[i]);
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (auto& out : outcomes) {
    if (out.row) result.rows.push_back(std::move(*out.row));
    if (out.skip) result.skips.push_back(std::move(*out.skip));
    if (!out.error.empty()) result.errors.push_back(std::move(out.error));
  }
  std::sort(result.rows.begin(), result.rows.end(),
            [](const ResultRow& a, const ResultRow& b) {
              return std::tie(a.dataset, a.pipeline, a.rules, a.repeat) <
                     std::tie(b.dataset, b.pipeline, b.rules, b.repeat);
            });
  std::sort(result.skips.begin(), result.skips.end(),
            [](const SkipRecord& a, const SkipRecord& b) {
              return std::tie(a.dataset, a.pipeline, a.rules) <
                     std::tie(b.dataset, b.pipeline, b.rules);
            });

  // aggregate: mean over datasets of (mean-over-repeats alg / mean RR)
  std::map<std::string, double> rr_mean;
  {
    std::map<std::string, std::pair<double, int>> acc;
    for (const auto& row : result.rows)
      if (row.pipeline == "RR") {
        acc[row.dataset].first += row.test_rmse;
        acc[row.dataset].second += 1;
      }
    for (const auto& [ds, s] : acc) rr_mean[ds] = s.first / s.second;
  }
  // skipped (dataset, pipeline, R) cells simply have no rows, so they drop
  // out of the means below instead of being imputed
  std::map<std::pair<std::string, int>,
           std::map<std::string, std::pair<double, int>>>
      alg_acc;
  for (const auto& row : result.rows) {
    if (row.pipeline == "RR") continue;
    auto& slot = alg_acc[{row.pipeline, row.rules}][row.dataset];
    slot.first += row.test_rmse;
    slot.second += 1;
  }
  for (const auto& [key, per_ds] : alg_acc) {
    AggregateRow agg{key.first, key.second, 0.0, 0};
    double sum = 0.0;
    for (const auto& [ds, s] : per_ds) {
      const auto it = rr_mean.find(ds);
      if (it == rr_mean.end()) continue;
      sum += normalized_rmse(s.first / s.second, it->second);
      agg.n_datasets += 1;
    }
    if (agg.n_datasets == 0) continue;
    agg.mean_normalized_rmse = sum / agg.n_datasets;
    result.aggregate.push_back(agg);
  }

  if (write_files && !cfg.output_dir.empty()) {
    const auto dir = std::filesystem::path(cfg.output_dir);
    {
      std::ofstream os(dir / "results.csv");
      os << "# schema: " << kResultsSchema << "\n";
      os << "# base_seed: " << cfg.base_seed << "\n";
      os << "# paired_splits: true\n";
      os << "dataset,pipeline,rules,repeat,test_rmse,best_iter,wall_time_s\n";
      for (const auto& r : result.rows)
        os << r.dataset << ',' << r.pipeline << ',' << r.rules << ','
           << r.repeat << ',' << detail::fmt_double(r.test_rmse) << ','
           << r.best_iter << ',' << detail::fmt_double(r.wall_time_s) << '\n';
    }
    {
      std::ofstream os(dir / "aggregate.csv");
      os << "# schema: " << kAggregateSchema << "\n";
      os << "pipeline,rules,mean_normalized_rmse,datasets\n";
      for (const auto& a : result.aggregate)
        os << a.pipeline << ',' << a.rules << ','
           << detail::fmt_double(a.mean_normalized_rmse) << ','
           << a.n_datasets << '\n';
    }
    if (!result.skips.empty()) {
      std::ofstream os(dir / "skipped.log");
      for (const auto& s : result.skips)
        os << s.dataset << ' ' << s.pipeline << " R=" << s.rules << ": "
           << s.reason << '\n';
    }
  }
  for (const auto& s : result.skips)
    std::cerr << "skipped " << s.dataset << ' ' << s.pipeline << " R="
              << s.rules << ": " << s.reason << '\n';
  return result;
}

enum class SweepParam { Alpha, DropP, Gamma };

inline SweepParam parse_sweep_param(const std::string& s) {
  if (s == "alpha") return SweepParam::Alpha;
  if (s == "p") return SweepParam::DropP;
  if (s == "gamma") return SweepParam::Gamma;
  throw std::invalid_argument("sweep: parameter must be alpha, p or gamma");
}

struct SweepRow {
  std::string param;
  double value = 0.0;
  std::string pipeline;
  int rules = 0;
  double mean_normalized_rmse = 0.0;
  int n_datasets = 0;
};

/// One-dimensional sensitivity sweep: the swept parameter takes each value in
/// turn while the other two stay at their defaults from the config.
inline std::vector<SweepRow> sweep(const ExperimentConfig& base,
                                   SweepParam param,
                                   const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("sweep: no values given");
  std::vector<SweepRow> rows;
  const char* pname = param == SweepParam::Alpha ? "alpha"
                      : param == SweepParam::DropP ? "p"
                                                   : "gamma";
  for (double v : values) {
    ExperimentConfig cfg = base;
    switch (param) {
      case SweepParam::Alpha: cfg.hp.alpha = v; break;
      case SweepParam::DropP: cfg.hp.drop_p = v; break;
      case SweepParam::Gamma: cfg.hp.gamma = v; break;
    }
    const ExperimentResult res = run_experiment(cfg, {}, false);
    for (const auto& a : res.aggregate)
      rows.push_back({pname, v, a.pipeline, a.rules, a.mean_normalized_rmse,
                      a.n_datasets});
  }
  if (!base.output_dir.empty()) {
    std::filesystem::create_directories(base.output_dir);
    std::ofstream os(std::filesystem::path(base.output_dir) /
                     ("sweep_" + std::string(pname) + ".csv"));
    os << "# schema: " << kSweepSchema << "\n";
    os << "param,value,pipeline,rules,mean_normalized_rmse,datasets\n";
    for (const auto& r : rows)
      os << r.param << ',' << detail::fmt_double(r.value) << ',' << r.pipeline
         << ',' << r.rules << ',' << detail::fmt_double(r.mean_normalized_rmse)
         << ',' << r.n_datasets << '\n';
  }
  return rows;
}

/// Pretty-prints aggregate.csv from a results directory.
inline int print_report(const std::string& results_dir, std::ostream& os) {
  std::ifstream is(std::filesystem::path(results_dir) / "aggregate.csv");
  if (!is) {
    os << "no aggregate.csv under " << results_dir << '\n';
    return 1;
  }
  std::string line;
  std::map<std::string, std::map<int, std::string>> table;
  std::set<int> rule_counts;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("pipeline,", 0) == 0)
      continue;
    std::istringstream ls(line);
    std::string pipeline, rules, value, nds;
    std::getline(ls, pipeline, ',');
    std::getline(ls, rules, ',');
    std::getline(ls, value, ',');
    std::getline(ls, nds, ',');
    const int r = std::stoi(rules);
    table[pipeline][r] = value;
    rule_counts.insert(r);
  }
  os << "mean normalized test RMSE (vs. ridge baseline)\n";
  os << "pipeline";
  for (int r : rule_counts) os << "\tR=" << r;
  os << '\n';
  for (const auto& [pipeline, by_r] : table) {
    os << pipeline;
    for (int r : rule_counts) {
      const auto it = by_r.find(r);
      os << '\t' << (it == by_r.end() ? "-" : it->second.substr(0, 7));
    }
    os << '\n';
  }
  return 0;
}

}  // namespace fcmrdpa
