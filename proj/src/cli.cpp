#include "firecast/cli.hpp"

#include <algorithm>
#include <atomic>
#include <climits>
#include <cmath>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

namespace firecast::cli {

using nlohmann::json;
namespace fs = std::filesystem;

std::set<int> parse_years(const std::string& text) {
  std::set<int> years;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    const auto dash = part.find('-', 1);  // allow negative years, not that they occur
    try {
      if (dash == std::string::npos) {
        years.insert(std::stoi(part));
      } else {
        const int a = std::stoi(part.substr(0, dash));
        const int b = std::stoi(part.substr(dash + 1));
        if (b < a) throw UsageError("year range ends before it starts: " + part);
        for (int y = a; y <= b; ++y) years.insert(y);
      }
    } catch (const std::logic_error&) {
      throw UsageError("cannot parse years: " + text);
    }
  }
  if (years.empty()) throw UsageError("empty year list: " + text);
  return years;
}

namespace {

std::pair<int, int> train_time_range(const CubeHeader& h, const std::set<int>& train_years) {
  int lo = INT_MAX, hi = INT_MIN;
  for (int t = 0; t < h.time_len; ++t) {
    const int y = time_to_year(h, t);
    if (train_years.count(y)) {
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
  }
  if (lo > hi) throw DataError("no cube timesteps fall inside the training years");
  return {lo, hi + 1};
}

json stats_to_json(const StandardizationStats& stats) {
  json j;
  j["t_begin"] = stats.t_begin;
  j["t_end"] = stats.t_end;
  j["vars"] = json::object();
  for (const auto& [name, vs] : stats.by_var) {
    j["vars"][name] = {{"mean", vs.mean}, {"std", vs.std}};
  }
  return j;
}

double cube_fire_rate(const Datacube& cube, const std::string& target_var) {
  const auto binary = binarize_target(cube, target_var);
  const CubeHeader& h = cube.header;
  long long fires = 0, cells = 0;
  for (int t = 0; t < h.time_len; ++t) {
    for (int y = 0; y < h.lat_len; ++y) {
      for (int x = 0; x < h.lon_len; ++x) {
        if (cube.mask_at(y, x) == 0) continue;
        ++cells;
        fires += binary[(static_cast<long long>(t) * h.lat_len + y) * h.lon_len + x];
      }
    }
  }
  return cells > 0 ? static_cast<double>(fires) / static_cast<double>(cells) : 0.0;
}

NegativePolicy make_policy(const std::string& name, double ratio, long long max_positives) {
  NegativePolicy policy;
  if (name == "ratio") {
    policy.kind = NegativePolicy::Kind::Ratio;
  } else if (name == "keep-all") {
    policy.kind = NegativePolicy::Kind::KeepAll;
  } else {
    throw UsageError("unknown negative policy: " + name + " (expected ratio or keep-all)");
  }
  policy.ratio = ratio;
  policy.max_positives = max_positives;
  return policy;
}

void append_csv_row(const fs::path& path, const std::string& header, const std::string& row) {
  const bool fresh = !fs::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot open results file: " + path.string());
  if (fresh) out << header << "\n";
  out << row << "\n";
  out.flush();
}

struct ExperimentRun {
  EvalReport report;
  TrainResult train_result;
};

// Train one model and score it on the requested split. The caller owns all
// durable outputs; this only computes.
ExperimentRun run_experiment(const PreparedCube& prepared, const SampleSpec& spec,
                             const SplitSpec& split, const std::string& model_name,
                             const TrainConfig& tc, const std::string& eval_split) {
  ModelConfig mc;
  mc.model = model_name;
  mc.feature_dim = prepared.feature_dim();
  mc.spec = spec;
  auto model = make_model(mc, tc.seed);

  SplitPools pools = enumerate_split_pools(prepared, spec, split);
  ExperimentRun run;
  run.train_result = train(*model, prepared, pools, tc);

  // Score with the best-validation parameters.
  model->params().restore(run.train_result.best_params);
  std::shared_ptr<const GridGraph> graph;
  if (model_name == "tgcn") graph = std::make_shared<GridGraph>(build_grid_graph(spec.r, spec.k));

  std::span<const SampleRef> refs;
  std::vector<SampleRef> train_all;
  if (eval_split == "test") {
    refs = pools.test;
  } else if (eval_split == "val") {
    refs = pools.val;
  } else {
    train_all = pools.train_pos;
    train_all.insert(train_all.end(), pools.train_neg.begin(), pools.train_neg.end());
    refs = train_all;
  }
  auto scored = score_samples_with_model(*model, prepared, refs, graph);

  EvalMeta meta{model_name, spec.ts, spec.h, spec.r, spec.k, eval_split, tc.seed};
  run.report = evaluate_scored(meta, scored);
  return run;
}

}  // namespace

// ---------------------------------------------------------------------------
// gen-synthetic / cube-info
// ---------------------------------------------------------------------------

int cmd_gen_synthetic(const GenArgs& args, std::ostream& log) {
  SyntheticConfig cfg;
  if (!args.config.empty()) {
    try {
      cfg = synthetic_config_from_json(json::parse(read_text(args.config)));
    } catch (const json::exception& e) {
      throw DataError("malformed synthetic config: " + std::string(e.what()));
    }
  }
  SyntheticCube generated = generate_synthetic_cube(cfg, args.seed);
  write_cube(generated.cube, args.out);
  write_text(args.out / "oracle.json", generated.oracle.dump(2) + "\n");
  json echo = synthetic_config_to_json(cfg);
  echo["seed"] = args.seed;
  write_text(args.out / "synthetic_config.json", echo.dump(2) + "\n");

  const CubeHeader& h = generated.cube.header;
  long long land = 0;
  for (uint8_t m : generated.cube.mask) land += m;
  log << "cube " << args.out.string() << ": " << h.lat_len << "x" << h.lon_len << " grid, "
      << cfg.years << " years (" << h.time_len << " steps), " << land << " land cells\n";
  log << "fire_rate=" << fmt_g17(cube_fire_rate(generated.cube, cfg.target_var)) << "\n";
  return kExitOk;
}

int cmd_cube_info(const fs::path& cube_dir, std::ostream& log) {
  Datacube cube = read_cube(cube_dir);
  const CubeHeader& h = cube.header;
  long long land = 0;
  for (uint8_t m : cube.mask) land += m;
  log << "grid: " << h.lat_len << "x" << h.lon_len << ", steps: " << h.time_len << " ("
      << h.steps_per_year << "/year from " << h.t0_year << ")\n";
  log << "land cells: " << land << " of " << h.plane() << "\n";
  log << "variables:";
  for (const auto& v : h.variables) log << " " << v.name;
  log << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

namespace {

struct TrainSetup {
  SplitSpec split;
  std::pair<int, int> train_range;
  SampleSpec spec;
  TrainConfig tc;
};

TrainSetup make_setup(const CubeHeader& header, const TrainArgs& args) {
  if (args.model == "gru" && args.radius != 0) throw UsageError("gru requires --radius 0");
  TrainSetup setup;
  setup.split.train_years = parse_years(args.train_years);
  setup.split.val_years = parse_years(args.val_years);
  setup.split.test_years = parse_years(args.test_years);
  setup.split.validate();
  setup.train_range = train_time_range(header, setup.split.train_years);
  // Only the T-GCN consumes the grid-graph; for the other models k collapses
  // to 1 so an r=0 spec stays valid.
  setup.spec = SampleSpec{args.ts, args.horizon, args.radius,
                          args.model == "tgcn" ? args.k : 1};
  setup.spec.validate();

  setup.tc.epochs = args.epochs;
  setup.tc.base_lr = args.base_lr;
  setup.tc.weight_decay = args.weight_decay;
  setup.tc.batch_size = args.batch_size;
  setup.tc.seed = args.seed;
  setup.tc.val_every = args.val_every;
  setup.tc.negatives = make_policy(args.negative_policy, args.negative_ratio,
                                   args.max_train_positives);
  if (!args.cycles.empty()) {
    setup.tc.sgdr_cycles = args.cycles;
  } else if (args.epochs == 100) {
    setup.tc.sgdr_cycles = {25, 75};
  } else {
    setup.tc.sgdr_cycles = {args.epochs};
  }
  return setup;
}

json experiment_json(const TrainArgs& args, const TrainSetup& setup) {
  json j;
  j["model"] = args.model;
  j["ts"] = args.ts;
  j["h"] = args.horizon;
  j["r"] = args.radius;
  j["k"] = args.k;
  j["seed"] = args.seed;
  j["epochs"] = args.epochs;
  j["cycles"] = setup.tc.sgdr_cycles;
  j["batch_size"] = args.batch_size;
  j["base_lr"] = args.base_lr;
  j["weight_decay"] = args.weight_decay;
  j["val_every"] = args.val_every;
  j["negative_policy"] = args.negative_policy;
  j["negative_ratio"] = args.negative_ratio;
  j["max_train_positives"] = args.max_train_positives;
  j["target"] = args.target;
  j["train_years"] = args.train_years;
  j["val_years"] = args.val_years;
  j["test_years"] = args.test_years;
  return j;
}

}  // namespace

int cmd_train(const TrainArgs& args, std::ostream& log) {
  Datacube cube = read_cube(args.cube_dir);
  TrainSetup setup = make_setup(cube.header, args);
  PreparedCube prepared =
      prepare_cube(std::move(cube), args.target, setup.train_range.first, setup.train_range.second);

  ModelConfig mc;
  mc.model = args.model;
  mc.feature_dim = prepared.feature_dim();
  mc.spec = setup.spec;
  mc.mlp_hidden = args.mlp_hidden;
  auto model = make_model(mc, args.seed);

  SplitPools pools = enumerate_split_pools(prepared, setup.spec, setup.split);
  log << "train pool: " << pools.train_pos.size() << " positives, " << pools.train_neg.size()
      << " negatives; val " << pools.val.size() << ", test " << pools.test.size() << "\n";

  TrainResult result = train(*model, prepared, pools, setup.tc);

  std::error_code ec;
  fs::create_directories(args.out, ec);
  if (ec) throw DataError("cannot create output directory: " + args.out.string());

  std::string log_csv = train_log_csv_header() + "\n";
  for (const auto& row : result.log) log_csv += train_log_csv_row(row) + "\n";
  write_text(args.out / "train_log.csv", log_csv);

  json extra;
  extra["experiment"] = experiment_json(args, setup);
  extra["stats"] = stats_to_json(prepared.stats);

  model->params().restore(result.final_params);
  save_model(*model, args.out / "checkpoint_final", extra);
  model->params().restore(result.best_params);
  save_model(*model, args.out / "checkpoint_best", extra);

  for (const auto& row : result.log) {
    log << "epoch " << row.epoch << " lr " << fmt_g17(row.lr) << " loss "
        << fmt_g17(row.train_loss);
    if (row.has_val) log << " val_auprc " << fmt_g17(row.val_auprc);
    log << "\n";
  }
  log << "best epoch " << result.best_epoch;
  if (result.best_epoch >= 0 && !result.log.empty() &&
      result.log[static_cast<size_t>(result.best_epoch)].has_val) {
    log << " (val_auprc " << fmt_g17(result.best_val_auprc) << ")";
  }
  log << "\n";
  log << "wrote " << (args.out / "train_log.csv").string() << ", checkpoint_best, checkpoint_final\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

int cmd_evaluate(const EvalArgs& args, std::ostream& log) {
  const bool use_model = !args.checkpoint.empty();
  const bool use_baseline = !args.baseline.empty();
  if (use_model == use_baseline) {
    throw UsageError("evaluate needs exactly one of --checkpoint or --baseline");
  }
  if (args.split != "train" && args.split != "val" && args.split != "test") {
    throw UsageError("unknown split: " + args.split);
  }

  Datacube cube = read_cube(args.cube_dir);
  EvalReport report;

  if (use_model) {
    LoadedModel loaded = load_model(args.checkpoint);
    const json& exp = loaded.config.at("experiment");
    const json& stats = loaded.config.at("stats");
    const std::string target = exp.at("target").get<std::string>();
    PreparedCube prepared = prepare_cube(std::move(cube), target, stats.at("t_begin").get<int>(),
                                         stats.at("t_end").get<int>());
    SplitSpec split;
    split.train_years = parse_years(exp.at("train_years").get<std::string>());
    split.val_years = parse_years(exp.at("val_years").get<std::string>());
    split.test_years = parse_years(exp.at("test_years").get<std::string>());

    const SampleSpec& spec = loaded.model->config().spec;
    SplitPools pools = enumerate_split_pools(prepared, spec, split);
    std::vector<SampleRef> train_all;
    std::span<const SampleRef> refs;
    if (args.split == "test") {
      refs = pools.test;
    } else if (args.split == "val") {
      refs = pools.val;
    } else {
      train_all = pools.train_pos;
      train_all.insert(train_all.end(), pools.train_neg.begin(), pools.train_neg.end());
      refs = train_all;
    }
    std::shared_ptr<const GridGraph> graph;
    if (loaded.model->config().model == "tgcn") {
      graph = std::make_shared<GridGraph>(build_grid_graph(spec.r, spec.k));
    }
    auto scored = score_samples_with_model(*loaded.model, prepared, refs, graph);
    EvalMeta meta{loaded.model->config().model, spec.ts, spec.h, spec.r,
                  spec.k, args.split, exp.at("seed").get<uint64_t>()};
    report = evaluate_scored(meta, scored);
  } else {
    const Baseline baseline = baseline_from_name(args.baseline);
    SplitSpec split;
    split.train_years = parse_years(args.train_years);
    split.val_years = parse_years(args.val_years);
    split.test_years = parse_years(args.test_years);
    split.validate();
    const auto range = train_time_range(cube.header, split.train_years);
    PreparedCube prepared = prepare_cube(std::move(cube), args.target, range.first, range.second);
    SampleSpec spec{args.ts, args.horizon, 0, 1};
    SplitPools pools = enumerate_split_pools(prepared, spec, split);
    std::vector<SampleRef> train_all;
    std::span<const SampleRef> refs;
    if (args.split == "test") {
      refs = pools.test;
    } else if (args.split == "val") {
      refs = pools.val;
    } else {
      train_all = pools.train_pos;
      train_all.insert(train_all.end(), pools.train_neg.begin(), pools.train_neg.end());
      refs = train_all;
    }
    auto scored = score_samples_with_baseline(baseline, prepared, spec, refs);
    EvalMeta meta{baseline_name(baseline), spec.ts, spec.h, 0, 0, args.split, args.seed};
    report = evaluate_scored(meta, scored);
  }

  if (!args.results.empty()) {
    append_csv_row(args.results, eval_csv_header(), eval_csv_row(report));
  }
  log << eval_csv_header() << "\n" << eval_csv_row(report) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

namespace {

struct AblateSpec {
  std::string model;
  int ts, h, r, k;
  uint64_t seed;
};

std::string ablate_key(const std::string& model, int ts, int h, int r, int k,
                       const std::string& split, uint64_t seed) {
  return model + "," + std::to_string(ts) + "," + std::to_string(h) + "," + std::to_string(r) +
         "," + std::to_string(k) + "," + split + "," + std::to_string(seed);
}

std::set<std::string> completed_keys(const fs::path& results) {
  std::set<std::string> keys;
  if (!fs::exists(results)) return keys;
  std::ifstream in(results);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      first = false;
      continue;
    }
    // model,ts,h,r,k,split,auprc,n_pos,n_neg,seed,status
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() < 11) continue;
    keys.insert(fields[0] + "," + fields[1] + "," + fields[2] + "," + fields[3] + "," + fields[4] +
                "," + fields[5] + "," + fields[9]);
  }
  return keys;
}

}  // namespace

int cmd_ablate(const AblateArgs& args, std::ostream& log) {
  json cfg;
  try {
    cfg = json::parse(read_text(args.config));
  } catch (const json::exception& e) {
    throw DataError("malformed ablate config: " + std::string(e.what()));
  }

  const auto models = cfg.at("models").get<std::vector<std::string>>();
  const auto ts_list = cfg.at("ts").get<std::vector<int>>();
  const auto horizons = cfg.at("horizons").get<std::vector<int>>();
  const auto radii = cfg.value("radii", std::vector<int>{1});
  const int k = cfg.value("k", 9);
  const uint64_t seed = cfg.value("seed", 0ull);

  TrainArgs base;
  base.epochs = cfg.value("epochs", 4);
  base.batch_size = cfg.value("batch_size", 64);
  base.base_lr = cfg.value("base_lr", 0.01);
  base.weight_decay = cfg.value("weight_decay", 0.001);
  base.val_every = cfg.value("val_every", 0);
  base.negative_policy = cfg.value("negative_policy", std::string("ratio"));
  base.negative_ratio = cfg.value("negative_ratio", 1.0);
  base.max_train_positives = cfg.value("max_train_positives", -1ll);
  base.target = cfg.value("target", std::string("burned_area"));
  base.train_years = cfg.value("train_years", std::string("2000-2003"));
  base.val_years = cfg.value("val_years", std::string("2004"));
  base.test_years = cfg.value("test_years", std::string("2005"));
  std::vector<int> cycles = cfg.value("cycles", std::vector<int>{});

  std::error_code ec;
  fs::create_directories(args.out, ec);
  if (ec) throw DataError("cannot create output directory: " + args.out.string());
  const fs::path results = args.out / "results.csv";

  // Expand the grid; gru collapses the radius axis to r=0.
  std::vector<AblateSpec> specs;
  for (const auto& model : models) {
    std::vector<int> rs = model == "gru" ? std::vector<int>{0} : radii;
    for (int ts : ts_list) {
      for (int h : horizons) {
        for (int r : rs) {
          specs.push_back({model, ts, h, r, model == "tgcn" ? k : 1, seed});
        }
      }
    }
  }

  const std::set<std::string> done = completed_keys(results);

  // Shared data for the workers.
  Datacube cube = read_cube(args.cube_dir);
  SplitSpec split;
  split.train_years = parse_years(base.train_years);
  split.val_years = parse_years(base.val_years);
  split.test_years = parse_years(base.test_years);
  split.validate();
  const auto range = train_time_range(cube.header, split.train_years);
  PreparedCube prepared = prepare_cube(std::move(cube), base.target, range.first, range.second);

  std::mutex io_mutex;
  std::atomic<size_t> next{0};
  std::atomic<int> failures{0};

  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= specs.size()) return;
      const AblateSpec& s = specs[i];
      const std::string key = ablate_key(s.model, s.ts, s.h, s.r, s.k, "test", s.seed);
      if (done.count(key)) {
        std::lock_guard lock(io_mutex);
        log << "skip (done): " << key << "\n";
        continue;
      }
      TrainConfig tc;
      tc.epochs = base.epochs;
      tc.base_lr = base.base_lr;
      tc.weight_decay = base.weight_decay;
      tc.batch_size = base.batch_size;
      tc.seed = s.seed;
      tc.val_every = base.val_every;
      tc.negatives = make_policy(base.negative_policy, base.negative_ratio,
                                 base.max_train_positives);
      tc.sgdr_cycles = cycles.empty() ? std::vector<int>{base.epochs} : cycles;

      EvalReport report;
      try {
        SampleSpec spec{s.ts, s.h, s.r, s.k};
        spec.validate();
        report = run_experiment(prepared, spec, split, s.model, tc, "test").report;
      } catch (const std::exception& e) {
        report.meta = EvalMeta{s.model, s.ts, s.h, s.r, s.k, "test", s.seed};
        report.auprc = std::numeric_limits<double>::quiet_NaN();
        report.status = "failed";
        failures.fetch_add(1);
        std::lock_guard lock(io_mutex);
        log << "failed: " << key << " (" << e.what() << ")\n";
      }
      std::lock_guard lock(io_mutex);
      append_csv_row(results, eval_csv_header(), eval_csv_row(report));
      if (report.status == "ok") {
        log << "done: " << key << " auprc " << fmt_g17(report.auprc) << "\n";
      }
    }
  };

  const int n_workers = std::max(1, args.workers);
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(n_workers));
    for (int i = 0; i < n_workers; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  // Pivot per (model, ts): horizons as rows, radii as columns, the Table-2
  // layout downstream tools expect.
  std::map<std::string, std::map<std::pair<int, int>, double>> by_model_ts;  // (h,r) -> auprc
  {
    std::ifstream in(results);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (first) {
        first = false;
        continue;
      }
      std::vector<std::string> f;
      std::stringstream ss(line);
      std::string part;
      while (std::getline(ss, part, ',')) f.push_back(part);
      if (f.size() < 11 || f[10] != "ok") continue;
      by_model_ts[f[0] + "_ts" + f[1]][{std::stoi(f[2]), std::stoi(f[3])}] = std::stod(f[6]);
    }
  }
  for (const auto& [name, grid] : by_model_ts) {
    std::set<int> hs, rs;
    for (const auto& [hr, _] : grid) {
      hs.insert(hr.first);
      rs.insert(hr.second);
    }
    std::string csv = "h";
    for (int r : rs) csv += ",r" + std::to_string(r);
    csv += "\n";
    for (int h : hs) {
      csv += std::to_string(h);
      for (int r : rs) {
        csv += ",";
        auto it = grid.find({h, r});
        if (it != grid.end()) csv += fmt_g17(it->second);
      }
      csv += "\n";
    }
    write_text(args.out / ("pivot_" + name + ".csv"), csv);
  }

  log << "ablation complete: " << specs.size() << " specs, " << failures.load() << " failures\n";
  return failures.load() == 0 ? kExitOk : kExitOk;  // partial failures are marked, not fatal
}

// ---------------------------------------------------------------------------
// predict-map
// ---------------------------------------------------------------------------

int cmd_predict_map(const PredictMapArgs& args, std::ostream& log) {
  LoadedModel loaded = load_model(args.checkpoint);
  const json& exp = loaded.config.at("experiment");
  const json& stats = loaded.config.at("stats");
  Datacube cube = read_cube(args.cube_dir);
  PreparedCube prepared =
      prepare_cube(std::move(cube), exp.at("target").get<std::string>(),
                   stats.at("t_begin").get<int>(), stats.at("t_end").get<int>());

  const SampleSpec& spec = loaded.model->config().spec;
  const CubeHeader& h = prepared.cube.header;
  if (args.t_idx - spec.ts + 1 < 0 || args.t_idx + spec.h >= h.time_len) {
    throw DataError("predict-map: t_idx leaves no room for the input window or horizon");
  }
  std::shared_ptr<const GridGraph> graph;
  if (loaded.model->config().model == "tgcn") {
    graph = std::make_shared<GridGraph>(build_grid_graph(spec.r, spec.k));
  }

  std::string csv = "lon,lat,score\n";
  std::vector<uint8_t> image(static_cast<size_t>(h.plane()), 0);
  Rng rng(0);
  for (int lat = 0; lat < h.lat_len; ++lat) {
    for (int lon = 0; lon < h.lon_len; ++lon) {
      if (prepared.cube.mask_at(lat, lon) == 0) continue;
      Sample s = extract_sample(prepared, spec, {lat, lon, args.t_idx}, graph);
      const double score = loaded.model->forward(nullptr, s, false, rng).value();
      csv += fmt_g17(h.lon_values[static_cast<size_t>(lon)]) + "," +
             fmt_g17(h.lat_values[static_cast<size_t>(lat)]) + "," + fmt_g17(score) + "\n";
      image[static_cast<size_t>(lat) * h.lon_len + lon] =
          static_cast<uint8_t>(std::lround(std::clamp(score, 0.0, 1.0) * 255.0));
    }
  }

  const fs::path csv_path = args.out.string() + ".csv";
  const fs::path pgm_path = args.out.string() + ".pgm";
  write_text(csv_path, csv);

  std::string pgm_header =
      "P5\n" + std::to_string(h.lon_len) + " " + std::to_string(h.lat_len) + "\n255\n";
  std::vector<uint8_t> pgm(pgm_header.begin(), pgm_header.end());
  pgm.insert(pgm.end(), image.begin(), image.end());
  write_bytes(pgm_path, pgm);

  log << "wrote " << csv_path.string() << " and " << pgm_path.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// argv entry point
// ---------------------------------------------------------------------------

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"firecast: spatio-temporal wildfire occurrence forecasting toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "generate a synthetic datacube");
  gen_cmd->add_option("--config", gen.config, "synthetic config JSON");
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_option("--out", gen.out, "output cube directory")->required();

  fs::path info_cube;
  auto* info_cmd = app.add_subcommand("cube-info", "summarize a cube directory");
  info_cmd->add_option("--cube", info_cube, "cube directory")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--cube", tr.cube_dir, "cube directory")->required();
  train_cmd->add_option("--model", tr.model, "gru | convlstm | tgcn")->required();
  train_cmd->add_option("--ts", tr.ts, "input timeseries length");
  train_cmd->add_option("--horizon", tr.horizon, "forecast horizon in 8-day periods");
  train_cmd->add_option("--radius", tr.radius, "spatial radius r");
  train_cmd->add_option("--k", tr.k, "grid-graph neighbor count (self included)");
  train_cmd->add_option("--seed", tr.seed, "training seed");
  train_cmd->add_option("--epochs", tr.epochs, "epoch count");
  train_cmd->add_option("--cycles", tr.cycles, "SGDR cycle lengths (must sum to epochs)");
  train_cmd->add_option("--batch-size", tr.batch_size, "batch size");
  train_cmd->add_option("--lr", tr.base_lr, "initial learning rate");
  train_cmd->add_option("--weight-decay", tr.weight_decay, "weight decay factor");
  train_cmd->add_option("--val-every", tr.val_every, "validate every N epochs (0 = never)");
  train_cmd->add_option("--negative-policy", tr.negative_policy, "ratio | keep-all");
  train_cmd->add_option("--negative-ratio", tr.negative_ratio, "negatives per positive");
  train_cmd->add_option("--max-train-positives", tr.max_train_positives,
                        "cap on positives per epoch (-1 = all)");
  train_cmd->add_option("--mlp-hidden", tr.mlp_hidden, "readout MLP hidden widths");
  train_cmd->add_option("--target", tr.target, "target variable name");
  train_cmd->add_option("--train-years", tr.train_years, "e.g. 2000-2003");
  train_cmd->add_option("--val-years", tr.val_years, "e.g. 2004");
  train_cmd->add_option("--test-years", tr.test_years, "e.g. 2005");
  train_cmd->add_option("--out", tr.out, "output directory")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint or baseline");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint directory");
  eval_cmd->add_option("--baseline", ev.baseline, "naive-any | naive-majority");
  eval_cmd->add_option("--cube", ev.cube_dir, "cube directory")->required();
  eval_cmd->add_option("--split", ev.split, "train | val | test");
  eval_cmd->add_option("--results", ev.results, "results CSV to append to");
  eval_cmd->add_option("--ts", ev.ts, "timeseries length (baseline only)");
  eval_cmd->add_option("--horizon", ev.horizon, "horizon (baseline only)");
  eval_cmd->add_option("--target", ev.target, "target variable (baseline only)");
  eval_cmd->add_option("--train-years", ev.train_years, "train years (baseline only)");
  eval_cmd->add_option("--val-years", ev.val_years, "val years (baseline only)");
  eval_cmd->add_option("--test-years", ev.test_years, "test years (baseline only)");
  eval_cmd->add_option("--seed", ev.seed, "seed echoed into the results row");

  AblateArgs ab;
  auto* ablate_cmd = app.add_subcommand("ablate", "run a sweep over (model, ts, h, r)");
  ablate_cmd->add_option("--cube", ab.cube_dir, "cube directory")->required();
  ablate_cmd->add_option("--config", ab.config, "sweep config JSON")->required();
  ablate_cmd->add_option("--out", ab.out, "output directory")->required();
  ablate_cmd->add_option("--workers", ab.workers, "concurrent runs");

  PredictMapArgs pm;
  auto* map_cmd = app.add_subcommand("predict-map", "export a confidence map");
  map_cmd->add_option("--checkpoint", pm.checkpoint, "checkpoint directory")->required();
  map_cmd->add_option("--cube", pm.cube_dir, "cube directory")->required();
  map_cmd->add_option("--t-idx", pm.t_idx, "origin timestep of the prediction")->required();
  map_cmd->add_option("--out", pm.out, "output path prefix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_synthetic(gen, std::cout);
    if (info_cmd->parsed()) return cmd_cube_info(info_cube, std::cout);
    if (train_cmd->parsed()) return cmd_train(tr, std::cout);
    if (eval_cmd->parsed()) return cmd_evaluate(ev, std::cout);
    if (ablate_cmd->parsed()) return cmd_ablate(ab, std::cout);
    if (map_cmd->parsed()) return cmd_predict_map(pm, std::cout);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const nn::ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace firecast::cli
