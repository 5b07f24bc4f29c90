#include "prlstm/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "prlstm/bench.hpp"
#include "prlstm/runconfig.hpp"
#include "prlstm/runner.hpp"
#include "prlstm/scan.hpp"
#include "prlstm/train.hpp"

namespace prlstm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("cannot write " + path);
  os << text;
}

std::string format_double(double v, const char* fmt = "%.8g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

std::string loss_csv(const std::vector<train::LossPoint>& trace) {
  std::ostringstream os;
  os << "step,wall_ms,loss\n";
  for (const auto& p : trace)
    os << p.step << "," << format_double(p.wall_ms, "%.3f") << "," << format_double(p.loss)
       << "\n";
  return os.str();
}

std::string eval_csv(const train::EvalReport& report) {
  std::ostringstream os;
  os << "length,accuracy\n";
  for (const auto& [length, acc] : report.per_length)
    os << length << "," << format_double(acc) << "\n";
  return os.str();
}

train::TrainConfig train_config_from(const RunConfig& rc) {
  train::TrainConfig tc;
  tc.steps = rc.get_int("train.steps");
  tc.batch = rc.get_int("train.batch");
  tc.lr = rc.get_double("train.lr");
  tc.clip_norm = rc.get_double("train.clip_norm");
  tc.seed = static_cast<uint64_t>(rc.get_int("train.seed"));
  tc.train_min = rc.get_int("train.train_min");
  tc.train_max = rc.get_int("train.train_max");
  tc.eval_min = rc.get_int("train.eval_min");
  tc.eval_max = rc.get_int("train.eval_max");
  tc.eval_batch = rc.get_int("train.eval_batch");
  if (tc.eval_min <= tc.train_max)
    throw ConfigError("eval lengths must strictly exceed the training maximum");
  return tc;
}

ModelConfig model_config_from(const RunConfig& rc) {
  ModelConfig mc;
  mc.variant = variant_from_name(rc.get_string("model.variant"));
  mc.d_h = rc.get_int("model.d_h");
  mc.refine_stages = rc.get_int("model.refine_stages");
  return mc;
}

tasks::TaskId task_from(const RunConfig& rc) {
  const std::string name = rc.get_string("task");
  if (name.empty()) throw ConfigError("no task selected (set 'task' or pass --task)");
  try {
    return tasks::task_from_name(name);
  } catch (const tasks::TaskError& e) {
    throw ConfigError(e.what());
  }
}

void write_model_files(const Model& m, tasks::TaskId task, const std::string& dir) {
  fs::create_directories(dir);
  m.save(dir + "/checkpoint.prl", dir + "/model.json");
  json j = json::parse(m.config.to_json());
  j["task"] = tasks::spec(task).name;
  write_text(dir + "/model.json", j.dump(2) + "\n");
}

json seed_summary(const train::SeedRun& run, const RunConfig& rc, tasks::TaskId task,
                  const ModelConfig& mc) {
  json j;
  j["config_hash"] = rc.content_hash();
  j["task"] = tasks::spec(task).name;
  j["variant"] = variant_name(mc.variant);
  j["d_h"] = mc.d_h;
  j["refine_stages"] = mc.refine_stages;
  j["seed"] = run.seed;
  j["steps"] = static_cast<int64_t>(run.result.trace.size());
  j["final_loss"] = run.result.trace.empty() ? 0.0 : run.result.trace.back().loss;
  j["score"] = run.report.score;
  j["success"] = run.report.success;
  return j;
}

void write_seed_artifacts(const train::SeedRun& run, const RunConfig& rc, tasks::TaskId task,
                          const ModelConfig& mc, const std::string& dir) {
  fs::create_directories(dir);
  write_model_files(run.result.model, task, dir);
  write_text(dir + "/loss.csv", loss_csv(run.result.trace));
  write_text(dir + "/eval.csv", eval_csv(run.report));
  write_text(dir + "/summary.json", seed_summary(run, rc, task, mc).dump(2) + "\n");
}

int cmd_train(const RunConfig& rc) {
  const tasks::TaskId task = task_from(rc);
  const ModelConfig mc = model_config_from(rc);
  const train::TrainConfig tc = train_config_from(rc);
  const std::string out_dir = rc.get_string("out_dir");
  const int64_t n_seeds = rc.get_int("train.seeds");
  if (n_seeds < 1) throw ConfigError("train.seeds must be >= 1");
  rc.write_resolved(out_dir);

  WorkerPool pool(static_cast<int>(rc.get_int("workers")));
  std::vector<uint64_t> seeds;
  for (int64_t i = 0; i < n_seeds; i++) seeds.push_back(tc.seed + static_cast<uint64_t>(i));

  auto on_done = [&](const train::SeedRun& run) {
    const std::string dir =
        n_seeds == 1 ? out_dir : out_dir + "/seed_" + std::to_string(run.seed);
    write_seed_artifacts(run, rc, task, mc, dir);
    std::cout << "seed " << run.seed << ": score=" << format_double(run.report.score)
              << " success=" << (run.report.success ? "true" : "false") << "\n";
  };
  auto result = train::run_seeds(mc, task, tc, seeds, &pool, on_done);

  if (n_seeds > 1) {
    json j;
    j["config_hash"] = rc.content_hash();
    j["task"] = tasks::spec(task).name;
    j["variant"] = variant_name(mc.variant);
    json per_seed = json::array();
    for (const auto& run : result.runs) {
      per_seed.push_back(
          {{"seed", run.seed}, {"score", run.report.score}, {"success", run.report.success}});
    }
    j["seeds"] = per_seed;
    j["best_seed"] = result.runs[result.best].seed;
    j["best_score"] = result.best_report().score;
    j["success"] = result.best_report().success;
    write_text(out_dir + "/summary.json", j.dump(2) + "\n");
  }
  std::cout << "best score " << format_double(result.best_report().score) << " (seed "
            << result.runs[result.best].seed << ")\n";
  return 0;
}

int cmd_eval(const RunConfig& rc, const std::string& model_dir) {
  if (model_dir.empty()) throw ConfigError("eval requires --model-dir");
  Model m = Model::load(model_dir + "/checkpoint.prl", model_dir + "/model.json");
  // task comes from the sidecar unless overridden
  std::string task_name = rc.get_string("task");
  if (task_name.empty()) {
    std::ifstream is(model_dir + "/model.json");
    json j;
    is >> j;
    if (!j.contains("task")) throw ConfigError("model.json has no task; pass --task");
    task_name = j["task"].get<std::string>();
  }
  tasks::TaskId task;
  try {
    task = tasks::task_from_name(task_name);
  } catch (const tasks::TaskError& e) {
    throw ConfigError(e.what());
  }
  const std::string out_dir = rc.get_string("out_dir");
  rc.write_resolved(out_dir);
  WorkerPool pool(static_cast<int>(rc.get_int("workers")));
  std::vector<int64_t> lengths;
  for (int64_t t = rc.get_int("train.eval_min"); t <= rc.get_int("train.eval_max"); t++)
    lengths.push_back(t);
  auto report = train::evaluate(m, task, lengths, rc.get_int("train.eval_batch"),
                                static_cast<uint64_t>(rc.get_int("train.seed")), &pool);
  write_text(out_dir + "/eval.csv", eval_csv(report));
  json j;
  j["config_hash"] = rc.content_hash();
  j["task"] = task_name;
  j["score"] = report.score;
  j["success"] = report.success;
  j["seed"] = report.seed;
  write_text(out_dir + "/summary.json", j.dump(2) + "\n");
  std::cout << "score " << format_double(report.score) << " success "
            << (report.success ? "true" : "false") << "\n";
  return 0;
}

int cmd_bench(const RunConfig& rc, const std::string& out_path) {
  if (!out_path.empty()) {
    fs::path parent = fs::path(out_path).parent_path();
    rc.write_resolved(parent.empty() ? "." : parent.string());
  }
  bench::BenchConfig bc;
  bc.variant = variant_from_name(rc.get_string("bench.variant"));
  bc.lengths = rc.get_int_list("bench.lengths");
  bc.batch = rc.get_int("bench.batch");
  bc.repeats = rc.get_int("bench.repeats");
  bc.warmup = rc.get_int("bench.warmup");
  bc.threshold_ms = rc.get_double("bench.threshold_ms");
  bc.workers = rc.get_int("workers");
  bc.d_h = rc.get_int("bench.d_h");
  bc.refine_stages = rc.get_int("bench.refine_stages");
  bc.seed = static_cast<uint64_t>(rc.get_int("bench.seed"));
  auto report = bench::profile_inference(bc);
  for (const auto& r : report.records) {
    std::cout << r.variant << " T=" << r.length << " mean=" << format_double(r.mean_ms, "%.3f")
              << "ms std=" << format_double(r.std_ms, "%.3f") << "ms depth=" << r.depth
              << " states=" << r.state_slots << " mem=" << r.peak_mem_bytes << "B ["
              << bench::termination_name(r.termination) << "]\n";
  }
  std::cout << "peak rss " << bench::peak_rss_bytes() << " bytes (informative)\n";
  if (!out_path.empty()) {
    std::ofstream os(out_path, std::ios::trunc);
    if (!os) throw ConfigError("cannot write " + out_path);
    bench::emit_csv(report, os);
  } else {
    bench::emit_csv(report, std::cout);
  }
  return 0;
}

int cmd_ablate(const RunConfig& rc) {
  const tasks::TaskId task = task_from(rc);
  const train::TrainConfig tc = train_config_from(rc);
  const std::string out_dir = rc.get_string("out_dir");
  rc.write_resolved(out_dir);
  const int64_t base = rc.get_int("model.d_h");
  WorkerPool pool(static_cast<int>(rc.get_int("workers")));

  struct Row {
    std::string label;
    Variant variant;
    int64_t d_h;
    int64_t refine;
  };
  const std::vector<Row> grid = {
      {"baseline", Variant::pr_lstm, base, 1},
      {"param-matched", Variant::pr_lstm, matched_hidden_size(base), 1},
      {"refine-0", Variant::pr_lstm, base, 0},
      {"refine-2", Variant::pr_lstm, base, 2},
      {"pr-rnn-refine-0", Variant::pr_rnn, base, 0},
      {"pr-rnn-refine-1", Variant::pr_rnn, base, 1},
      {"pr-rnn-refine-2", Variant::pr_rnn, base, 2},
  };

  std::vector<uint64_t> seeds;
  for (int64_t i = 0; i < rc.get_int("train.seeds"); i++)
    seeds.push_back(tc.seed + static_cast<uint64_t>(i));

  std::ostringstream csv;
  csv << "label,variant,d_h,refine_stages,weights,biases,best_seed,score,success\n";
  json rows = json::array();
  for (const auto& row : grid) {
    ModelConfig mc;
    mc.variant = row.variant;
    mc.d_h = row.d_h;
    mc.refine_stages = row.refine;
    auto result = train::run_seeds(mc, task, tc, seeds, &pool);
    const auto& best = result.best_report();
    const auto counted = count_params(train::with_task_dims(mc, task));
    csv << row.label << "," << variant_name(row.variant) << "," << row.d_h << "," << row.refine
        << "," << counted.weights << "," << counted.biases << ","
        << result.runs[result.best].seed << "," << format_double(best.score) << ","
        << (best.success ? "true" : "false") << "\n";
    rows.push_back({{"label", row.label},
                    {"variant", variant_name(row.variant)},
                    {"d_h", row.d_h},
                    {"refine_stages", row.refine},
                    {"weights", counted.weights},
                    {"biases", counted.biases},
                    {"best_seed", result.runs[result.best].seed},
                    {"score", best.score},
                    {"success", best.success}});
    std::cout << row.label << ": score=" << format_double(best.score)
              << " success=" << (best.success ? "true" : "false") << "\n";
  }
  write_text(out_dir + "/ablation.csv", csv.str());
  json j;
  j["config_hash"] = rc.content_hash();
  j["task"] = tasks::spec(task).name;
  j["rows"] = rows;
  write_text(out_dir + "/ablation.json", j.dump(2) + "\n");
  return 0;
}

int cmd_gen_data(const RunConfig& rc, const std::string& out_path) {
  if (!out_path.empty()) {
    fs::path parent = fs::path(out_path).parent_path();
    rc.write_resolved(parent.empty() ? "." : parent.string());
  }
  const tasks::TaskId task = task_from(rc);
  const auto& ts = tasks::spec(task);
  const int64_t count = rc.get_int("gen.count");
  const int64_t length = rc.get_int("gen.length");
  const uint64_t seed = static_cast<uint64_t>(rc.get_int("gen.seed"));
  std::ostringstream os;
  for (int64_t i = 0; i < count; i++) {
    const uint64_t sample_seed = mix_seed(seed, static_cast<uint64_t>(i));
    Rng rng(sample_seed);
    auto sample = tasks::generate(task, length, rng);
    json j;
    j["task"] = ts.name;
    json input = json::array(), target = json::array(), mask = json::array();
    for (int32_t tok : sample.input) input.push_back(ts.input_vocab.at(tok));
    for (int32_t tok : sample.target) target.push_back(ts.output_vocab.at(tok));
    for (uint8_t m : sample.mask) mask.push_back(static_cast<int>(m));
    j["input"] = input;
    j["target"] = target;
    j["mask"] = mask;
    j["seed"] = sample_seed;
    os << j.dump() << "\n";
  }
  if (out_path.empty())
    std::cout << os.str();
  else
    write_text(out_path, os.str());
  return 0;
}

int cmd_plan_inspect(int64_t length, bool as_csv) {
  auto plan = scan::build_plan(length);
  auto [ops, depth] = scan::depth_work(plan);
  if (as_csv) {
    std::cout << "level,steps,pair,fill,depth,ops\n";
    for (int64_t k = 0; k < plan.depth(); k++) {
      int64_t pairs = 0, fills = 0;
      for (const auto& s : plan.levels[k])
        (s.kind == scan::StepKind::pair ? pairs : fills)++;
      std::cout << k << "," << plan.levels[k].size() << "," << pairs << "," << fills << ","
                << depth << "," << ops << "\n";
    }
  } else {
    for (int64_t k = 0; k < plan.depth(); k++) {
      int64_t pairs = 0, fills = 0;
      for (const auto& s : plan.levels[k])
        (s.kind == scan::StepKind::pair ? pairs : fills)++;
      std::cout << "level " << k << ": " << plan.levels[k].size() << " steps (pair=" << pairs
                << ", fill=" << fills << ")\n";
    }
    std::cout << "depth=" << depth << " ops=" << ops << "\n";
  }
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"PR-LSTM sequence modeling artifact"};
  app.require_subcommand(1);

  std::string config_path, task, preset, out_dir, model_dir, out_path, variant, lengths_csv;
  std::vector<std::string> sets;
  int64_t seed = -1, seeds = -1, workers = -1, batch = -1, repeats = -1, plan_T = 1;
  int64_t gen_count = -1, gen_length = -1, bench_dh = -1, steps = -1;
  double threshold_ms = -1.0;
  bool plan_csv = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file (flat dotted keys)");
    cmd->add_option("--set", sets, "override: key=value")->type_size(1)->allow_extra_args(false);
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--workers", workers, "worker thread count");
  };

  auto* t_train = app.add_subcommand("train", "train a model on a task");
  add_common(t_train);
  t_train->add_option("--task", task, "task name");
  t_train->add_option("--preset", preset, "desk or paper");
  t_train->add_option("--seed", seed, "base RNG seed");
  t_train->add_option("--seeds", seeds, "number of seeds (best-of)");
  t_train->add_option("--steps", steps, "optimizer steps");

  auto* t_eval = app.add_subcommand("eval", "evaluate a saved checkpoint");
  add_common(t_eval);
  t_eval->add_option("--model-dir", model_dir, "directory with checkpoint.prl + model.json")
      ->required();
  t_eval->add_option("--task", task, "task name (defaults to the checkpoint's)");
  t_eval->add_option("--seed", seed, "evaluation RNG seed");

  auto* t_bench = app.add_subcommand("bench", "profile forward-only scaling");
  add_common(t_bench);
  t_bench->add_option("--variant", variant, "pr-lstm|pr-rnn|seq-lstm|seq-rnn");
  t_bench->add_option("--lengths", lengths_csv, "comma-separated lengths");
  t_bench->add_option("--batch", batch, "samples per batch");
  t_bench->add_option("--repeats", repeats, "timed repeats per length");
  t_bench->add_option("--threshold-ms", threshold_ms, "stop when mean time reaches this");
  t_bench->add_option("--d-h", bench_dh, "hidden width");

  auto* t_ablate = app.add_subcommand("ablate", "run the encoder-variant grid");
  add_common(t_ablate);
  t_ablate->add_option("--task", task, "task name");
  t_ablate->add_option("--preset", preset, "desk or paper");
  t_ablate->add_option("--seed", seed, "base RNG seed");
  t_ablate->add_option("--seeds", seeds, "seeds per variant");
  t_ablate->add_option("--steps", steps, "optimizer steps");

  auto* t_gen = app.add_subcommand("gen-data", "emit task samples as JSON lines");
  add_common(t_gen);
  t_gen->add_option("--task", task, "task name");
  t_gen->add_option("--length", gen_length, "task input length");
  t_gen->add_option("--count", gen_count, "sample count");
  t_gen->add_option("--seed", seed, "base RNG seed");

  auto* t_plan = app.add_subcommand("plan-inspect", "print the schedule for a length");
  t_plan->add_option("--T", plan_T, "sequence length")->required();
  t_plan->add_flag("--csv", plan_csv, "machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig rc;
    if (!config_path.empty()) rc.load_file(config_path);
    if (!preset.empty()) rc.apply_preset(preset);
    for (const auto& kv : sets) {
      auto pos = kv.find('=');
      if (pos == std::string::npos) throw ConfigError("--set expects key=value, got " + kv);
      rc.set(kv.substr(0, pos), kv.substr(pos + 1));
    }
    if (!task.empty()) rc.set("task", task);
    if (!out_dir.empty()) rc.set("out_dir", out_dir);
    if (workers >= 0) rc.set("workers", std::to_string(workers));
    if (seed >= 0) {
      rc.set("train.seed", std::to_string(seed));
      rc.set("gen.seed", std::to_string(seed));
      rc.set("bench.seed", std::to_string(seed));
    }
    if (seeds >= 0) rc.set("train.seeds", std::to_string(seeds));
    if (steps >= 0) rc.set("train.steps", std::to_string(steps));
    if (!variant.empty()) rc.set("bench.variant", variant);
    if (!lengths_csv.empty()) {
      std::string list = "[" + lengths_csv + "]";
      rc.set("bench.lengths", list);
    }
    if (batch >= 0) rc.set("bench.batch", std::to_string(batch));
    if (repeats >= 0) rc.set("bench.repeats", std::to_string(repeats));
    if (threshold_ms >= 0) rc.set("bench.threshold_ms", format_double(threshold_ms));
    if (bench_dh >= 0) rc.set("bench.d_h", std::to_string(bench_dh));
    if (gen_count >= 0) rc.set("gen.count", std::to_string(gen_count));
    if (gen_length >= 0) rc.set("gen.length", std::to_string(gen_length));

    if (t_train->parsed()) return cmd_train(rc);
    if (t_eval->parsed()) return cmd_eval(rc, model_dir);
    if (t_bench->parsed()) return cmd_bench(rc, out_dir);
    if (t_ablate->parsed()) return cmd_ablate(rc);
    if (t_gen->parsed()) return cmd_gen_data(rc, out_dir);
    if (t_plan->parsed()) return cmd_plan_inspect(plan_T, plan_csv);
    throw ConfigError("no command");
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 2;
  } catch (const train::DivergenceError& e) {
    std::cerr << "error: divergence: " << e.what() << "\n";
    return 3;
  } catch (const std::bad_alloc&) {
    std::cerr << "error: resource: allocation failed\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace prlstm::cli
