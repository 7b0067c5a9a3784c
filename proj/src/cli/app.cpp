#include "mer/cli/app.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "mer/cli/gradient_suite.hpp"
#include "mer/data/synth.hpp"
#include "mer/model/accounting.hpp"
#include "mer/model/checkpoint.hpp"
#include "mer/train/ablation.hpp"

namespace mer::cli {

namespace fs = std::filesystem;

nlohmann::json to_json(const RunConfig& c) {
  return {{"schema_version", c.schema_version}, {"model", model::to_json(c.model)}, {"train", train::to_json(c.train)}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  static const std::set<std::string> known = {"schema_version", "model", "train"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  if (!j.contains("schema_version")) throw std::invalid_argument("config: missing 'schema_version'");
  if (!j.at("schema_version").is_number_integer() || j.at("schema_version").get<int>() != kSchemaVersion) {
    throw std::invalid_argument("config: schema_version must be " + std::to_string(kSchemaVersion));
  }
  RunConfig c;
  if (j.contains("model")) c.model = model::model_config_from_json(j.at("model"));
  if (j.contains("train")) c.train = train::train_config_from_json(j.at("train"));
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  try {
    return run_config_from_json(j);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

void prepare_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir.string());
}

nlohmann::json class_names_json() {
  nlohmann::json names = nlohmann::json::array();
  for (const auto& n : data::class_names()) names.push_back(n);
  return names;
}

std::vector<std::string> class_names_vec() {
  return {data::class_names().begin(), data::class_names().end()};
}

// Options shared by train and ablate.
struct TrainOptions {
  std::string config;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> precision;
  std::optional<std::string> split;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<std::string> variant;
};

void add_train_options(CLI::App* cmd, TrainOptions& o) {
  cmd->add_option("--config", o.config, "JSON run config (defaults: desk model, standard training)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--data", o.data, "dataset manifest (.jsonl)")->required();
  cmd->add_option("--out", o.out, "output directory")->required();
  cmd->add_option("--seed", o.seed, "training seed");
  cmd->add_option("--precision", o.precision, "single or double")->check(CLI::IsMember({"single", "double"}));
  cmd->add_option("--split", o.split, "holdout_stratified or loso")
      ->check(CLI::IsMember({"holdout_stratified", "holdout", "loso"}));
  cmd->add_option("--epochs", o.epochs, "number of epochs")->check(CLI::NonNegativeNumber);
  cmd->add_option("--batch-size", o.batch_size, "mini-batch size")->check(CLI::PositiveNumber);
  cmd->add_option("--variant", o.variant, "GFEM, LFEM, DBFEM, DBFEM+CAFFM, DBFEM+CAFFM_L or DBFEM+CAFFM_G");
}

RunConfig resolve(const TrainOptions& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed) c.train.seed = *o.seed;
  if (o.precision) c.train.precision = train::parse_precision(*o.precision);
  if (o.split) c.train.split = train::parse_split(*o.split);
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.batch_size) c.train.batch_size = *o.batch_size;
  if (o.variant) c.model.variant = model::parse_variant(*o.variant);
  model::validate(c.model);
  train::validate(c.train);
  return c;
}

data::PreparedDataset load_dataset(const std::string& manifest_path, const model::ModelConfig& config,
                                   std::ostream& out) {
  if (!fs::exists(manifest_path)) throw std::runtime_error("manifest not found: " + manifest_path);
  const data::Manifest manifest = data::load_manifest(manifest_path);
  out << "manifest " << manifest_path << ": " << manifest.size() << " records\n";
  return data::prepare(data::load_samples(manifest, data::CropGeometry::for_model(config)), config);
}

train::EpochCallback progress(std::ostream& out, int epochs) {
  const int every = std::max(1, epochs / 10);
  return [&out, every, epochs](const train::EpochRecord& r) {
    if ((r.epoch + 1) % every == 0 || r.epoch + 1 == epochs) {
      char line[128];
      std::snprintf(line, sizeof(line), "  epoch %4d  loss %.5f  lr %.3g  train acc %.4f\n", r.epoch + 1, r.loss, r.lr,
                    r.train_accuracy);
      out << line << std::flush;
    }
  };
}

template <typename T>
int do_train(const RunConfig& config, const data::PreparedDataset& dataset, const fs::path& out_dir,
             std::ostream& out) {
  auto result = train::run_protocol<T>(config.model, config.train, dataset, progress(out, config.train.epochs));
  model::save_checkpoint(out_dir / "checkpoint", result.models.back());

  nlohmann::json folds = nlohmann::json::array();
  for (std::size_t i = 0; i < result.histories.size(); ++i) {
    folds.push_back({{"fold", result.fold_names[i]}, {"history", train::to_json(result.histories[i])}});
  }
  const nlohmann::json history = {{"seed", config.train.seed}, {"folds", folds}};
  nlohmann::json metrics = {{"seed", config.train.seed},
                            {"split", train::to_string(config.train.split)},
                            {"variant", model::label(config.model.variant)},
                            {"samples", dataset.size()},
                            {"test", train::to_json(result.test_metrics)},
                            {"test_samples", result.test_confusion.total()},
                            {"confusion", train::to_json(result.test_confusion)},
                            {"class_names", class_names_json()}};
  if (!result.histories.back().empty()) {
    metrics["final_train_accuracy"] = result.histories.back().back().train_accuracy;
    metrics["final_train_loss"] = result.histories.back().back().loss;
  }
  write_json(out_dir / "history.json", history);
  write_json(out_dir / "metrics.json", metrics);
  write_json(out_dir / "report.json", {{"config", to_json(config)}, {"history", history}, {"metrics", metrics}});
  write_text(out_dir / "confusion.csv", train::confusion_csv(result.test_confusion, class_names_vec()));
  char line[160];
  std::snprintf(line, sizeof(line), "test accuracy %.4f  UF1 %.4f  UAR %.4f  (%lld held-out samples)\n",
                result.test_metrics.accuracy, result.test_metrics.uf1, result.test_metrics.uar,
                static_cast<long long>(result.test_confusion.total()));
  out << line;
  return 0;
}

template <typename T>
int do_eval(const fs::path& checkpoint, const model::ModelConfig& config, const std::string& manifest,
            const fs::path& out_dir, std::ostream& out) {
  model::DbfemNetwork<T> net(config);
  model::load_checkpoint(checkpoint, net);
  const auto dataset = load_dataset(manifest, config, out);
  const auto cm = train::evaluate(net, dataset);
  const auto m = train::metrics_from(cm);
  write_json(out_dir / "metrics.json", {{"checkpoint", checkpoint.generic_string()},
                                        {"samples", dataset.size()},
                                        {"metrics", train::to_json(m)},
                                        {"confusion", train::to_json(cm)},
                                        {"class_names", class_names_json()}});
  write_text(out_dir / "confusion.csv", train::confusion_csv(cm, class_names_vec()));
  char line[128];
  std::snprintf(line, sizeof(line), "accuracy %.4f  UF1 %.4f  UAR %.4f\n", m.accuracy, m.uf1, m.uar);
  out << line;
  return 0;
}

template <typename T>
int do_ablate(train::Suite suite, const RunConfig& config, const data::PreparedDataset& dataset,
              const train::AblationOptions& options, const fs::path& out_dir, std::ostream& out) {
  const auto rows = train::run_ablation<T>(suite, config.model, config.train, dataset, options,
                                           [&out](const train::AblationRow& r) {
                                             char line[160];
                                             std::snprintf(line, sizeof(line),
                                                           "%-16s acc %.4f  UF1 %.4f  UAR %.4f  fps %.1f\n",
                                                           r.variant.c_str(), r.metrics.accuracy, r.metrics.uf1,
                                                           r.metrics.uar, r.fps);
                                             out << line << std::flush;
                                           });
  write_text(out_dir / "ablation.csv", train::ablation_csv(rows));
  write_json(out_dir / "ablation.json", train::ablation_json(suite, rows, config.train));
  return 0;
}

template <typename T>
nlohmann::json do_bench(const model::ModelConfig& base, const std::vector<model::Variant>& variants, int warmup,
                        int iters, std::uint64_t seed, std::ostream& out) {
  nlohmann::json rows = nlohmann::json::array();
  char line[160];
  std::snprintf(line, sizeof(line), "%-16s %12s %14s %10s\n", "variant", "params", "macs", "fps");
  out << line;
  for (auto v : variants) {
    const auto config = base.with_variant(v);
    const auto net = train::make_model<T>(config, seed);
    const auto r = train::fps_benchmark(net, warmup, iters);
    const auto params = model::param_count(config);
    const auto macs = model::flops_estimate(config);
    std::snprintf(line, sizeof(line), "%-16s %12lld %14llu %10.1f\n", model::label(v), static_cast<long long>(params),
                  static_cast<unsigned long long>(macs), r.fps);
    out << line << std::flush;
    rows.push_back({{"variant", model::label(v)}, {"params", params}, {"macs", macs}, {"fps", r.fps},
                    {"median_seconds", r.median_seconds}, {"iters", iters}});
  }
  return rows;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-branch micro-expression recognition: data synthesis, training, evaluation, ablation"};
  app.name("mer");
  app.require_subcommand(1);

  struct {
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string out;
    int channels = 1;
    int subjects = 10;
  } synth;
  auto* synth_cmd = app.add_subcommand("synth", "write a seeded synthetic dataset (manifest + PGM/PPM images)");
  synth_cmd->add_option("--n", synth.n, "number of samples")->required()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth.seed, "generator seed");
  synth_cmd->add_option("--out", synth.out, "output directory")->required();
  synth_cmd->add_option("--channels", synth.channels, "1 (PGM) or 3 (PPM)")->check(CLI::IsMember({1, 3}));
  synth_cmd->add_option("--subjects", synth.subjects, "number of synthetic subjects")->check(CLI::PositiveNumber);

  TrainOptions train_opts;
  auto* train_cmd = app.add_subcommand("train", "train one variant and evaluate it on the held-out split");
  add_train_options(train_cmd, train_opts);

  struct {
    std::string checkpoint, data, out;
  } eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on every sample of a manifest");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval.data, "dataset manifest (.jsonl)")->required();
  eval_cmd->add_option("--out", eval.out, "output directory")->required();

  TrainOptions ablate_opts;
  std::string suite_name;
  train::AblationOptions ablation;
  auto* ablate_cmd = app.add_subcommand("ablate", "run the depth (table5) or feature-module (table7) ablation");
  add_train_options(ablate_cmd, ablate_opts);
  ablate_cmd->add_option("--suite", suite_name, "table5 or table7")->required()->check(CLI::IsMember({"table5", "table7"}));
  ablate_cmd->add_option("--fps-iters", ablation.fps_iters, "timed forwards per row; 0 skips timing (fps = 0)")
      ->check(CLI::NonNegativeNumber);
  ablate_cmd->add_option("--fps-warmup", ablation.fps_warmup, "untimed warmup forwards")->check(CLI::NonNegativeNumber);

  struct {
    std::string config, out, precision = "single";
    std::vector<std::string> variants;
    int iters = 30, warmup = 5;
    std::uint64_t seed = 0;
  } bench;
  auto* bench_cmd = app.add_subcommand("bench", "batch-1 inference speed, parameters and MACs per variant");
  bench_cmd->add_option("--config", bench.config, "JSON run config")->check(CLI::ExistingFile);
  bench_cmd->add_option("--variants", bench.variants, "variants to time (default: all six)");
  bench_cmd->add_option("--iters", bench.iters, "timed forwards (>= 10)")->check(CLI::Range(10, 1000000));
  bench_cmd->add_option("--warmup", bench.warmup, "untimed warmup forwards")->check(CLI::NonNegativeNumber);
  bench_cmd->add_option("--precision", bench.precision, "single or double")->check(CLI::IsMember({"single", "double"}));
  bench_cmd->add_option("--seed", bench.seed, "initialization seed");
  bench_cmd->add_option("--out", bench.out, "optional output directory for bench.json");

  struct {
    int points = 10;
    std::uint64_t seed = 1;
    std::string fault;
    double fault_factor = 1.5;
    std::string filter;
  } grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every op, block and network (double)");
  grad_cmd->add_option("--points", grad.points, "random points per check")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--seed", grad.seed, "first point seed");
  grad_cmd->add_option("--filter", grad.filter, "only run checks whose name contains this text");
  grad_cmd->add_option("--inject-fault", grad.fault, "corrupt the backward of this op (negative control)");
  grad_cmd->add_option("--fault-factor", grad.fault_factor, "gradient scale applied by --inject-fault");

  std::vector<std::string> argv_store{"mer"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (synth_cmd->parsed()) {
      data::SynthConfig sc;
      sc.channels = synth.channels;
      sc.num_subjects = synth.subjects;
      prepare_out_dir(synth.out);
      const auto frames = data::synth_frames(synth.n, synth.seed, sc);
      const auto manifest = data::write_synthetic(synth.out, frames);
      nlohmann::json resolved = {{"schema_version", kSchemaVersion},
                                 {"command", "synth"},
                                 {"n", synth.n},
                                 {"seed", synth.seed},
                                 {"channels", synth.channels},
                                 {"subjects", synth.subjects},
                                 {"height", sc.height},
                                 {"width", sc.width}};
      write_json(fs::path(synth.out) / "config.resolved", resolved);
      std::vector<int> per_class(data::kNumEmotions, 0);
      for (const auto& f : frames) ++per_class[static_cast<std::size_t>(data::merge_label(f.record.raw_label))];
      out << "wrote " << frames.size() << " samples to " << manifest.string() << " (per class:";
      for (int c : per_class) out << ' ' << c;
      out << ")\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      const RunConfig config = resolve(train_opts);
      const auto dataset = load_dataset(train_opts.data, config.model, out);
      prepare_out_dir(train_opts.out);
      write_json(fs::path(train_opts.out) / "config.resolved", to_json(config));
      out << "training " << model::label(config.model.variant) << " for " << config.train.epochs << " epochs ("
          << train::to_string(config.train.precision) << ", " << train::to_string(config.train.split) << ", seed "
          << config.train.seed << ")\n";
      return config.train.precision == train::Precision::double_precision
                 ? do_train<double>(config, dataset, train_opts.out, out)
                 : do_train<float>(config, dataset, train_opts.out, out);
    }

    if (eval_cmd->parsed()) {
      const auto header = model::read_checkpoint_header(eval.checkpoint);
      prepare_out_dir(eval.out);
      write_json(fs::path(eval.out) / "config.resolved",
                 {{"schema_version", kSchemaVersion},
                  {"command", "eval"},
                  {"checkpoint", eval.checkpoint},
                  {"data", eval.data},
                  {"model", model::to_json(header.config)}});
      return header.scalar_bytes == 8 ? do_eval<double>(eval.checkpoint, header.config, eval.data, eval.out, out)
                                      : do_eval<float>(eval.checkpoint, header.config, eval.data, eval.out, out);
    }

    if (ablate_cmd->parsed()) {
      const RunConfig config = resolve(ablate_opts);
      const auto suite = train::parse_suite(suite_name);
      const auto dataset = load_dataset(ablate_opts.data, config.model, out);
      prepare_out_dir(ablate_opts.out);
      nlohmann::json resolved = to_json(config);
      resolved["suite"] = suite_name;
      resolved["fps_iters"] = ablation.fps_iters;
      resolved["fps_warmup"] = ablation.fps_warmup;
      write_json(fs::path(ablate_opts.out) / "config.resolved", resolved);
      if (ablation.fps_iters > 0 && ablation.fps_iters < 10) {
        throw std::invalid_argument("--fps-iters must be 0 or at least 10");
      }
      return config.train.precision == train::Precision::double_precision
                 ? do_ablate<double>(suite, config, dataset, ablation, ablate_opts.out, out)
                 : do_ablate<float>(suite, config, dataset, ablation, ablate_opts.out, out);
    }

    if (bench_cmd->parsed()) {
      const RunConfig config = bench.config.empty() ? RunConfig{} : load_run_config(bench.config);
      std::vector<model::Variant> variants;
      for (const auto& v : bench.variants) variants.push_back(model::parse_variant(v));
      if (variants.empty()) variants.assign(model::kAllVariants.begin(), model::kAllVariants.end());
      const auto rows = bench.precision == "double"
                            ? do_bench<double>(config.model, variants, bench.warmup, bench.iters, bench.seed, out)
                            : do_bench<float>(config.model, variants, bench.warmup, bench.iters, bench.seed, out);
      if (!bench.out.empty()) {
        prepare_out_dir(bench.out);
        write_json(fs::path(bench.out) / "config.resolved", to_json(config));
        write_json(fs::path(bench.out) / "bench.json", {{"precision", bench.precision}, {"rows", rows}});
      }
      return 0;
    }

    if (grad_cmd->parsed()) {
      std::vector<GradientCase> cases;
      for (auto& c : gradient_cases()) {
        if (grad.filter.empty() || c.name.find(grad.filter) != std::string::npos) cases.push_back(std::move(c));
      }
      if (cases.empty()) throw std::invalid_argument("no gradient check matches '" + grad.filter + "'");
      std::optional<BackwardFaultGuard> fault;
      if (!grad.fault.empty()) {
        fault.emplace(grad.fault, grad.fault_factor);
        out << "injecting fault: backward of '" << grad.fault << "' scaled by " << grad.fault_factor << "\n";
      }
      char line[160];
      std::snprintf(line, sizeof(line), "%-26s %-6s %12s %8s %8s  %s\n", "check", "kind", "max rel err", "coords",
                    "seconds", "result");
      out << line;
      const auto results = run_gradient_suite(cases, grad.points, grad.seed, [&](const GradientResult& r) {
        std::snprintf(line, sizeof(line), "%-26s %-6s %12.3e %8zu %8.2f  %s\n", r.name.c_str(), r.kind.c_str(),
                      r.max_rel_error, r.coordinates, r.seconds, r.passed ? "pass" : "FAIL");
        out << line << std::flush;
      });
      const GradientResult* worst = &results.front();
      int failures = 0;
      for (const auto& r : results) {
        if (!r.passed) ++failures;
        if (r.max_rel_error > worst->max_rel_error) worst = &r;
      }
      if (failures == 0) {
        out << "all " << results.size() << " checks passed (tolerance " << kGradientTolerance << ")\n";
        return 0;
      }
      std::snprintf(line, sizeof(line), "%d of %zu checks failed; worst: %s with relative error %.3e\n", failures,
                    results.size(), worst->name.c_str(), worst->max_rel_error);
      err << line;
      return 1;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace mer::cli
