#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "greskit/ablation.hpp"
#include "greskit/checkpoint.hpp"
#include "greskit/evaluator.hpp"
#include "greskit/generator.hpp"
#include "greskit/trainer.hpp"

namespace gk = greskit;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  bool seed_set = false;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_config = true) {
  auto* c = cmd->add_option("--config", args.config_path, "JSON run configuration");
  if (needs_config) c->required();
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "override the config seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
}

gk::RunConfig load_run_config(const CommonArgs& args) {
  gk::RunConfig cfg = gk::load_config(args.config_path);
  if (args.seed_set) {
    cfg.seed = args.seed;
    cfg.gen.seed = args.seed;
  }
  return cfg;
}

// Model extents and vocabulary come from the dataset; the config only sets
// architecture knobs.
gk::ModelConfig resolve_model(const gk::RunConfig& cfg, const gk::Dataset& ds,
                              const gk::Vocab& vocab) {
  gk::ModelConfig m = cfg.model;
  m.categories = ds.meta.categories;
  m.grid_h = ds.meta.grid_h;
  m.grid_w = ds.meta.grid_w;
  m.text_vocab = vocab.size();
  m.validate();
  return m;
}

struct LoadedData {
  gk::Dataset dataset;
  gk::Vocab vocab;
};

LoadedData load_data(const gk::RunConfig& cfg) {
  std::string ds_path = cfg.data_path + "/dataset.json";
  gk::Dataset ds = gk::load_dataset(ds_path);
  gk::Vocab vocab = gk::load_vocab(gk::vocab_path_for(ds_path, ds.meta));
  return {std::move(ds), std::move(vocab)};
}

int cmd_gen_data(const CommonArgs& args) {
  gk::RunConfig cfg = load_run_config(args);
  gk::Dataset ds = gk::generate_dataset(cfg.gen);
  gk::Vocab vocab = gk::Vocab::from_tokens(gk::builtin_vocab_tokens());
  std::string dir = args.out_dir == "out" ? cfg.data_path : args.out_dir;
  gk::save_dataset(ds, vocab, dir);
  std::printf("wrote %zu samples to %s/dataset.json\n", ds.samples.size(), dir.c_str());
  return 0;
}

int cmd_train(const CommonArgs& args) {
  gk::RunConfig cfg = load_run_config(args);
  LoadedData data = load_data(cfg);
  gk::ModelConfig mcfg = resolve_model(cfg, data.dataset, data.vocab);
  gk::TrainResult tr = gk::train_model(mcfg, cfg.loss, cfg.optim, data.dataset, cfg.seed);
  std::filesystem::create_directories(args.out_dir);
  gk::write_text_file(args.out_dir + "/train_log.jsonl", gk::log_to_jsonl(tr.log));
  gk::save_checkpoint(tr.params, mcfg, args.out_dir + "/checkpoint.bin");
  double final_loss = tr.log.empty() ? 0.0 : tr.log.back().loss;
  std::printf("trained %d steps, final loss %.6f, checkpoint at %s/checkpoint.bin\n",
              cfg.optim.steps, final_loss, args.out_dir.c_str());
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint_path) {
  gk::RunConfig cfg = load_run_config(args);
  LoadedData data = load_data(cfg);
  gk::Checkpoint ck = gk::load_checkpoint(checkpoint_path);
  gk::EvalOutput ev = gk::evaluate_model(ck.store, ck.model, data.dataset);
  std::filesystem::create_directories(args.out_dir);
  gk::write_text_file(args.out_dir + "/report.json", gk::report_to_json(ev.report) + "\n");
  gk::write_text_file(args.out_dir + "/predictions.jsonl",
                      gk::predictions_to_jsonl(data.dataset, ev.records, ev.predictions));
  std::printf("%s\n", gk::report_to_json(ev.report).c_str());
  return 0;
}

int cmd_ablate(const CommonArgs& args) {
  gk::RunConfig cfg = load_run_config(args);
  LoadedData data = load_data(cfg);
  gk::ModelConfig mcfg = resolve_model(cfg, data.dataset, data.vocab);
  std::vector<std::string> axes =
      cfg.ablate_axes.empty() ? gk::known_ablation_axes() : cfg.ablate_axes;
  gk::AblationTable table =
      gk::run_ablation(mcfg, cfg.loss, cfg.optim, data.dataset, cfg.seed, axes);
  std::filesystem::create_directories(args.out_dir);
  gk::write_text_file(args.out_dir + "/ablation.json", gk::ablation_to_json(table));
  std::string text = gk::ablation_to_text(table);
  gk::write_text_file(args.out_dir + "/ablation.txt", text);
  for (const auto& row : table.rows) {
    // Diagnostic dump per variant: alphas/gates feed the flag-isolation checks.
    std::string body;
    for (const auto& p : row.predictions) {
      body += "{\"pred_empty\": ";
      body += p.pred_empty ? "true" : "false";
      body += ", \"alphas\": [";
      char buf[40];
      for (std::size_t i = 0; i < p.alphas.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", p.alphas[i]);
        if (i) body += ", ";
        body += buf;
      }
      body += "]}\n";
    }
    gk::write_text_file(args.out_dir + "/diagnostics_" + row.variant + ".jsonl", body);
  }
  std::printf("%s", text.c_str());
  return 0;
}

int cmd_metrics(const CommonArgs& args, const std::string& predictions_path) {
  std::string body = gk::read_text_file(predictions_path);
  std::vector<gk::EvalRecord> records;
  std::size_t start = 0;
  while (start < body.size()) {
    std::size_t end = body.find('\n', start);
    if (end == std::string::npos) end = body.size();
    std::string line = body.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    gk::json j;
    try {
      j = gk::json::parse(line);
    } catch (const gk::json::exception& e) {
      throw gk::FormatError(std::string("metrics: bad prediction line: ") + e.what());
    }
    gk::EvalRecord r;
    r.image_id = j.at("image_id").get<int>();
    r.pred_empty = j.at("pred_empty").get<bool>();
    r.gt_empty = j.at("gt_empty").get<bool>();
    r.inter = j.at("inter").get<long long>();
    r.uni = j.at("union").get<long long>();
    r.iou = j.at("iou").get<double>();
    r.pred_counts = j.at("pred_counts").get<std::vector<double>>();
    r.gt_counts = j.at("gt_counts").get<std::vector<int>>();
    r.polarity = gk::polarity_from(j.at("polarity").get<std::string>());
    records.push_back(std::move(r));
  }
  gk::MetricReport report = gk::compute_report(records);
  std::filesystem::create_directories(args.out_dir);
  gk::write_text_file(args.out_dir + "/report.json", gk::report_to_json(report) + "\n");
  std::printf("%s\n", gk::report_to_json(report).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"greskit: generalized referring expression segmentation toolkit"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, ablate_args, metrics_args;
  std::string checkpoint_path = "out/checkpoint.bin";
  std::string predictions_path;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_common(gen, gen_args);
  auto* train = app.add_subcommand("train", "train a model");
  add_common(train, train_args);
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, eval_args);
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint file");
  auto* ablate = app.add_subcommand("ablate", "run the ablation matrix");
  add_common(ablate, ablate_args);
  auto* metrics = app.add_subcommand("metrics", "recompute metrics from a prediction dump");
  add_common(metrics, metrics_args, /*needs_config=*/false);
  metrics->add_option("--predictions", predictions_path, "predictions.jsonl path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_args);
    if (train->parsed()) return cmd_train(train_args);
    if (eval->parsed()) return cmd_eval(eval_args, checkpoint_path);
    if (ablate->parsed()) return cmd_ablate(ablate_args);
    if (metrics->parsed()) return cmd_metrics(metrics_args, predictions_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
