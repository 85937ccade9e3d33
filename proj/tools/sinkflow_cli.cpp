#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sinkflow/baselines.hpp"
#include "sinkflow/dataio.hpp"
#include "sinkflow/eval.hpp"
#include "sinkflow/jsonio.hpp"
#include "sinkflow/model.hpp"
#include "sinkflow/sankey.hpp"
#include "sinkflow/sinkhorn.hpp"
#include "sinkflow/types.hpp"

using namespace sinkflow;

namespace {

// Flags override config-file values override built-in defaults. The config
// file is read before CLI11 parses, so it only has to seed the variables.
nlohmann::json preload_config(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return parse_json_file(argv[i + 1]);
    if (arg.rfind("--config=", 0) == 0) return parse_json_file(arg.substr(9));
  }
  return nullptr;
}

template <typename T>
void seed_from(const nlohmann::json& cfg, const char* key, T& value) {
  if (cfg.is_object() && cfg.contains(key)) {
    try {
      value = cfg.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  }
}

struct Opts {
  std::string config_path;
  std::string input;
  std::string output;
  std::string trace_path;
  std::string model_path;
  std::string svg_path;
  bool align_labels = false;
  int k = 4;
  int trials = 50;
  int epochs = 1200;
  int hidden = 0;  // 0 = 4 k^2
  int train_len = 0;
  int val_len = 10;
  int test_len = 20;
  int anchor = -1;
  int given = 0;
  int horizon = 0;
  uint64_t seed = 1;
  std::vector<uint64_t> seeds = {1, 2, 3};
  std::vector<std::string> methods = {"identity", "avg", "lr", "mlp", "sinkflow"};
  std::vector<double> loss_mix_grid = {0.0, 0.25, 0.5, 0.75, 1.0};
  double loss_mix = 0.5;
  double learning_rate = 2e-3;
  double momentum = 0.9;
  int sinkhorn_iters = 100;
  double sinkhorn_tol = 1e-6;
  int backward_iters = 1000;
  double backward_tol = 1e-9;
  bool log_domain = false;
  double fd_step = 1e-5;
};

SinkhornConfig sinkhorn_from(const Opts& o) {
  SinkhornConfig cfg;
  cfg.max_iters = o.sinkhorn_iters;
  cfg.tol = o.sinkhorn_tol;
  cfg.backward_max_iters = o.backward_iters;
  cfg.backward_tol = o.backward_tol;
  cfg.log_domain = o.log_domain;
  return cfg;
}

nlohmann::json sinkhorn_echo(const SinkhornConfig& cfg) {
  return {{"max_iters", cfg.max_iters},
          {"tol", cfg.tol},
          {"backward_max_iters", cfg.backward_max_iters},
          {"backward_tol", cfg.backward_tol},
          {"log_domain", cfg.log_domain}};
}

void add_sinkhorn_flags(CLI::App* cmd, Opts& o) {
  cmd->add_option("--sinkhorn-iters", o.sinkhorn_iters, "forward sweep cap");
  cmd->add_option("--sinkhorn-tol", o.sinkhorn_tol, "forward residual tolerance");
  cmd->add_option("--backward-iters", o.backward_iters, "backward sweep cap");
  cmd->add_option("--backward-tol", o.backward_tol, "backward residual tolerance");
  cmd->add_flag("--log-domain", o.log_domain, "run the forward pass in log space");
}

int cmd_ingest(const Opts& o) {
  IngestResult r = ingest(o.input);
  FactionTimeline tl = o.align_labels ? align_labels_greedy(r.timeline) : r.timeline;
  auto [marginals, plans] = build_marginals_and_plans(tl);
  nlohmann::json remap = nlohmann::json::object();
  for (const auto& [orig, dense] : r.faction_remap) remap[std::to_string(orig)] = dense;
  nlohmann::json echo = {{"command", "ingest"},
                         {"input", o.input},
                         {"align_labels", o.align_labels},
                         {"T", tl.T},
                         {"N", tl.N},
                         {"k", tl.k},
                         {"faction_remap", remap}};
  save_series(o.output, tl.k, marginals, plans, echo);
  std::printf("ingested %s: T=%d N=%d k=%d (%zu plans) -> %s\n", o.input.c_str(), tl.T,
              tl.N, tl.k, plans.size(), o.output.c_str());
  return 0;
}

int cmd_synth(const Opts& o, const nlohmann::json& cfg, bool seed_given) {
  if (!cfg.is_object() || !cfg.contains("kernel"))
    throw ConfigError("synth: --config must point to a generator spec with a kernel");
  SyntheticSpec spec = SyntheticSpec::from_json(cfg);
  if (seed_given) spec.seed = o.seed;
  FactionTimeline tl = generate_synthetic(spec);
  write_timeline(o.output, tl);
  nlohmann::json meta = {{"command", "synth"}, {"spec", spec.to_json()}};
  atomic_write_text(o.output + ".meta.json", canonical_dump(meta));
  std::printf("synthesized T=%d N=%d k=%d -> %s\n", tl.T, tl.N, tl.k, o.output.c_str());
  return 0;
}

int cmd_train(const Opts& o) {
  IngestResult r = ingest(o.input);
  auto [marginals, plans] = build_marginals_and_plans(r.timeline);
  const int k = r.timeline.k;
  int t_end = o.train_len > 0 ? o.train_len : static_cast<int>(plans.size());
  if (t_end > static_cast<int>(plans.size()))
    throw ConfigError("train: --train-len " + std::to_string(o.train_len) +
                      " exceeds the " + std::to_string(plans.size()) +
                      " available plans");
  std::vector<TrainSample> dataset = build_samples(marginals, plans, 2, t_end);

  LossConfig loss_cfg;
  loss_cfg.loss_mix = o.loss_mix;
  loss_cfg.learning_rate = o.learning_rate;
  loss_cfg.epochs = o.epochs;
  loss_cfg.momentum = o.momentum;
  SinkhornConfig sink_cfg = sinkhorn_from(o);
  const int hidden = o.hidden > 0 ? o.hidden : 4 * k * k;
  FeedForwardNet init = make_net(3 * k + 2 * k * k, {hidden}, k * k, o.seed);
  TrainResult result = train(dataset, init, loss_cfg, sink_cfg);

  nlohmann::json echo = {{"command", "train"},
                         {"input", o.input},
                         {"k", k},
                         {"train_anchors", {2, t_end}},
                         {"hidden", hidden},
                         {"seed", o.seed},
                         {"loss_mix", o.loss_mix},
                         {"learning_rate", o.learning_rate},
                         {"momentum", o.momentum},
                         {"epochs", o.epochs},
                         {"sinkhorn", sinkhorn_echo(sink_cfg)}};
  ModelCheckpoint ckpt;
  ckpt.net = std::move(result.params);
  ckpt.loss_cfg = loss_cfg;
  ckpt.sink_cfg = sink_cfg;
  ckpt.config = echo;
  save_model(o.output, ckpt);
  if (!o.trace_path.empty()) {
    nlohmann::json trace = {{"loss_trace", result.loss_trace}, {"config", echo}};
    atomic_write_text(o.trace_path, canonical_dump(trace));
  }
  double final_loss = result.loss_trace.empty() ? 0.0 : result.loss_trace.back();
  std::printf("trained %d epochs on %zu samples (final batch loss %.6g) -> %s\n",
              o.epochs, dataset.size(), final_loss, o.output.c_str());
  return 0;
}

int cmd_eval(const Opts& o) {
  IngestResult r = ingest(o.input);
  ExperimentConfig cfg;
  cfg.split = {o.train_len > 0 ? o.train_len : 130, o.val_len, o.test_len};
  cfg.methods = o.methods;
  cfg.loss_mix_grid = o.loss_mix_grid;
  cfg.seeds = o.seeds;
  cfg.hidden = o.hidden;
  cfg.learning_rate = o.learning_rate;
  cfg.momentum = o.momentum;
  cfg.epochs = o.epochs;
  cfg.sinkhorn = sinkhorn_from(o);
  if (o.horizon > 0) cfg.horizons.push_back(o.horizon);
  EvalReport report = run_experiment(r.timeline, cfg);
  nlohmann::json j = report.to_json();
  j["config"]["command"] = "eval";
  j["config"]["input"] = o.input;
  std::string text = canonical_dump(j);
  if (o.output.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    atomic_write_text(o.output, text);
    for (const MethodResult& m : report.methods)
      std::printf("%-10s %s flow_cost_mean=%.6g\n", m.method.c_str(),
                  m.ok ? "ok  " : "FAIL", m.ok ? m.flow_cost_mean : 0.0);
    std::printf("report -> %s\n", o.output.c_str());
  }
  return 0;
}

// Anchors usable from a stored series: t needs plans t-1 and t-2 behind it,
// and the marginal at t; the last anchor forecasts past the series end.
std::vector<int> predictable_anchors(const SeriesData& data) {
  std::vector<int> anchors;
  for (int t = 2; t <= static_cast<int>(data.plans.size()); ++t) anchors.push_back(t);
  if (anchors.empty())
    throw InvalidInputError("the series is too short for lag-3 prediction");
  return anchors;
}

int cmd_predict(const Opts& o, bool sinkhorn_given) {
  SeriesData data = load_series(o.input);
  ModelCheckpoint ckpt = load_model(o.model_path);
  SinkhornConfig sink_cfg = sinkhorn_given ? sinkhorn_from(o) : ckpt.sink_cfg;
  nlohmann::json plans_out = nlohmann::json::array();
  std::vector<int> anchors = predictable_anchors(data);
  for (int t : anchors) {
    ModelInput input = make_model_input(data.marginals, data.plans, t);
    PlanPrediction pred = predict_plan(input, ckpt.net, sink_cfg);
    nlohmann::json block = nlohmann::json::array();
    for (int i = 0; i < data.k; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < data.k; ++c) row.push_back(pred.plan(i, c));
      block.push_back(std::move(row));
    }
    plans_out.push_back(std::move(block));
  }
  nlohmann::json out = {{"command", "predict"},
                        {"input", o.input},
                        {"model", o.model_path},
                        {"k", data.k},
                        {"anchors", anchors},
                        {"plans", plans_out},
                        {"sinkhorn", sinkhorn_echo(sink_cfg)}};
  atomic_write_text(o.output, canonical_dump(out));
  std::printf("predicted %zu plans -> %s\n", anchors.size(), o.output.c_str());
  return 0;
}

int cmd_rollout(const Opts& o, bool sinkhorn_given) {
  SeriesData data = load_series(o.input);
  ModelCheckpoint ckpt = load_model(o.model_path);
  SinkhornConfig sink_cfg = sinkhorn_given ? sinkhorn_from(o) : ckpt.sink_cfg;
  const int anchor = o.anchor >= 0 ? o.anchor : static_cast<int>(data.plans.size());
  ModelInput input = make_model_input(data.marginals, data.plans, anchor);
  std::vector<Matrix> plans = rollout(input, ckpt.net, o.horizon, sink_cfg);

  nlohmann::json plans_out = nlohmann::json::array();
  nlohmann::json marginals_out = nlohmann::json::array();
  for (const Matrix& p : plans) {
    nlohmann::json block = nlohmann::json::array();
    std::vector<double> next(data.k, 0.0);
    for (int i = 0; i < data.k; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < data.k; ++c) {
        row.push_back(p(i, c));
        next[c] += p(i, c);
      }
      block.push_back(std::move(row));
    }
    plans_out.push_back(std::move(block));
    marginals_out.push_back(next);
  }
  nlohmann::json out = {{"command", "rollout"},
                        {"input", o.input},
                        {"model", o.model_path},
                        {"k", data.k},
                        {"anchor", anchor},
                        {"horizon", o.horizon},
                        {"plans", plans_out},
                        {"marginals", marginals_out},
                        {"sinkhorn", sinkhorn_echo(sink_cfg)}};
  atomic_write_text(o.output, canonical_dump(out));
  std::printf("rolled out %d steps from anchor %d -> %s\n", o.horizon, anchor,
              o.output.c_str());
  return 0;
}

int cmd_gradcheck(const Opts& o) {
  GradcheckConfig cfg;
  cfg.k = o.k;
  cfg.trials = o.trials;
  cfg.seed = o.seed;
  cfg.sinkhorn = sinkhorn_from(o);
  cfg.fd_step = o.fd_step;
  GradcheckReport report = gradcheck(cfg);
  if (!o.output.empty()) atomic_write_text(o.output, canonical_dump(report.to_json()));
  std::printf("gradcheck k=%d trials=%d: fd %.3e (<= %.0e) unrolled %.3e (<= %.0e) "
              "iter-ratio %.2f skipped %d -> %s\n",
              report.k, report.trials, report.max_rel_fd, report.fd_threshold,
              report.max_rel_unrolled, report.unrolled_threshold, report.max_iter_ratio,
              report.skipped, report.pass ? "PASS" : "FAIL");
  return report.pass ? 0 : 1;
}

int cmd_export_sankey(const Opts& o, bool sinkhorn_given) {
  SeriesData data = load_series(o.input);
  if (data.plans.empty())
    throw ConfigError("export-sankey: the series has no flows to draw");
  const int n = static_cast<int>(data.marginals.size());
  int given = o.given > 0 ? o.given : n;
  if (given < 1 || given > n)
    throw ConfigError("export-sankey: --given must be in [1, " + std::to_string(n) + "]");

  SankeyDocument doc;
  doc.k = data.k;
  doc.labels = default_faction_labels(data.k);
  doc.given_steps = given;
  doc.marginals.assign(data.marginals.begin(), data.marginals.begin() + given);
  doc.flows.assign(data.plans.begin(), data.plans.begin() + (given - 1));

  nlohmann::json echo = {{"command", "export-sankey"},
                         {"input", o.input},
                         {"given", given},
                         {"horizon", o.horizon}};
  if (o.horizon > 0) {
    if (o.model_path.empty())
      throw ConfigError("export-sankey: --horizon needs --model");
    ModelCheckpoint ckpt = load_model(o.model_path);
    // Predicted rows must satisfy the document's 1e-9 mass check, so the
    // default head tolerance here is tighter than the training default.
    SinkhornConfig sink_cfg = sinkhorn_given ? sinkhorn_from(o) : SinkhornConfig{};
    if (!sinkhorn_given) {
      sink_cfg.max_iters = 20000;
      sink_cfg.tol = 1e-12;
    }
    const int anchor = given - 1;
    ModelInput input = make_model_input(data.marginals, data.plans, anchor);
    std::vector<Matrix> predicted = rollout(input, ckpt.net, o.horizon, sink_cfg);
    for (const Matrix& p : predicted) {
      std::vector<double> next(data.k, 0.0);
      for (int i = 0; i < data.k; ++i)
        for (int c = 0; c < data.k; ++c) next[c] += p(i, c);
      doc.flows.push_back(p);
      doc.marginals.push_back(std::move(next));
    }
    echo["model"] = o.model_path;
    echo["sinkhorn"] = sinkhorn_echo(sink_cfg);
  }
  doc.validate();
  atomic_write_text(o.output, canonical_dump(doc.to_json()));
  if (!o.svg_path.empty()) atomic_write_text(o.svg_path, sankey_svg(doc, echo));
  std::printf("sankey document: %zu steps (%d given) -> %s\n", doc.marginals.size(),
              doc.given_steps, o.output.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Opts o;
  CLI::App app{"Sinkhorn-Flow: probability mass flow prediction between factions"};
  app.require_subcommand(1);

  try {
    nlohmann::json cfg = preload_config(argc, argv);
    seed_from(cfg, "input", o.input);
    seed_from(cfg, "output", o.output);
    seed_from(cfg, "trace", o.trace_path);
    seed_from(cfg, "model", o.model_path);
    seed_from(cfg, "svg", o.svg_path);
    seed_from(cfg, "align_labels", o.align_labels);
    seed_from(cfg, "k", o.k);
    seed_from(cfg, "trials", o.trials);
    seed_from(cfg, "epochs", o.epochs);
    seed_from(cfg, "hidden", o.hidden);
    seed_from(cfg, "train_len", o.train_len);
    seed_from(cfg, "val_len", o.val_len);
    seed_from(cfg, "test_len", o.test_len);
    seed_from(cfg, "anchor", o.anchor);
    seed_from(cfg, "given", o.given);
    seed_from(cfg, "horizon", o.horizon);
    seed_from(cfg, "seed", o.seed);
    seed_from(cfg, "seeds", o.seeds);
    seed_from(cfg, "methods", o.methods);
    seed_from(cfg, "loss_mix_grid", o.loss_mix_grid);
    seed_from(cfg, "loss_mix", o.loss_mix);
    seed_from(cfg, "learning_rate", o.learning_rate);
    seed_from(cfg, "momentum", o.momentum);
    seed_from(cfg, "sinkhorn_iters", o.sinkhorn_iters);
    seed_from(cfg, "sinkhorn_tol", o.sinkhorn_tol);
    seed_from(cfg, "backward_iters", o.backward_iters);
    seed_from(cfg, "backward_tol", o.backward_tol);
    seed_from(cfg, "log_domain", o.log_domain);
    seed_from(cfg, "fd_step", o.fd_step);

    auto* ingest_cmd = app.add_subcommand("ingest", "census CSV -> series JSON");
    ingest_cmd->add_option("--config", o.config_path, "JSON config file");
    ingest_cmd->add_option("--input", o.input, "census CSV")->required();
    ingest_cmd->add_option("--output", o.output, "series JSON")->required();
    ingest_cmd->add_flag("--align-labels", o.align_labels,
                         "greedily match labels across steps by co-membership");

    auto* synth_cmd = app.add_subcommand("synth", "generator spec -> census CSV");
    synth_cmd->add_option("--config", o.config_path, "generator spec JSON")->required();
    synth_cmd->add_option("--output", o.output, "census CSV")->required();
    synth_cmd->add_option("--seed", o.seed, "override the generator spec's seed");

    auto* train_cmd = app.add_subcommand("train", "census CSV -> model checkpoint");
    train_cmd->add_option("--config", o.config_path, "JSON config file");
    train_cmd->add_option("--input", o.input, "census CSV")->required();
    train_cmd->add_option("--output", o.output, "model checkpoint JSON")->required();
    train_cmd->add_option("--trace", o.trace_path, "loss trace JSON");
    train_cmd->add_option("--train-len", o.train_len, "plans used for training (0 = all)");
    train_cmd->add_option("--loss-mix", o.loss_mix, "flow vs marginal loss mix in [0, 1]");
    train_cmd->add_option("--epochs", o.epochs, "full-batch descent passes");
    train_cmd->add_option("--lr", o.learning_rate, "learning rate");
    train_cmd->add_option("--momentum", o.momentum, "momentum coefficient in [0, 1)");
    train_cmd->add_option("--hidden", o.hidden, "hidden width (0 = 4k^2)");
    train_cmd->add_option("--seed", o.seed, "init seed");
    add_sinkhorn_flags(train_cmd, o);

    auto* eval_cmd = app.add_subcommand("eval", "census CSV -> method comparison report");
    eval_cmd->add_option("--config", o.config_path, "JSON config file");
    eval_cmd->add_option("--input", o.input, "census CSV")->required();
    eval_cmd->add_option("--output", o.output, "report JSON (stdout when omitted)");
    eval_cmd->add_option("--method", o.methods, "methods to score");
    eval_cmd->add_option("--loss-mix", o.loss_mix_grid, "loss mix grid for selection");
    eval_cmd->add_option("--seed", o.seeds, "seed list for learned methods");
    eval_cmd->add_option("--epochs", o.epochs, "training epochs");
    eval_cmd->add_option("--lr", o.learning_rate, "learning rate");
    eval_cmd->add_option("--momentum", o.momentum, "momentum coefficient");
    eval_cmd->add_option("--hidden", o.hidden, "hidden width (0 = 4k^2)");
    eval_cmd->add_option("--train-len", o.train_len, "training plans");
    eval_cmd->add_option("--val-len", o.val_len, "validation plans");
    eval_cmd->add_option("--test-len", o.test_len, "test plans");
    eval_cmd->add_option("--horizon", o.horizon, "also report this cumulative horizon");
    add_sinkhorn_flags(eval_cmd, o);

    auto* predict_cmd = app.add_subcommand("predict", "series + model -> one-step plans");
    predict_cmd->add_option("--config", o.config_path, "JSON config file");
    predict_cmd->add_option("--input", o.input, "series JSON")->required();
    predict_cmd->add_option("--model", o.model_path, "model checkpoint")->required();
    predict_cmd->add_option("--output", o.output, "predictions JSON")->required();
    add_sinkhorn_flags(predict_cmd, o);

    auto* rollout_cmd = app.add_subcommand("rollout", "series + model -> multi-step forecast");
    rollout_cmd->add_option("--config", o.config_path, "JSON config file");
    rollout_cmd->add_option("--input", o.input, "series JSON")->required();
    rollout_cmd->add_option("--model", o.model_path, "model checkpoint")->required();
    rollout_cmd->add_option("--output", o.output, "forecast JSON")->required();
    rollout_cmd->add_option("--horizon", o.horizon, "steps to roll out")->required();
    rollout_cmd->add_option("--anchor", o.anchor, "anchor step (default: series end)");
    add_sinkhorn_flags(rollout_cmd, o);

    auto* gradcheck_cmd =
        app.add_subcommand("gradcheck", "compare the analytic backward pass to oracles");
    gradcheck_cmd->add_option("--config", o.config_path, "JSON config file");
    gradcheck_cmd->add_option("--k", o.k, "faction count");
    gradcheck_cmd->add_option("--trials", o.trials, "random trials")
        ->check(CLI::PositiveNumber);
    gradcheck_cmd->add_option("--seed", o.seed, "trial stream seed");
    gradcheck_cmd->add_option("--fd-step", o.fd_step, "finite difference step");
    gradcheck_cmd->add_option("--output", o.output, "report JSON");
    add_sinkhorn_flags(gradcheck_cmd, o);

    auto* sankey_cmd =
        app.add_subcommand("export-sankey", "series (+ model) -> flow document");
    sankey_cmd->add_option("--config", o.config_path, "JSON config file");
    sankey_cmd->add_option("--input", o.input, "series JSON")->required();
    sankey_cmd->add_option("--output", o.output, "document JSON")->required();
    sankey_cmd->add_option("--svg", o.svg_path, "also render a static SVG");
    sankey_cmd->add_option("--model", o.model_path, "model for the predicted tail");
    sankey_cmd->add_option("--horizon", o.horizon, "predicted steps to append");
    sankey_cmd->add_option("--given", o.given, "steps shown as history (0 = all)");
    add_sinkhorn_flags(sankey_cmd, o);

    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      std::fprintf(stderr, "usage error: %s\n", e.what());
      return 2;
    }

    // Gradcheck verifies a converged point, so without explicit flags it
    // tightens the solver instead of using the training defaults.
    if (gradcheck_cmd->parsed()) {
      if (gradcheck_cmd->count("--sinkhorn-iters") == 0 && !cfg.contains("sinkhorn_iters"))
        o.sinkhorn_iters = 20000;
      if (gradcheck_cmd->count("--sinkhorn-tol") == 0 && !cfg.contains("sinkhorn_tol"))
        o.sinkhorn_tol = 1e-12;
      if (gradcheck_cmd->count("--backward-iters") == 0 && !cfg.contains("backward_iters"))
        o.backward_iters = 20000;
      if (gradcheck_cmd->count("--backward-tol") == 0 && !cfg.contains("backward_tol"))
        o.backward_tol = 1e-12;
    }
    auto sinkhorn_given = [&](CLI::App* cmd) {
      return cmd->count("--sinkhorn-iters") || cmd->count("--sinkhorn-tol") ||
             cmd->count("--backward-iters") || cmd->count("--backward-tol") ||
             cmd->count("--log-domain") || cfg.contains("sinkhorn_tol") ||
             cfg.contains("sinkhorn_iters");
    };

    if (ingest_cmd->parsed()) return cmd_ingest(o);
    if (synth_cmd->parsed()) return cmd_synth(o, cfg, synth_cmd->count("--seed") > 0);
    if (train_cmd->parsed()) return cmd_train(o);
    if (eval_cmd->parsed()) return cmd_eval(o);
    if (predict_cmd->parsed()) return cmd_predict(o, sinkhorn_given(predict_cmd));
    if (rollout_cmd->parsed()) return cmd_rollout(o, sinkhorn_given(rollout_cmd));
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(o);
    if (sankey_cmd->parsed()) return cmd_export_sankey(o, sinkhorn_given(sankey_cmd));
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
