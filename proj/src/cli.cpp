#include "spegcl/cli.hpp"

#include "spegcl/augment.hpp"
#include "spegcl/errors.hpp"
#include "spegcl/evalsuite.hpp"
#include "spegcl/graph.hpp"
#include "spegcl/io.hpp"
#include "spegcl/spectral.hpp"
#include "spegcl/theory.hpp"
#include "spegcl/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>

namespace spegcl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Records flags the user actually passed so they can be layered over the
// config file.
class Overrides {
 public:
  explicit Overrides(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* add(const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app_->add_option(flag, *value, help);
    setters_.push_back([opt, value, key](json& j) {
      if (opt->count() > 0) j[key] = *value;
    });
    return opt;
  }

  CLI::Option* add_list(const std::string& flag, const std::string& key, const std::string& help) {
    return add<std::vector<int>>(flag, key, help)->delimiter(',');
  }

  void apply(json& j) const {
    for (const auto& s : setters_) s(j);
  }

 private:
  CLI::App* app_;
  std::vector<std::function<void(json&)>> setters_;
};

json dataset_defaults() {
  return json{{"dataset", "synth:sbm"}, {"name", ""},  {"graphs", 200},   {"nodes", 30},
              {"p0", 0.1},              {"p1", 0.3},   {"noise", 1.0},    {"data_seed", 1}};
}

void add_dataset_flags(Overrides& o) {
  o.add<std::string>("--dataset", "dataset", "synth:sbm or a TUDataset directory");
  o.add<std::string>("--name", "name", "TUDataset file prefix (defaults to the directory name)");
  o.add<int>("--graphs", "graphs", "synthetic: number of graphs");
  o.add<int>("--nodes", "nodes", "synthetic: nodes per graph");
  o.add<double>("--p0", "p0", "synthetic: edge probability of class 0");
  o.add<double>("--p1", "p1", "synthetic: edge probability of class 1");
  o.add<double>("--noise", "noise", "synthetic: feature noise scale");
  o.add<std::uint64_t>("--data-seed", "data_seed", "synthetic: generator seed");
}

void add_train_flags(Overrides& o) {
  o.add<int>("--epochs", "epochs", "training epochs");
  o.add<int>("--batch-size", "batch_size", "graphs per step");
  o.add<double>("--lr", "learning_rate", "Adam learning rate");
  o.add<double>("--beta1", "beta1", "Adam beta1");
  o.add<double>("--beta2", "beta2", "Adam beta2");
  o.add<double>("--adam-eps", "adam_eps", "Adam epsilon");
  o.add<std::uint64_t>("--seed", "seed", "training seed");
  o.add<double>("--omega-node", "omega_node", "node keep probability");
  o.add<double>("--omega-edge", "omega_edge", "edge keep probability");
  o.add<double>("--radius-ratio", "radius_ratio", "low-pass radius ratio");
  o.add<std::string>("--filters", "view_filters", "low_high | low_low | high_high");
  o.add<double>("--tau", "tau", "temperature");
  o.add<int>("--m-negatives", "m_negatives", "negatives per anchor");
  o.add<std::string>("--loss-mode", "loss_mode", "nce | neg_only | align_only");
  o.add<std::string>("--policy", "negative_policy", "cross_view | cross_and_in_view");
  o.add<bool>("--symmetrize", "symmetrize", "average both view directions");
  o.add<std::string>("--encoder", "encoder", "fourier | gcn | gin");
  o.add_list("--hidden-dims", "hidden_dims", "layer widths, comma separated");
  o.add<int>("--emb-dim", "emb_dim", "embedding dimension");
  o.add<int>("--checkpoint-every", "checkpoint_every", "epochs between checkpoints (0 = final only)");
  o.add<int>("--workers", "workers", "worker threads");
}

json train_subset(const json& merged) {
  const json keys = TrainConfig().to_json();
  json out = json::object();
  for (auto it = keys.begin(); it != keys.end(); ++it) {
    if (merged.contains(it.key())) out[it.key()] = merged[it.key()];
  }
  return out;
}

// defaults <- config file <- flags. Keys not in `defaults` are rejected.
json merge_config(json defaults, const std::string& config_path, const Overrides& o) {
  if (!config_path.empty()) {
    json file;
    try {
      file = json::parse(read_file(config_path));
    } catch (const json::exception& e) {
      throw ArgumentError("config file is not valid JSON: " + std::string(e.what()));
    } catch (const IngestError& e) {
      throw ArgumentError(e.what());
    }
    if (!file.is_object()) throw ArgumentError("config file must hold a JSON object");
    for (auto it = file.begin(); it != file.end(); ++it) {
      if (!defaults.contains(it.key())) throw ArgumentError("unknown config key: " + it.key());
      defaults[it.key()] = it.value();
    }
  }
  o.apply(defaults);
  return defaults;
}

template <typename T>
T cfg_get(const json& c, const char* key) {
  try {
    return c.at(key).get<T>();
  } catch (const json::exception&) {
    throw ArgumentError(std::string("bad value for config key: ") + key);
  }
}

Dataset load_dataset(const json& c) {
  const auto spec = cfg_get<std::string>(c, "dataset");
  if (spec.rfind("synth:", 0) == 0) {
    if (spec != "synth:sbm") throw ArgumentError("unknown synthetic dataset: " + spec);
    return make_synthetic_sbm(cfg_get<int>(c, "graphs"), cfg_get<int>(c, "nodes"), cfg_get<double>(c, "p0"),
                              cfg_get<double>(c, "p1"), cfg_get<double>(c, "noise"),
                              cfg_get<std::uint64_t>(c, "data_seed"));
  }
  fs::path root(spec);
  std::string name = cfg_get<std::string>(c, "name");
  if (name.empty()) {
    name = root.filename().string();
    if (name.empty()) name = root.parent_path().filename().string();
  }
  if (!fs::is_directory(root)) throw IngestError("dataset directory not found: " + spec);
  return load_tudataset(root, name);
}

std::string csv_row(std::initializer_list<std::string> cells) {
  std::string s;
  bool first = true;
  for (const auto& c : cells) {
    if (!first) s += ',';
    s += c;
    first = false;
  }
  return s + '\n';
}

std::string num(double x) { return format_double(x); }
std::string num(long x) { return std::to_string(x); }
std::string num(int x) { return std::to_string(x); }

std::string schema_line(const std::string& name) { return "# schema: spegcl." + name + "/1\n"; }

std::string grid_csv(const Eigen::MatrixXd& m) {
  std::string s = "# schema: spegcl.grid/1 rows=" + std::to_string(m.rows()) + " cols=" + std::to_string(m.cols()) + "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) s += ',';
      s += format_double(m(i, j));
    }
    s += '\n';
  }
  return s;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

class Run {
 public:
  Run(std::string command, const std::string& out_flag)
      : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {
    if (!out_flag.empty()) {
      dir_ = out_flag;
    } else if (const char* env = std::getenv("SPEGCL_OUT"); env && *env) {
      dir_ = fs::path(env) / command_;
    } else {
      dir_ = fs::path("runs") / command_;
    }
  }

  const fs::path& dir() const { return dir_; }

  fs::path write(const std::string& rel, const std::string& contents) {
    write_file(dir_ / rel, contents);
    outputs_.push_back(rel);
    return dir_ / rel;
  }

  void note_output(const std::string& rel) { outputs_.push_back(rel); }

  void finish(const json& config, const std::string& hash, std::uint64_t seed, json extra = json::object()) {
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    json m = {{"schema", "spegcl.manifest/1"},
              {"command", command_},
              {"tool_version", kToolVersion},
              {"config", config},
              {"config_hash", hash},
              {"seed", seed},
              {"outputs", outputs_},
              {"started_at", started_at_},
              {"wall_time_ms", ms}};
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    write_file(dir_ / "manifest.json", m.dump(2) + "\n");
  }

 private:
  std::string command_;
  fs::path dir_;
  std::vector<std::string> outputs_;
  std::chrono::steady_clock::time_point start_;
  std::string started_at_ = utc_now();
};

std::string history_csv(const std::vector<double>& losses) {
  std::string s = schema_line("history") + "epoch,mean_loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) s += csv_row({num(static_cast<int>(i + 1)), num(losses[i])});
  return s;
}

std::string folds_csv(const EvalReport& r) {
  std::string s = schema_line("folds") + "fold,test_accuracy,train_accuracy\n";
  for (std::size_t i = 0; i < r.fold_accuracies.size(); ++i) {
    s += csv_row({num(static_cast<int>(i)), num(r.fold_accuracies[i]), num(r.train_accuracies[i])});
  }
  return s;
}

// ---------------------------------------------------------------------------
// Commands

struct Common {
  std::string config_path;
  std::string out;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON config file; flags override its values");
  app->add_option("--out", c.out, "output directory (default $SPEGCL_OUT/<command> or runs/<command>)");
}

int cmd_train(const json& merged, const Common& common, const std::string& resume_path, std::ostream& out) {
  const TrainConfig cfg = TrainConfig::from_json(train_subset(merged));
  cfg.validate();
  const Dataset ds = load_dataset(merged);
  Run run("train", common.out);

  Checkpoint resumed;
  TrainOptions opts;
  if (!resume_path.empty()) {
    resumed = load_checkpoint(resume_path);
    opts.resume = &resumed;
  }
  std::vector<double> wall_ms;
  opts.on_epoch = [&](const EpochRecord& rec, const Checkpoint& ck) {
    wall_ms.push_back(rec.wall_ms);
    if (cfg.checkpoint_every > 0 && rec.epoch % cfg.checkpoint_every == 0 && rec.epoch < cfg.epochs) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoints/epoch_%04d.bin", rec.epoch);
      save_checkpoint(run.dir() / name, ck);
      run.note_output(name);
    }
  };
  const TrainResult result = train(ds, cfg, opts);
  save_checkpoint(run.dir() / "checkpoint.bin", result.checkpoint);
  run.note_output("checkpoint.bin");
  run.write("history.csv", history_csv(result.checkpoint.loss_history));
  json extra = {{"epoch_wall_ms", wall_ms}, {"dataset_name", ds.name}, {"num_graphs", ds.size()}};
  if (!resume_path.empty()) extra["resumed_from"] = resume_path;
  run.finish(merged, cfg.hash(), cfg.seed, extra);
  out << "train: " << result.checkpoint.epochs_completed << " epochs, final mean_loss "
      << format_double(result.checkpoint.loss_history.back()) << ", config " << cfg.hash() << ", output "
      << run.dir().string() << "\n";
  return kExitOk;
}

json eval_defaults() {
  json d = dataset_defaults();
  d.update(TrainConfig().to_json());
  d.update(json{{"checkpoint", ""},
                {"protocol", "probe"},
                {"label_rate", 0.1},
                {"k_folds", 10},
                {"fold_seed", 7},
                {"finetune_epochs", 30},
                {"finetune_lr", 1e-3},
                {"finetune_batch_size", 16}});
  return d;
}

int cmd_eval(const json& merged, const Common& common, std::ostream& out) {
  const TrainConfig cfg = TrainConfig::from_json(train_subset(merged));
  cfg.validate();
  const Dataset ds = load_dataset(merged);
  const auto ckpt_path = cfg_get<std::string>(merged, "checkpoint");
  const auto protocol = cfg_get<std::string>(merged, "protocol");
  const int k = cfg_get<int>(merged, "k_folds");
  const auto fold_seed = cfg_get<std::uint64_t>(merged, "fold_seed");
  if (protocol != "probe" && protocol != "semi") throw ArgumentError("protocol must be probe or semi");

  std::optional<Checkpoint> ckpt;
  if (!ckpt_path.empty()) ckpt = load_checkpoint(ckpt_path);
  Run run("eval", common.out);
  const std::string hash = fnv1a_hex(merged.dump());

  EvalReport rep;
  if (protocol == "probe") {
    EncoderParams params;
    if (ckpt) {
      params = ckpt->params;
    } else {
      std::vector<int> dims = {ds.feature_dim};
      dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
      params = init_params(dims, cfg.emb_dim, cfg.kind, substream(cfg.seed, {0x1417}));
    }
    if (params.layer_dims.front() != ds.feature_dim) {
      throw StateError("checkpoint input dim does not match dataset feature dim");
    }
    const Eigen::MatrixXd z = embed_dataset(ds, params);
    rep = linear_probe(z, ds.labels(), k, fold_seed, {}, cfg.workers);
    rep.details["mean_pairwise_similarity"] = mean_pairwise_similarity(z);
  } else {
    FinetuneConfig fc;
    fc.epochs = cfg_get<int>(merged, "finetune_epochs");
    fc.learning_rate = cfg_get<double>(merged, "finetune_lr");
    fc.batch_size = cfg_get<int>(merged, "finetune_batch_size");
    fc.k_folds = k;
    fc.fold_seed = fold_seed;
    fc.seed = cfg.seed;
    fc.workers = cfg.workers;
    fc.kind = cfg.kind;
    fc.hidden_dims = cfg.hidden_dims;
    fc.emb_dim = cfg.emb_dim;
    rep = semi_supervised_finetune(ds, ckpt ? &*ckpt : nullptr, cfg_get<double>(merged, "label_rate"), fc);
  }
  rep.details["encoder_source"] = ckpt ? "checkpoint" : "untrained";
  if (ckpt) rep.details["checkpoint_config_hash"] = ckpt->config_hash;
  rep.config_hash = hash;
  run.write("report.json", rep.to_json().dump(2) + "\n");
  run.write("folds.csv", folds_csv(rep));
  run.finish(merged, hash, cfg.seed);
  out << "eval[" << rep.mode << "]: accuracy " << format_double(rep.mean) << " +- " << format_double(rep.std)
      << " over " << k << " folds, output " << run.dir().string() << "\n";
  return kExitOk;
}

json ablate_defaults() {
  json d = dataset_defaults();
  d.update(TrainConfig().to_json());
  d.update(json{{"modes", {"pos_and_neg", "no_neg", "no_pos", "no_fouriergnn"}}, {"k_folds", 10}, {"fold_seed", 7}});
  return d;
}

int cmd_ablate(const json& merged, const Common& common, std::ostream& out) {
  const TrainConfig cfg = TrainConfig::from_json(train_subset(merged));
  cfg.validate();
  std::vector<AblationMode> modes;
  for (const auto& m : cfg_get<std::vector<std::string>>(merged, "modes")) modes.push_back(parse_ablation_mode(m));
  if (modes.empty()) throw ArgumentError("no ablation modes selected");
  const Dataset ds = load_dataset(merged);
  const int k = cfg_get<int>(merged, "k_folds");
  const auto fold_seed = cfg_get<std::uint64_t>(merged, "fold_seed");
  Run run("ablate", common.out);
  const std::string hash = fnv1a_hex(merged.dump());

  std::string table = schema_line("ablation") +
                      "mode,table_row,dataset,loss,encoder,mean,std,loss_first,loss_last,loss_reduction,"
                      "mean_pairwise_similarity\n";
  for (AblationMode m : modes) {
    AblationResult r = ablation_run(ds, m, cfg, k, fold_seed);
    r.report.details["train_config_hash"] = r.report.config_hash;
    r.report.config_hash = hash;
    const json& tc = r.report.details["train_config"];
    table += csv_row({to_string(m), table_row(m), ds.name, tc["loss_mode"].get<std::string>(),
                      tc["encoder"].get<std::string>(), num(r.report.mean), num(r.report.std),
                      num(r.loss_history.front()), num(r.loss_history.back()), num(r.loss_reduction),
                      num(r.mean_pairwise_similarity)});
    run.write("reports/" + to_string(m) + ".json", r.report.to_json().dump(2) + "\n");
    run.write("history/" + to_string(m) + ".csv", history_csv(r.loss_history));
    out << "ablate[" << to_string(m) << "]: accuracy " << format_double(r.report.mean) << ", loss reduction "
        << format_double(r.loss_reduction) << ", mean pairwise similarity "
        << format_double(r.mean_pairwise_similarity) << "\n";
  }
  run.write("ablation.csv", table);
  run.write("modes.json", ablation_mode_table().dump(2) + "\n");
  run.finish(merged, hash, cfg.seed);
  return kExitOk;
}

json inspect_defaults() {
  json d = dataset_defaults();
  d.update(json{{"graph_indices", {0}}, {"radius_ratio", 0.5}});
  return d;
}

int cmd_inspect(const json& merged, const Common& common, std::ostream& out) {
  const Dataset ds = load_dataset(merged);
  const auto ratio = cfg_get<double>(merged, "radius_ratio");
  if (!(ratio >= 0.0)) throw ArgumentError("radius_ratio must be non-negative");
  Run run("inspect-spectrum", common.out);
  for (int gi : cfg_get<std::vector<int>>(merged, "graph_indices")) {
    if (gi < 0 || gi >= ds.size()) throw ArgumentError("graph index out of range: " + std::to_string(gi));
    const Eigen::MatrixXd& x = ds.graphs[static_cast<std::size_t>(gi)].features;
    const std::string dir = "graph_" + std::to_string(gi) + "/";
    run.write(dir + "original.csv", grid_csv(x));
    run.write(dir + "low_pass.csv", grid_csv(low_pass_features(x, ratio)));
    run.write(dir + "high_pass.csv", grid_csv(high_pass_features(x, ratio)));
    run.write(dir + "magnitude_shifted.csv", grid_csv(amplitude_phase(fshift(dft2(x))).magnitude));
  }
  const std::string hash = fnv1a_hex(merged.dump());
  run.finish(merged, hash, cfg_get<std::uint64_t>(merged, "data_seed"));
  out << "inspect-spectrum: wrote grids to " << run.dir().string() << "\n";
  return kExitOk;
}

json gen_defaults() {
  json d = dataset_defaults();
  d.erase("dataset");
  d["name"] = "SYNTH_SBM";
  return d;
}

int cmd_gen_synth(const json& merged, const Common& common, std::ostream& out) {
  json c = merged;
  c["dataset"] = "synth:sbm";
  const Dataset ds = load_dataset(c);
  const auto name = cfg_get<std::string>(merged, "name");
  if (name.empty()) throw ArgumentError("name must be non-empty");
  Run run("gen-synth", common.out);
  write_tudataset(ds, run.dir() / name, name);
  for (const char* suffix : {"_A.txt", "_graph_indicator.txt", "_graph_labels.txt", "_node_attributes.txt"}) {
    run.note_output(name + "/" + name + suffix);
  }
  run.finish(merged, fnv1a_hex(merged.dump()), cfg_get<std::uint64_t>(merged, "data_seed"));
  out << "gen-synth: " << ds.size() << " graphs written to " << (run.dir() / name).string() << "\n";
  return kExitOk;
}

json theory_defaults() {
  const TheorySuiteConfig t;
  return json{{"seed", t.seed},
              {"taus", t.taus},
              {"prop1_draws", t.prop1_draws},
              {"m_values", t.m_values},
              {"two_point_trials", t.two_point_trials},
              {"sphere_m_values", t.sphere_m_values},
              {"sphere_trials", t.sphere_trials},
              {"limit_trials", t.limit_trials},
              {"slope_threshold", t.slope_threshold},
              {"workers", 1},
              {"inject_fault", ""}};
}

int cmd_verify_theory(const json& merged, const Common& common, std::ostream& out, std::ostream& err) {
  TheorySuiteConfig t;
  t.seed = cfg_get<std::uint64_t>(merged, "seed");
  t.taus = cfg_get<std::vector<double>>(merged, "taus");
  t.prop1_draws = cfg_get<long>(merged, "prop1_draws");
  t.m_values = cfg_get<std::vector<int>>(merged, "m_values");
  t.two_point_trials = cfg_get<int>(merged, "two_point_trials");
  t.sphere_m_values = cfg_get<std::vector<int>>(merged, "sphere_m_values");
  t.sphere_trials = cfg_get<int>(merged, "sphere_trials");
  t.limit_trials = cfg_get<int>(merged, "limit_trials");
  t.slope_threshold = cfg_get<double>(merged, "slope_threshold");
  t.options.workers = cfg_get<int>(merged, "workers");
  if (t.options.workers < 1) throw ArgumentError("workers must be at least 1");
  const auto fault = cfg_get<std::string>(merged, "inject_fault");
  if (fault == "lu-no-offset") {
    t.options.faults.drop_lu_offset = true;
  } else if (!fault.empty()) {
    throw ArgumentError("unknown fault: " + fault);
  }
  for (double tau : t.taus) {
    if (!(tau > 0.0)) throw ArgumentError("tau must be positive");
  }

  const TheorySuiteResult res = run_theory_suite(t);
  Run run("verify-theory", common.out);

  std::string prop1 = schema_line("prop1") +
                      "distribution,tau,draws,lower_violations,upper_violations,max_lower_excess,max_upper_excess,"
                      "max_abs_gap,slack\n";
  for (const auto& r : res.prop1) {
    prop1 += csv_row({r.distribution, num(r.tau), num(r.draws), num(r.lower_violations), num(r.upper_violations),
                      num(r.max_lower_excess), num(r.max_upper_excess), num(r.max_abs_gap), num(r.slack)});
  }
  std::string curves = schema_line("curves") + "distribution,tau,loss,m,trials,mean_value,limit,limit_closed_form,"
                                               "mean_dev,stderr\n";
  std::string fits = schema_line("fits") + "distribution,tau,loss,slope,intercept,r_squared,used_points,monotone,"
                                           "slope_ok,note\n";
  for (const auto& c : res.curves) {
    for (std::size_t i = 0; i < c.curve.m_values.size(); ++i) {
      curves += csv_row({c.distribution, num(c.tau), to_string(c.curve.loss), num(c.curve.m_values[i]),
                         num(c.curve.trials[i]), num(c.curve.mean_value[i]), num(c.curve.limit_estimate),
                         c.curve.limit_closed_form ? "1" : "0", num(c.curve.mean_dev[i]), num(c.curve.std_error[i])});
    }
    fits += csv_row({c.distribution, num(c.tau), to_string(c.curve.loss), c.fit ? num(c.fit->slope) : "",
                     c.fit ? num(c.fit->intercept) : "", c.fit ? num(c.fit->r_squared) : "",
                     c.fit ? num(static_cast<int>(c.fit->used_m.size())) : "0", c.monotone ? "1" : "0",
                     c.slope_ok ? "1" : "0", c.fit_error});
  }
  std::string limits = schema_line("limits") + "check,estimate,estimate_stderr,reference,reference_stderr,ok\n";
  for (const auto& l : res.limits) {
    limits += csv_row({l.name, num(l.estimate.value), num(l.estimate.std_error), num(l.reference),
                       num(l.reference_stderr), l.ok ? "1" : "0"});
  }
  run.write("prop1.csv", prop1);
  run.write("curves.csv", curves);
  run.write("fits.csv", fits);
  run.write("limits.csv", limits);
  long violations = 0;
  for (const auto& r : res.prop1) violations += r.lower_violations + r.upper_violations;
  json fit_rows = json::array(), limit_rows = json::array();
  for (const auto& c : res.curves) {
    json row = {{"distribution", c.distribution}, {"loss", to_string(c.curve.loss)}, {"limit", c.curve.limit_estimate}};
    row["slope"] = c.fit ? json(c.fit->slope) : json(nullptr);
    row["r2"] = c.fit ? json(c.fit->r_squared) : json(nullptr);
    fit_rows.push_back(row);
  }
  for (const auto& l : res.limits) {
    limit_rows.push_back({{"check", l.name}, {"limit", l.estimate.value}, {"stderr", l.estimate.std_error},
                          {"reference", l.reference}, {"ok", l.ok}});
  }
  const json summary = {{"schema", "spegcl.theory_summary/1"},
                        {"violations", violations},
                        {"fits", fit_rows},
                        {"limits", limit_rows},
                        {"prop1_ok", res.prop1_ok},
                        {"curves_ok", res.curves_ok},
                        {"limits_ok", res.limits_ok},
                        {"passed", res.passed()}};
  run.write("summary.json", summary.dump(2) + "\n");
  const std::string hash = fnv1a_hex(merged.dump());
  run.finish(merged, hash, t.seed);

  out << "verify-theory: prop1 " << (res.prop1_ok ? "ok" : "FAILED") << ", decay " << (res.curves_ok ? "ok" : "FAILED")
      << ", limits " << (res.limits_ok ? "ok" : "FAILED") << ", output " << run.dir().string() << "\n";
  if (!res.passed()) {
    std::string what;
    if (!res.prop1_ok) what += " prop1";
    if (!res.curves_ok) what += " decay";
    if (!res.limits_ok) what += " limits";
    err << "spegcl: error: theory: checks failed:" << what << "\n";
    return kExitTheory;
  }
  return kExitOk;
}

int fail(std::ostream& err, const char* kind, const std::string& msg, int code) {
  std::string one_line = msg;
  for (char& c : one_line) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  err << "spegcl: error: " << kind << ": " << one_line << "\n";
  return code;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spectral graph contrastive learning toolkit", "spegcl"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  Common common;
  std::string resume_path;
  std::function<int()> action;

  auto* train = app.add_subcommand("train", "self-supervised training");
  Overrides train_o(train);
  add_common(train, common);
  add_dataset_flags(train_o);
  add_train_flags(train_o);
  train->add_option("--resume", resume_path, "continue from a checkpoint");

  auto* verify = app.add_subcommand("verify-theory", "numerical checks of the loss bounds and large-M behavior");
  Overrides verify_o(verify);
  add_common(verify, common);
  verify_o.add<std::uint64_t>("--seed", "seed", "seed");
  verify_o.add_list("--m-values", "m_values", "negative counts for the two-point curves");
  verify_o.add_list("--sphere-m-values", "sphere_m_values", "negative counts for the sphere curves");
  verify_o.add<int>("--two-point-trials", "two_point_trials", "trials per M (two-point)");
  verify_o.add<int>("--sphere-trials", "sphere_trials", "trials per M (sphere)");
  verify_o.add<long>("--prop1-draws", "prop1_draws", "draws per bound check");
  verify_o.add<int>("--limit-trials", "limit_trials", "outer trials for limit estimates");
  verify_o.add<std::vector<double>>("--taus", "taus", "temperatures for the bound checks")->delimiter(',');
  verify_o.add<int>("--workers", "workers", "worker threads");
  verify_o.add<std::string>("--inject-fault", "inject_fault", "")->group("");

  auto* eval = app.add_subcommand("eval", "linear probe or semi-supervised evaluation");
  Overrides eval_o(eval);
  add_common(eval, common);
  add_dataset_flags(eval_o);
  add_train_flags(eval_o);
  eval_o.add<std::string>("--checkpoint", "checkpoint", "trained checkpoint (omit for an untrained encoder)");
  eval_o.add<std::string>("--protocol", "protocol", "probe | semi");
  eval_o.add<double>("--label-rate", "label_rate", "semi: labeled fraction of each training pool");
  eval_o.add<int>("--k-folds", "k_folds", "cross-validation folds");
  eval_o.add<std::uint64_t>("--fold-seed", "fold_seed", "fold assignment seed");
  eval_o.add<int>("--finetune-epochs", "finetune_epochs", "semi: fine-tuning epochs");
  eval_o.add<double>("--finetune-lr", "finetune_lr", "semi: fine-tuning learning rate");
  eval_o.add<int>("--finetune-batch-size", "finetune_batch_size", "semi: fine-tuning batch size");

  auto* ablate = app.add_subcommand("ablate", "loss/encoder ablations");
  Overrides ablate_o(ablate);
  add_common(ablate, common);
  add_dataset_flags(ablate_o);
  add_train_flags(ablate_o);
  ablate_o.add<std::vector<std::string>>("--modes", "modes", "pos_and_neg,no_neg,no_pos,no_fouriergnn")
      ->delimiter(',');
  ablate_o.add<int>("--k-folds", "k_folds", "cross-validation folds");
  ablate_o.add<std::uint64_t>("--fold-seed", "fold_seed", "fold assignment seed");

  auto* inspect = app.add_subcommand("inspect-spectrum", "write feature/spectrum grids as CSV");
  Overrides inspect_o(inspect);
  add_common(inspect, common);
  add_dataset_flags(inspect_o);
  inspect_o.add_list("--graph-indices", "graph_indices", "graphs to inspect");
  inspect_o.add<double>("--radius-ratio", "radius_ratio", "low-pass radius ratio");

  auto* gen = app.add_subcommand("gen-synth", "write a synthetic dataset in TUDataset layout");
  Overrides gen_o(gen);
  add_common(gen, common);
  gen_o.add<std::string>("--name", "name", "dataset name");
  gen_o.add<int>("--graphs", "graphs", "number of graphs");
  gen_o.add<int>("--nodes", "nodes", "nodes per graph");
  gen_o.add<double>("--p0", "p0", "edge probability of class 0");
  gen_o.add<double>("--p1", "p1", "edge probability of class 1");
  gen_o.add<double>("--noise", "noise", "feature noise scale");
  gen_o.add<std::uint64_t>("--seed", "data_seed", "generator seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return kExitOk;
  } catch (const CLI::Success&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return fail(err, "config", e.what(), kExitConfig);
  }

  try {
    if (train->parsed()) {
      json defaults = dataset_defaults();
      defaults.update(TrainConfig().to_json());
      return cmd_train(merge_config(defaults, common.config_path, train_o), common, resume_path, out);
    }
    if (verify->parsed()) {
      return cmd_verify_theory(merge_config(theory_defaults(), common.config_path, verify_o), common, out, err);
    }
    if (eval->parsed()) return cmd_eval(merge_config(eval_defaults(), common.config_path, eval_o), common, out);
    if (ablate->parsed()) {
      return cmd_ablate(merge_config(ablate_defaults(), common.config_path, ablate_o), common, out);
    }
    if (inspect->parsed()) {
      return cmd_inspect(merge_config(inspect_defaults(), common.config_path, inspect_o), common, out);
    }
    if (gen->parsed()) return cmd_gen_synth(merge_config(gen_defaults(), common.config_path, gen_o), common, out);
  } catch (const IngestError& e) {
    return fail(err, "data", e.what(), kExitData);
  } catch (const FormatError& e) {
    return fail(err, "data", e.what(), kExitData);
  } catch (const NumericError& e) {
    return fail(err, "numeric", e.what(), kExitNumeric);
  } catch (const InsufficientDataError& e) {
    return fail(err, "insufficient-data", e.what(), kExitConfig);
  } catch (const StratificationError& e) {
    return fail(err, "stratification", e.what(), kExitConfig);
  } catch (const Error& e) {
    return fail(err, "config", e.what(), kExitConfig);
  } catch (const json::exception& e) {
    return fail(err, "config", e.what(), kExitConfig);
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(err, "data", e.what(), kExitData);
  }
  return fail(err, "config", "no command given", kExitConfig);
}

}  // namespace spegcl
