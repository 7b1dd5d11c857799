#include "spegcl/evalsuite.hpp"

#include "spegcl/errors.hpp"
#include "spegcl/io.hpp"
#include "spegcl/parallel.hpp"
#include "spegcl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace spegcl {

using nlohmann::json;

json EvalReport::to_json() const {
  return json{
      {"schema", "spegcl.eval_report/1"},
      {"mode", mode},
      {"classifier", kProbeClassifier},
      {"fold_accuracies", fold_accuracies},
      {"train_accuracies", train_accuracies},
      {"mean", mean},
      {"std", std},
      {"config_hash", config_hash},
      {"effective_label_rate", effective_label_rate},
      {"details", details},
  };
}

std::pair<double, double> mean_std(std::span<const double> xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

std::vector<int> stratified_folds(std::span<const int> labels, int k, std::uint64_t seed) {
  if (k < 2) throw ArgumentError("k_folds must be at least 2");
  std::map<int, std::vector<int>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<int>(i));
  std::vector<int> fold(labels.size(), -1);
  int offset = 0;
  for (auto& [cls, members] : by_class) {
    if (static_cast<int>(members.size()) < k) {
      throw StratificationError("class " + std::to_string(cls) + " has " + std::to_string(members.size()) +
                                " samples, fewer than k_folds=" + std::to_string(k));
    }
    Rng rng = make_rng(seed, {0xF01D, static_cast<std::uint64_t>(cls)});
    for (int i = static_cast<int>(members.size()) - 1; i > 0; --i) {
      const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(members[i], members[j]);
    }
    for (std::size_t r = 0; r < members.size(); ++r) {
      fold[static_cast<std::size_t>(members[r])] = static_cast<int>((offset + r) % static_cast<std::size_t>(k));
    }
    offset = static_cast<int>((offset + members.size()) % static_cast<std::size_t>(k));
  }
  return fold;
}

Eigen::MatrixXd LinearModel::logits(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd z = x * weight;
  z.rowwise() += bias.transpose();
  return z;
}

std::vector<int> LinearModel::predict(const Eigen::MatrixXd& x) const {
  const Eigen::MatrixXd z = logits(x);
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index best;
    z.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

namespace {

// Row-wise softmax, in place.
void softmax_rows(Eigen::MatrixXd& z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    z.row(i) = (z.row(i).array() - m).exp().matrix();
    z.row(i) /= z.row(i).sum();
  }
}

Eigen::MatrixXd one_hot(std::span<const int> y, int num_classes) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(y.size()), num_classes);
  for (std::size_t i = 0; i < y.size(); ++i) out(static_cast<Eigen::Index>(i), y[i]) = 1.0;
  return out;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<int>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
  return out;
}

std::vector<int> take(std::span<const int> v, const std::vector<int>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(v[static_cast<std::size_t>(i)]);
  return out;
}

int count_classes(std::span<const int> labels) {
  int c = 0;
  for (int y : labels) {
    if (y < 0) throw ArgumentError("labels must be non-negative");
    c = std::max(c, y + 1);
  }
  return c;
}

}  // namespace

LinearModel fit_softmax(const Eigen::MatrixXd& x, std::span<const int> y, int num_classes,
                        const ProbeConfig& cfg) {
  if (x.rows() != static_cast<Eigen::Index>(y.size()) || x.rows() == 0) {
    throw ArgumentError("fit_softmax: need one label per non-empty row");
  }
  LinearModel m;
  m.weight = Eigen::MatrixXd::Zero(x.cols(), num_classes);
  m.bias = Eigen::VectorXd::Zero(num_classes);
  const Eigen::MatrixXd target = one_hot(y, num_classes);
  const double n = static_cast<double>(x.rows());
  for (int step = 0; step < cfg.steps; ++step) {
    Eigen::MatrixXd p = m.logits(x);
    softmax_rows(p);
    const Eigen::MatrixXd g = (p - target) / n;
    const Eigen::MatrixXd gw = x.transpose() * g + cfg.weight_decay * m.weight;
    const Eigen::VectorXd gb = g.colwise().sum().transpose();
    m.weight -= cfg.learning_rate * gw;
    m.bias -= cfg.learning_rate * gb;
  }
  return m;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size() || truth.empty()) throw ArgumentError("accuracy: size mismatch");
  long hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

EvalReport linear_probe(const Eigen::MatrixXd& embeddings, std::span<const int> labels, int k_folds,
                        std::uint64_t seed, const ProbeConfig& probe, int workers) {
  if (embeddings.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw ArgumentError("linear_probe: one label per embedding required");
  }
  const std::vector<int> fold = stratified_folds(labels, k_folds, seed);
  const int classes = count_classes(labels);
  EvalReport rep;
  rep.mode = "linear_probe";
  rep.fold_accuracies.assign(static_cast<std::size_t>(k_folds), 0.0);
  rep.train_accuracies.assign(static_cast<std::size_t>(k_folds), 0.0);
  parallel_for(k_folds, workers, [&](int f) {
    std::vector<int> train_idx, test_idx;
    for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == f ? test_idx : train_idx).push_back(static_cast<int>(i));
    const Eigen::MatrixXd xtr = take_rows(embeddings, train_idx);
    const Eigen::MatrixXd xte = take_rows(embeddings, test_idx);
    const std::vector<int> ytr = take(labels, train_idx);
    const std::vector<int> yte = take(labels, test_idx);
    const LinearModel model = fit_softmax(xtr, ytr, classes, probe);
    rep.fold_accuracies[static_cast<std::size_t>(f)] = accuracy(model.predict(xte), yte);
    rep.train_accuracies[static_cast<std::size_t>(f)] = accuracy(model.predict(xtr), ytr);
  });
  std::tie(rep.mean, rep.std) = mean_std(rep.fold_accuracies);
  const json cfg = {{"k_folds", k_folds},
                    {"fold_seed", seed},
                    {"steps", probe.steps},
                    {"learning_rate", probe.learning_rate},
                    {"weight_decay", probe.weight_decay}};
  rep.config_hash = fnv1a_hex(cfg.dump());
  rep.details["probe"] = cfg;
  return rep;
}

// ---------------------------------------------------------------------------

void FinetuneConfig::validate() const {
  if (epochs < 1) throw ArgumentError("epochs must be at least 1");
  if (batch_size < 1) throw ArgumentError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ArgumentError("learning_rate must be positive");
  if (k_folds < 2) throw ArgumentError("k_folds must be at least 2");
  if (workers < 1) throw ArgumentError("workers must be at least 1");
}

json FinetuneConfig::to_json() const {
  return json{{"epochs", epochs},         {"batch_size", batch_size}, {"learning_rate", learning_rate},
              {"k_folds", k_folds},       {"fold_seed", fold_seed},   {"seed", seed},
              {"encoder", to_string(kind)}, {"hidden_dims", hidden_dims}, {"emb_dim", emb_dim}};
}

namespace {

struct FoldOutcome {
  double test_accuracy = 0.0;
  double train_accuracy = 0.0;
  int labeled = 0;
  int pool = 0;
};

std::vector<int> labeled_subset(const Dataset& d, const std::vector<int>& pool, double rate,
                                std::uint64_t seed) {
  std::map<int, std::vector<int>> by_class;
  for (int i : pool) by_class[*d.graphs[static_cast<std::size_t>(i)].label].push_back(i);
  std::vector<int> out;
  for (auto& [cls, members] : by_class) {
    const int take_n = static_cast<int>(std::lround(rate * static_cast<double>(members.size())));
    if (take_n < 1) {
      throw StratificationError("label rate " + format_double(rate) + " leaves class " + std::to_string(cls) +
                                " without labeled graphs");
    }
    Rng rng = make_rng(seed, {0x1AB, static_cast<std::uint64_t>(cls)});
    for (int i = static_cast<int>(members.size()) - 1; i > 0; --i) {
      const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(members[i], members[j]);
    }
    out.insert(out.end(), members.begin(), members.begin() + take_n);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> predict_graphs(const Dataset& d, const std::vector<int>& idx, const EncoderParams& params,
                                const LinearModel& head) {
  return head.predict(encode(batch(d, idx), params));
}

FoldOutcome finetune_fold(const Dataset& d, const EncoderParams& start, const std::vector<int>& fold, int f,
                          double rate, const FinetuneConfig& cfg) {
  std::vector<int> pool, test;
  for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == f ? test : pool).push_back(static_cast<int>(i));
  const std::vector<int> labeled =
      rate >= 1.0 ? pool : labeled_subset(d, pool, rate, substream(cfg.seed, {0x5E1, static_cast<std::uint64_t>(f)}));

  EncoderParams params = start;
  LinearModel head;
  head.weight = Eigen::MatrixXd::Zero(params.emb_dim, d.num_classes);
  head.bias = Eigen::VectorXd::Zero(d.num_classes);
  std::vector<double> flat = params.flatten();
  const std::size_t n_enc = flat.size();
  flat.insert(flat.end(), head.weight.data(), head.weight.data() + head.weight.size());
  flat.insert(flat.end(), head.bias.data(), head.bias.data() + head.bias.size());
  AdamState adam;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order = labeled;
    Rng rng = make_rng(cfg.seed, {0xF17E, static_cast<std::uint64_t>(f), static_cast<std::uint64_t>(epoch)});
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(order[i], order[j]);
    }
    for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(cfg.batch_size)) {
      const std::vector<int> ids(order.begin() + static_cast<std::ptrdiff_t>(s),
                                 order.begin() + static_cast<std::ptrdiff_t>(
                                                     std::min(order.size(), s + static_cast<std::size_t>(cfg.batch_size))));
      EncodeCache cache;
      const Eigen::MatrixXd z = encode(batch(d, ids), params, &cache);
      Eigen::MatrixXd p = head.logits(z);
      softmax_rows(p);
      std::vector<int> y;
      for (int i : ids) y.push_back(*d.graphs[static_cast<std::size_t>(i)].label);
      const Eigen::MatrixXd g = (p - one_hot(y, d.num_classes)) / static_cast<double>(ids.size());
      const Eigen::MatrixXd gw = z.transpose() * g;
      const Eigen::VectorXd gb = g.colwise().sum().transpose();
      std::vector<double> grad = encode_backward(cache, params, g * head.weight.transpose()).flatten();
      grad.insert(grad.end(), gw.data(), gw.data() + gw.size());
      grad.insert(grad.end(), gb.data(), gb.data() + gb.size());
      adam_step(flat, grad, adam, cfg.learning_rate, 0.9, 0.999, 1e-8);
      params.unflatten(std::span<const double>(flat.data(), n_enc));
      std::copy_n(flat.data() + n_enc, head.weight.size(), head.weight.data());
      std::copy_n(flat.data() + n_enc + head.weight.size(), head.bias.size(), head.bias.data());
    }
  }

  FoldOutcome out;
  std::vector<int> yte, ytr;
  for (int i : test) yte.push_back(*d.graphs[static_cast<std::size_t>(i)].label);
  for (int i : labeled) ytr.push_back(*d.graphs[static_cast<std::size_t>(i)].label);
  out.test_accuracy = accuracy(predict_graphs(d, test, params, head), yte);
  out.train_accuracy = accuracy(predict_graphs(d, labeled, params, head), ytr);
  out.labeled = static_cast<int>(labeled.size());
  out.pool = static_cast<int>(pool.size());
  return out;
}

}  // namespace

EvalReport semi_supervised_finetune(const Dataset& dataset, const Checkpoint* checkpoint, double label_rate,
                                    const FinetuneConfig& cfg) {
  cfg.validate();
  if (!(label_rate > 0.0 && label_rate <= 1.0)) throw ArgumentError("label_rate must lie in (0, 1]");
  for (const Graph& g : dataset.graphs) {
    if (!g.label) throw ArgumentError("semi-supervised evaluation needs graph labels");
  }
  EncoderParams start;
  if (checkpoint) {
    start = checkpoint->params;
    if (start.layer_dims.empty() || start.layer_dims.front() != dataset.feature_dim) {
      throw StateError("checkpoint input dim does not match dataset feature dim");
    }
  } else {
    std::vector<int> dims = {dataset.feature_dim};
    dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
    start = init_params(dims, cfg.emb_dim, cfg.kind, substream(cfg.seed, {0x1417}));
  }

  const std::vector<int> labels = dataset.labels();
  const std::vector<int> fold = stratified_folds(labels, cfg.k_folds, cfg.fold_seed);
  std::vector<FoldOutcome> outcomes(static_cast<std::size_t>(cfg.k_folds));
  parallel_for(cfg.k_folds, cfg.workers, [&](int f) {
    outcomes[static_cast<std::size_t>(f)] = finetune_fold(dataset, start, fold, f, label_rate, cfg);
  });

  EvalReport rep;
  rep.mode = "semi_supervised";
  long labeled = 0, pool = 0;
  json labeled_per_fold = json::array(), pool_per_fold = json::array();
  for (const FoldOutcome& o : outcomes) {
    rep.fold_accuracies.push_back(o.test_accuracy);
    rep.train_accuracies.push_back(o.train_accuracy);
    labeled += o.labeled;
    pool += o.pool;
    labeled_per_fold.push_back(o.labeled);
    pool_per_fold.push_back(o.pool);
  }
  std::tie(rep.mean, rep.std) = mean_std(rep.fold_accuracies);
  rep.effective_label_rate = static_cast<double>(labeled) / static_cast<double>(pool);
  json c = cfg.to_json();
  c["label_rate"] = label_rate;
  c["pretrained"] = checkpoint != nullptr;
  if (checkpoint) c["checkpoint_config_hash"] = checkpoint->config_hash;
  rep.config_hash = fnv1a_hex(c.dump());
  rep.details["finetune"] = c;
  rep.details["labeled_per_fold"] = labeled_per_fold;
  rep.details["pool_per_fold"] = pool_per_fold;
  rep.details["classifier_note"] = "encoder and linear softmax head fine-tuned jointly with cross-entropy";
  return rep;
}

// ---------------------------------------------------------------------------

std::string to_string(AblationMode m) {
  switch (m) {
    case AblationMode::pos_and_neg: return "pos_and_neg";
    case AblationMode::no_neg: return "no_neg";
    case AblationMode::no_pos: return "no_pos";
    case AblationMode::no_fouriergnn: return "no_fouriergnn";
  }
  return "?";
}

AblationMode parse_ablation_mode(const std::string& s) {
  for (AblationMode m : {AblationMode::pos_and_neg, AblationMode::no_neg, AblationMode::no_pos,
                         AblationMode::no_fouriergnn}) {
    if (s == to_string(m)) return m;
  }
  throw ArgumentError("unknown ablation mode: " + s);
}

std::string table_row(AblationMode m) {
  switch (m) {
    case AblationMode::pos_and_neg: return "w Pos/Neg";
    case AblationMode::no_neg: return "w/o Neg";
    case AblationMode::no_pos: return "w/o Pos";
    case AblationMode::no_fouriergnn: return "w/o FourierGNN";
  }
  return "?";
}

namespace {

void apply_mode(AblationMode m, TrainConfig& cfg) {
  switch (m) {
    case AblationMode::pos_and_neg: cfg.loss.mode = LossMode::nce; break;
    case AblationMode::no_neg: cfg.loss.mode = LossMode::align_only; break;
    case AblationMode::no_pos: cfg.loss.mode = LossMode::neg_only; break;
    case AblationMode::no_fouriergnn:
      cfg.loss.mode = LossMode::neg_only;
      cfg.kind = EncoderKind::gin;
      break;
  }
}

}  // namespace

json ablation_mode_table() {
  json rows = json::array();
  for (AblationMode m : {AblationMode::pos_and_neg, AblationMode::no_neg, AblationMode::no_pos,
                         AblationMode::no_fouriergnn}) {
    TrainConfig c;
    apply_mode(m, c);
    json row = {{"mode", to_string(m)},
                {"table_row", table_row(m)},
                {"loss", to_string(c.loss.mode)},
                {"encoder", to_string(c.kind)}};
    if (m == AblationMode::no_neg) row["note"] = "interpretation: alignment-only loss, no uniformity term";
    rows.push_back(row);
  }
  return rows;
}

double mean_pairwise_similarity(const Eigen::MatrixXd& z) {
  const Eigen::Index n = z.rows();
  if (n < 2) throw ArgumentError("mean_pairwise_similarity needs at least two embeddings");
  const Eigen::MatrixXd g = z * z.transpose();
  return (g.sum() - g.trace()) / static_cast<double>(n * (n - 1));
}

AblationResult ablation_run(const Dataset& dataset, AblationMode mode, const TrainConfig& base, int k_folds,
                            std::uint64_t fold_seed) {
  TrainConfig cfg = base;
  apply_mode(mode, cfg);
  const TrainResult tr = train(dataset, cfg);
  const Eigen::MatrixXd z = embed_dataset(dataset, tr.checkpoint.params);

  AblationResult out;
  out.mode = mode;
  out.loss_history = tr.checkpoint.loss_history;
  const double first = out.loss_history.front(), last = out.loss_history.back();
  out.loss_reduction = first != 0.0 ? (first - last) / std::abs(first) : 0.0;
  out.mean_pairwise_similarity = mean_pairwise_similarity(z);
  out.report = linear_probe(z, dataset.labels(), k_folds, fold_seed, {}, cfg.workers);
  out.report.mode = to_string(mode);
  out.report.config_hash = cfg.hash();
  out.report.details["table_row"] = table_row(mode);
  out.report.details["mode_table"] = ablation_mode_table();
  out.report.details["train_config"] = cfg.to_json();
  out.report.details["loss_reduction"] = out.loss_reduction;
  out.report.details["mean_pairwise_similarity"] = out.mean_pairwise_similarity;
  return out;
}

}  // namespace spegcl
