#include "spegcl/trainer.hpp"

#include "spegcl/errors.hpp"
#include "spegcl/io.hpp"
#include "spegcl/parallel.hpp"
#include "spegcl/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

namespace spegcl {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw ArgumentError("epochs must be at least 1");
  if (batch_size < 2) throw ArgumentError("batch_size must be at least 2");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ArgumentError("learning_rate must be positive");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ArgumentError("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ArgumentError("adam_eps must be positive");
  if (hidden_dims.empty()) throw ArgumentError("hidden_dims must list at least one layer");
  for (int d : hidden_dims) {
    if (d < 1) throw ArgumentError("hidden_dims entries must be positive");
  }
  if (emb_dim < 1) throw ArgumentError("emb_dim must be positive");
  if (checkpoint_every < 0) throw ArgumentError("checkpoint_every must be non-negative");
  if (workers < 1) throw ArgumentError("workers must be at least 1");
  augment.validate();
  loss.validate();
}

json TrainConfig::to_json() const {
  return json{
      {"epochs", epochs},
      {"batch_size", batch_size},
      {"learning_rate", learning_rate},
      {"beta1", beta1},
      {"beta2", beta2},
      {"adam_eps", adam_eps},
      {"seed", seed},
      {"omega_node", augment.omega_node},
      {"omega_edge", augment.omega_edge},
      {"radius_ratio", augment.radius_ratio},
      {"view_filters", to_string(augment.filters)},
      {"tau", loss.tau},
      {"m_negatives", loss.m_negatives},
      {"loss_mode", to_string(loss.mode)},
      {"negative_policy", to_string(loss.policy)},
      {"symmetrize", loss.symmetrize},
      {"encoder", to_string(kind)},
      {"hidden_dims", hidden_dims},
      {"emb_dim", emb_dim},
      {"checkpoint_every", checkpoint_every},
      {"workers", workers},
  };
}

TrainConfig TrainConfig::from_json(const json& j) {
  if (!j.is_object()) throw ArgumentError("config must be a JSON object");
  TrainConfig c;
  const json defaults = c.to_json();
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!defaults.contains(it.key())) throw ArgumentError("unknown config key: " + it.key());
  }
  auto get = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(out);
    } catch (const json::exception&) {
      throw ArgumentError(std::string("bad value for config key: ") + key);
    }
  };
  get("epochs", c.epochs);
  get("batch_size", c.batch_size);
  get("learning_rate", c.learning_rate);
  get("beta1", c.beta1);
  get("beta2", c.beta2);
  get("adam_eps", c.adam_eps);
  get("seed", c.seed);
  get("omega_node", c.augment.omega_node);
  get("omega_edge", c.augment.omega_edge);
  get("radius_ratio", c.augment.radius_ratio);
  get("tau", c.loss.tau);
  get("m_negatives", c.loss.m_negatives);
  get("symmetrize", c.loss.symmetrize);
  get("hidden_dims", c.hidden_dims);
  get("emb_dim", c.emb_dim);
  get("checkpoint_every", c.checkpoint_every);
  get("workers", c.workers);
  std::string s;
  if (j.contains("view_filters")) {
    get("view_filters", s);
    c.augment.filters = parse_view_filters(s);
  }
  if (j.contains("loss_mode")) {
    get("loss_mode", s);
    c.loss.mode = parse_loss_mode(s);
  }
  if (j.contains("negative_policy")) {
    get("negative_policy", s);
    c.loss.policy = parse_negative_policy(s);
  }
  if (j.contains("encoder")) {
    get("encoder", s);
    c.kind = parse_encoder_kind(s);
  }
  return c;
}

std::string TrainConfig::hash() const {
  json j = to_json();
  j.erase("epochs");
  j.erase("checkpoint_every");
  j.erase("workers");
  return fnv1a_hex(j.dump());
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  if (params.size() != grads.size()) throw ArgumentError("adam_step: gradient size mismatch");
  if (state.step < 0) throw StateError("adam_step: negative step count");
  if (state.step == 0 && state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ArgumentError("adam_step: optimizer state does not match parameters");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("adam_step: non-finite gradient at index " + std::to_string(i));
    }
  }
  const long t = state.step + 1;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
  state.step = t;
}

std::vector<int> epoch_order(int n, std::uint64_t seed, int epoch) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, {0x5A0F, static_cast<std::uint64_t>(epoch)});
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  return order;
}

std::vector<std::vector<int>> make_batches(std::span<const int> order, int batch_size) {
  if (batch_size < 1) throw ArgumentError("batch_size must be positive");
  std::vector<std::vector<int>> out;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), i + static_cast<std::size_t>(batch_size));
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (out.size() > 1 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back().front());
    out.pop_back();
  }
  return out;
}

Eigen::MatrixXd embed_dataset(const Dataset& dataset, const EncoderParams& params, int batch_size) {
  if (dataset.graphs.empty()) throw ArgumentError("cannot embed an empty dataset");
  Eigen::MatrixXd out(dataset.size(), params.emb_dim);
  for (int start = 0; start < dataset.size(); start += batch_size) {
    std::vector<int> idx;
    for (int i = start; i < std::min(dataset.size(), start + batch_size); ++i) idx.push_back(i);
    const Eigen::MatrixXd z = encode(batch(dataset, idx), params);
    out.middleRows(start, z.rows()) = z;
  }
  return out;
}

namespace {

std::vector<int> encoder_dims(const Dataset& d, const TrainConfig& cfg) {
  std::vector<int> dims = {d.feature_dim};
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  return dims;
}

void add_into(std::vector<double>& acc, const std::vector<double>& x) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
}

std::string describe_batch(int epoch, int step, const std::vector<int>& ids) {
  std::string s = "non-finite loss at epoch " + std::to_string(epoch + 1) + " batch " +
                  std::to_string(step) + " graphs [";
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? "," : "") + std::to_string(ids[i]);
  return s + "]";
}

}  // namespace

TrainResult train(const Dataset& dataset, const TrainConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  if (dataset.graphs.empty()) throw ArgumentError("dataset is empty");
  if (cfg.batch_size > dataset.size()) {
    throw ArgumentError("batch_size " + std::to_string(cfg.batch_size) + " exceeds dataset size " +
                        std::to_string(dataset.size()));
  }

  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  if (options.resume) {
    ck = *options.resume;
    if (ck.config_hash != cfg.hash()) throw StateError("checkpoint config hash does not match run config");
    if (ck.epochs_completed > cfg.epochs) {
      throw ArgumentError("checkpoint is already past the requested epoch count");
    }
    const std::vector<int> dims = encoder_dims(dataset, cfg);
    if (ck.params.layer_dims != dims || ck.params.emb_dim != cfg.emb_dim) {
      throw StateError("checkpoint dimensions do not match dataset and config");
    }
  } else {
    const std::vector<int> dims = encoder_dims(dataset, cfg);
    ck.params = init_params(dims, cfg.emb_dim, cfg.kind, substream(cfg.seed, {0x1417}));
    ck.config_hash = cfg.hash();
    ck.seed = cfg.seed;
  }
  ck.config = cfg.to_json();

  std::vector<double> flat = ck.params.flatten();
  for (int epoch = ck.epochs_completed; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<int> order = epoch_order(dataset.size(), cfg.seed, epoch);
    const auto batches = make_batches(order, cfg.batch_size);
    double loss_sum = 0.0;
    long weight = 0;
    for (std::size_t step = 0; step < batches.size(); ++step) {
      const std::vector<int>& ids = batches[step];
      const int b = static_cast<int>(ids.size());
      std::vector<Graph> va(ids.size()), vb(ids.size());
      parallel_for(b, cfg.workers, [&](int i) {
        AugmentConfig ac = cfg.augment;
        ac.seed = substream(cfg.seed, {0xA06, static_cast<std::uint64_t>(epoch),
                                       static_cast<std::uint64_t>(ids[i])});
        auto views = make_view_pair(dataset.graphs[static_cast<std::size_t>(ids[i])], ac);
        va[i] = std::move(views.first);
        vb[i] = std::move(views.second);
      });
      const GraphBatch ba = batch_graphs(va);
      const GraphBatch bb = batch_graphs(vb);
      EncodeCache ca, cb;
      const Eigen::MatrixXd za = encode(ba, ck.params, &ca);
      const Eigen::MatrixXd zb = encode(bb, ck.params, &cb);
      const LossResult lr = loss_and_grad(
          za, zb, cfg.loss,
          substream(cfg.seed, {0x4E6, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(step)}));
      if (!std::isfinite(lr.loss)) throw NumericError(describe_batch(epoch, static_cast<int>(step), ids));
      std::vector<double> grad = encode_backward(ca, ck.params, lr.grad_a).flatten();
      add_into(grad, encode_backward(cb, ck.params, lr.grad_b).flatten());
      adam_step(flat, grad, ck.adam, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
      ck.params.unflatten(flat);
      loss_sum += lr.loss * b;
      weight += b;
    }
    const double mean_loss = loss_sum / static_cast<double>(weight);
    ck.loss_history.push_back(mean_loss);
    ck.epochs_completed = epoch + 1;
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.mean_loss = mean_loss;
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec, ck);
  }
  return result;
}

}  // namespace spegcl
