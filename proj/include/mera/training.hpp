#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mera/binary_io.hpp"
#include "mera/config.hpp"
#include "mera/metrics.hpp"
#include "mera/model.hpp"

namespace mera {

// ---------------------------------------------------------------------------
// Losses on plain values

inline double bce_loss(std::span<const double> y_hat, std::span<const std::uint8_t> y, double eps = 1e-12) {
  if (y_hat.size() != y.size())
    throw DimensionError("bce: " + std::to_string(y_hat.size()) + " predictions vs " + std::to_string(y.size()) +
                         " labels");
  if (y.empty()) throw EmptyInputError("bce over zero residues");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double q = std::clamp(y_hat[i], eps, 1.0 - eps);
    s -= y[i] ? std::log(q) : std::log(1.0 - q);
  }
  return s / static_cast<double>(y.size());
}

/// Σ_s reduce_i (p^s_i − y_i)², reduce = mean or sum over residues.
inline double reliability_loss(const std::vector<std::vector<double>>& bounded, std::span<const std::uint8_t> y,
                               Reduction reduction = Reduction::Mean) {
  double total = 0.0;
  for (const auto& p : bounded) {
    if (p.size() != y.size()) throw DimensionError("reliability loss: modality length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (p[i] - y[i]) * (p[i] - y[i]);
    total += reduction == Reduction::Mean ? s / static_cast<double>(y.size()) : s;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Optimizer

/// One bias-corrected Adam update over every entry, then zeroes gradients.
inline void adam_step(ParameterStore& params, const MeraConfig& cfg) {
  for (const auto& e : params.entries())
    if (!e.grad.all_finite()) throw NumericalError("training error: non-finite gradient for '" + e.name + "'");
  params.adam_step += 1;
  const double t = static_cast<double>(params.adam_step);
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
  for (auto& e : params.entries()) {
    auto& w = e.value.data();
    const auto& g = e.grad.data();
    auto& m = e.adam_m.data();
    auto& v = e.adam_v.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
      v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      w[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.adam_eps);
    }
  }
  params.zero_grad();
}

// ---------------------------------------------------------------------------
// Epoch loop

struct TrainItem {
  const ProteinInput* protein = nullptr;
  RetrievalContext context;
};

inline std::vector<TrainItem> prepare_items(const MeraConfig& cfg, const Store& store,
                                            const std::vector<ProteinInput>& proteins, bool allow_empty) {
  std::vector<TrainItem> items;
  items.reserve(proteins.size());
  for (const auto& p : proteins) items.push_back({&p, prepare_retrieval(cfg, store, p, allow_empty)});
  return items;
}

struct EpochStats {
  LossBreakdown mean;
  std::size_t steps = 0;
  std::size_t skipped = 0;
};

/// Order of a given epoch; depends only on (seed, epoch, count).
inline std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t count) {
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  Rng rng(seed * 0x9e3779b97f4a7c15ULL + epoch + 1);
  rng.shuffle(order);
  return order;
}

/// One pass over the items in seeded order: forward, loss, backward and an
/// Adam step per protein. Proteins whose retrieval failed are skipped.
inline EpochStats train_epoch(const std::vector<TrainItem>& items, ParameterStore& params, const MeraConfig& cfg,
                              std::size_t epoch) {
  if (items.empty()) throw ConfigError("training set is empty");
  EpochStats st;
  std::map<std::string, double> per_mod;
  std::vector<std::string> mod_order;
  for (std::size_t idx : epoch_order(cfg.require_seed(), epoch, items.size())) {
    const TrainItem& it = items[idx];
    if (it.context.failed) {
      ++st.skipped;
      continue;
    }
    ad::Tape tape;
    auto fwd = ad::forward(tape, cfg, params, *it.protein, it.context);
    LossTape loss = build_loss(fwd.rmf, it.protein->labels, cfg);
    params.zero_grad();
    tape.backward(loss.total);
    adam_step(params, cfg);
    st.mean.total += loss.parts.total;
    st.mean.bce += loss.parts.bce;
    st.mean.reliability += loss.parts.reliability;
    for (const auto& [name, v] : loss.parts.per_modality) {
      if (!per_mod.count(name)) mod_order.push_back(name);
      per_mod[name] += v;
    }
    ++st.steps;
  }
  if (st.steps > 0) {
    const double n = static_cast<double>(st.steps);
    st.mean.total /= n;
    st.mean.bce /= n;
    st.mean.reliability /= n;
    for (const auto& name : mod_order) st.mean.per_modality.emplace_back(name, per_mod[name] / n);
  }
  return st;
}

/// Fused predictions for every item, in item order.
inline std::vector<metrics::EvalRecord> infer_records(const std::vector<TrainItem>& items, const MeraConfig& cfg,
                                                      const ParameterStore& params,
                                                      std::vector<Prediction>* predictions = nullptr) {
  std::vector<metrics::EvalRecord> out;
  for (const auto& it : items) {
    Prediction pr = predict(cfg, params, *it.protein, it.context);
    out.push_back({it.protein->id, pr.bundle.y_hat, it.protein->labels});
    if (predictions) predictions->push_back(std::move(pr));
  }
  return out;
}

/// Rounds every value to single precision, matching what a checkpoint holds.
inline void round_to_float(ParameterStore& params) {
  for (auto& e : params.entries())
    for (double& v : e.value.data()) v = static_cast<double>(static_cast<float>(v));
}

struct EpochLog {
  std::size_t epoch = 0;
  EpochStats stats;
  double val_auprc = 0.0;
  double val_fmax = 0.0;
};

struct TrainResult {
  ParameterStore best;
  std::size_t best_epoch = 0;
  double best_val_auprc = -1.0;
  std::vector<EpochLog> log;
};

/// Runs cfg.epochs epochs, scoring validation AUPRC after each and keeping
/// the best (float-rounded) parameters.
inline TrainResult train(const MeraConfig& cfg, const std::vector<TrainItem>& train_items,
                         const std::vector<TrainItem>& valid_items, ParameterStore params,
                         const std::function<void(const EpochLog&)>& on_epoch = {}) {
  if (valid_items.empty()) throw ConfigError("validation split is empty");
  TrainResult res;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch + 1;
    log.stats = train_epoch(train_items, params, cfg, epoch);
    ParameterStore snapshot = params;
    round_to_float(snapshot);
    const auto recs = infer_records(valid_items, cfg, snapshot);
    log.val_auprc = metrics::auprc(recs);
    log.val_fmax = metrics::fmax(recs).fmax;
    if (log.val_auprc > res.best_val_auprc) {
      res.best_val_auprc = log.val_auprc;
      res.best_epoch = log.epoch;
      res.best = std::move(snapshot);
    }
    if (on_epoch) on_epoch(log);
    res.log.push_back(std::move(log));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr const char* kCheckpointMagic = "MERACKPT";

struct Checkpoint {
  MeraConfig config;
  ParameterStore params;
};

inline std::vector<std::uint8_t> serialize_checkpoint(const MeraConfig& cfg, const ParameterStore& params) {
  io::ByteWriter w;
  w.magic(kCheckpointMagic);
  w.u8(1);
  w.str(to_json(cfg).dump());
  w.u32(io::ByteWriter::checked_u32(params.size(), "parameter count"));
  for (const auto& e : params.entries()) {
    w.str(e.name);
    w.u32(io::ByteWriter::checked_u32(e.value.rows(), "rows"));
    w.u32(io::ByteWriter::checked_u32(e.value.cols(), "cols"));
    w.floats(e.value);
  }
  return w.bytes();
}

inline Checkpoint deserialize_checkpoint(std::vector<std::uint8_t> bytes, const std::string& source) {
  io::ByteReader rd(std::move(bytes), source);
  rd.expect_magic(kCheckpointMagic);
  const std::uint8_t version = rd.u8();
  if (version != 1) rd.fail("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const std::string cfg_text = rd.str();
  try {
    ck.config = config_from_json(nlohmann::json::parse(cfg_text));
  } catch (const nlohmann::json::exception& e) {
    rd.fail(std::string("unreadable config echo: ") + e.what());
  }
  const std::uint32_t count = rd.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = rd.str();
    const std::uint32_t r = rd.u32(), c = rd.u32();
    ck.params.add(name, rd.floats(r, c));
  }
  rd.expect_end();
  return ck;
}

inline void save_checkpoint(const std::string& path, const MeraConfig& cfg, const ParameterStore& params) {
  io::write_file(path, serialize_checkpoint(cfg, params));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return deserialize_checkpoint(io::read_file(path), path);
}

}  // namespace mera
