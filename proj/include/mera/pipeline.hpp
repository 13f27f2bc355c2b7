#pragma once

// End-to-end commands shared by the command-line tool and the tests.

#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "mera/config.hpp"
#include "mera/embedding_io.hpp"
#include "mera/manifest.hpp"
#include "mera/metrics.hpp"
#include "mera/model.hpp"
#include "mera/store.hpp"
#include "mera/synth.hpp"
#include "mera/training.hpp"

namespace mera {

/// Runs fn(i) for i in [0, n) on up to `threads` workers and returns the
/// results in index order.
template <typename Fn>
auto parallel_map(std::size_t n, std::size_t threads, Fn fn) -> std::vector<decltype(fn(std::size_t{}))> {
  using R = decltype(fn(std::size_t{}));
  std::vector<std::optional<R>> slots(n);
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) slots[i].emplace(fn(i));
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += threads) slots[i].emplace(fn(i));
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  std::vector<R> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// ---------------------------------------------------------------------------
// synth / build-db

inline std::string cmd_synth(const SynthConfig& cfg, const std::string& out_dir) {
  return write_synth(generate_synth(cfg), cfg, out_dir);
}

/// Store over the train split. Every offending record is listed.
inline Store build_train_store(const Dataset& ds) {
  if (ds.train.empty()) throw ConfigError(ds.source + ": train split is empty");
  std::vector<ProteinRecord> recs;
  std::vector<std::string> offenders;
  for (const auto& p : ds.train) {
    ProteinRecord r = p.to_record();
    try {
      r.validate();
      if (norm(r.chain_key.row(0)) == 0.0) throw StoreError("record '" + r.id + "' has a zero chain key");
    } catch (const Error& e) {
      offenders.push_back(e.what());
      continue;
    }
    recs.push_back(std::move(r));
  }
  if (!offenders.empty()) {
    std::string msg = "build error: " + std::to_string(offenders.size()) + " record(s) rejected:";
    for (const auto& o : offenders) msg += "\n  " + o;
    throw StoreError(msg);
  }
  return build_store(std::move(recs));
}

inline Store cmd_build_db(const std::string& manifest, const std::string& out_path) {
  Store s = build_train_store(load_manifest(manifest));
  save_store(s, out_path);
  return s;
}

/// Split hygiene: no validation or test protein may be retrievable.
inline void check_split_hygiene(const Dataset& ds, const Store& store) {
  for (Split s : {Split::Valid, Split::Test})
    for (const auto& p : ds.split(s))
      if (store.find(p.id))
        throw StoreError("split hygiene: " + to_string(s) + " protein '" + p.id + "' is present in the store");
}

// ---------------------------------------------------------------------------
// train

/// Copies the embedding widths of the dataset into the configuration.
inline void adopt_dims(MeraConfig& cfg, const Dataset& ds) {
  cfg.seq_dim = ds.seq_dim;
  if (ds.text_dim) cfg.text_dim = ds.text_dim;
}

struct TrainOutcome {
  MeraConfig config;
  ParameterStore initial;
  TrainResult result;
  std::size_t train_skipped = 0;
};

inline nlohmann::json training_log_json(const TrainOutcome& out) {
  nlohmann::json j;
  j["best_epoch"] = out.result.best_epoch;
  j["best_val_auprc"] = out.result.best_val_auprc;
  j["config"] = to_json(out.config);
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : out.result.log) {
    nlohmann::json row;
    row["epoch"] = e.epoch;
    row["loss_total"] = e.stats.mean.total;
    row["loss_bce"] = e.stats.mean.bce;
    row["loss_reliability"] = e.stats.mean.reliability;
    nlohmann::json pm = nlohmann::json::object();
    for (const auto& [name, v] : e.stats.mean.per_modality) pm[name] = v;
    row["loss_per_modality"] = pm;
    row["steps"] = e.stats.steps;
    row["skipped"] = e.stats.skipped;
    row["val_auprc"] = e.val_auprc;
    row["val_fmax"] = e.val_fmax;
    j["epochs"].push_back(std::move(row));
  }
  return j;
}

inline TrainOutcome train_model(const Dataset& ds, const Store& store, MeraConfig cfg,
                                const std::function<void(const EpochLog&)>& on_epoch = {}) {
  adopt_dims(cfg, ds);
  cfg.validate();
  cfg.require_seed();
  if (ds.valid.empty()) throw ConfigError(ds.source + ": validation split is empty");
  if (ds.train.empty()) throw ConfigError(ds.source + ": train split is empty");
  if (store.size() > 0 && store.dim() != cfg.seq_dim)
    throw DimensionError("store width " + std::to_string(store.dim()) + " vs manifest width " +
                         std::to_string(cfg.seq_dim));
  check_split_hygiene(ds, store);
  TrainOutcome out;
  out.config = cfg;
  out.initial = init_params(cfg);
  const auto train_items = prepare_items(cfg, store, ds.train, false);
  const auto valid_items = prepare_items(cfg, store, ds.valid, true);
  for (const auto& it : train_items) out.train_skipped += it.context.failed ? 1 : 0;
  out.result = train(cfg, train_items, valid_items, out.initial, on_epoch);
  return out;
}

inline TrainOutcome cmd_train(const std::string& manifest, const std::string& store_path, const MeraConfig& cfg,
                              const std::string& checkpoint_out, const std::string& log_out,
                              const std::function<void(const EpochLog&)>& on_epoch = {}) {
  const Dataset ds = load_manifest(manifest);
  const Store store = load_store(store_path);
  TrainOutcome out = train_model(ds, store, cfg, on_epoch);
  save_checkpoint(checkpoint_out, out.config, out.result.best);
  if (!log_out.empty()) io::write_text(log_out, training_log_json(out).dump(1) + "\n");
  return out;
}

// ---------------------------------------------------------------------------
// Inference

struct InferenceOptions {
  std::vector<std::string> disable_modalities;
  std::vector<std::string> disable_experts;
  std::optional<std::size_t> k;
  std::size_t threads = 1;
};

/// A checkpoint prepared for inference, with inference-time ablations
/// applied: disabled modalities are dropped from fusion and disabled experts
/// are sliced out of the gate.
struct InferenceModel {
  MeraConfig config;
  ParameterStore params;
  std::size_t threads = 1;
};

inline InferenceModel make_inference_model(const Checkpoint& ck, const InferenceOptions& opt) {
  InferenceModel m;
  m.config = ck.config;
  m.params = ck.params;
  m.threads = opt.threads;
  if (opt.k) m.config.k = *opt.k;
  const std::vector<std::string> trained = m.config.experts;
  m.config.disable(opt.disable_modalities, opt.disable_experts);
  if (!m.config.experts.empty() && m.config.experts != trained)
    slice_gate_params(m.params, trained, m.config.experts, m.config.seq_dim, m.config.gate_mode);
  m.config.validate();
  return m;
}

struct ProteinPrediction {
  const ProteinInput* protein = nullptr;
  Prediction prediction;
};

inline std::vector<ProteinPrediction> run_inference(const InferenceModel& model, const Store& store,
                                                    const std::vector<ProteinInput>& proteins) {
  for (const auto& p : proteins)
    if (p.seq.cols() != model.config.seq_dim)
      throw DimensionError("protein '" + p.id + "' embedding width " + std::to_string(p.seq.cols()) +
                           " vs checkpoint width " + std::to_string(model.config.seq_dim));
  return parallel_map(proteins.size(), model.threads, [&](std::size_t i) {
    const ProteinInput& p = proteins[i];
    const RetrievalContext ctx = prepare_retrieval(model.config, store, p, true);
    return ProteinPrediction{&p, predict(model.config, model.params, p, ctx)};
  });
}

inline std::vector<metrics::EvalRecord> to_eval_records(const std::vector<ProteinPrediction>& preds) {
  std::vector<metrics::EvalRecord> out;
  for (const auto& pp : preds) out.push_back({pp.protein->id, pp.prediction.bundle.y_hat, pp.protein->labels});
  return out;
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

/// One line per residue: id, index, fused score, then u for seq, rag and
/// text ("-" where the modality did not take part). Tab separated.
inline std::string format_predictions(const std::vector<ProteinPrediction>& preds) {
  std::string out;
  for (const auto& pp : preds) {
    const ModalityBundle& mb = pp.prediction.bundle.modal;
    const auto& y = pp.prediction.bundle.y_hat;
    for (std::size_t i = 0; i < y.size(); ++i) {
      out += pp.protein->id;
      out += '\t';
      out += std::to_string(i);
      out += '\t';
      out += format_number(y[i]);
      for (Modality m : kAllModalities) {
        out += '\t';
        const std::size_t s = mb.index_of(m);
        out += s < mb.modalities.size() ? format_number(mb.rel(i, s)) : std::string("-");
      }
      out += '\n';
    }
  }
  return out;
}

struct Session {
  Dataset dataset;
  Store store;
  InferenceModel model;
};

inline Session open_session(const std::string& manifest, const std::string& store_path, const std::string& checkpoint,
                            const InferenceOptions& opt) {
  Session s{load_manifest(manifest), load_store(store_path), make_inference_model(load_checkpoint(checkpoint), opt)};
  if (s.dataset.seq_dim != s.model.config.seq_dim)
    throw DimensionError("manifest embedding width " + std::to_string(s.dataset.seq_dim) + " vs checkpoint width " +
                         std::to_string(s.model.config.seq_dim));
  check_split_hygiene(s.dataset, s.store);
  return s;
}

inline std::vector<ProteinInput> select_split(const Dataset& ds, const std::string& split) {
  if (split == "all") {
    std::vector<ProteinInput> all = ds.train;
    all.insert(all.end(), ds.valid.begin(), ds.valid.end());
    all.insert(all.end(), ds.test.begin(), ds.test.end());
    return all;
  }
  return ds.split(parse_split(split));
}

// ---------------------------------------------------------------------------
// eval / predict / calibrate / export-embeddings

inline metrics::MetricReport evaluate_predictions(const std::vector<ProteinPrediction>& preds,
                                                  const metrics::ReportOptions& ropt) {
  const auto recs = to_eval_records(preds);
  return metrics::evaluate(recs, ropt);
}

inline metrics::MetricReport cmd_eval(const Session& s, const std::string& split, const metrics::ReportOptions& ropt) {
  const auto proteins = select_split(s.dataset, split);
  if (proteins.empty()) throw ConfigError(s.dataset.source + ": " + split + " split is empty");
  return evaluate_predictions(run_inference(s.model, s.store, proteins), ropt);
}

inline std::string cmd_predict(const Session& s, const std::string& split) {
  const auto proteins = select_split(s.dataset, split);
  return format_predictions(run_inference(s.model, s.store, proteins));
}

/// Calibration samples over proteins that carry every active modality.
inline std::vector<metrics::CalibrationSample> calibration_samples(const std::vector<ProteinPrediction>& preds,
                                                                   const std::vector<Modality>& modalities) {
  std::vector<metrics::CalibrationSample> out;
  for (const auto& pp : preds) {
    const ModalityBundle& mb = pp.prediction.bundle.modal;
    std::vector<std::size_t> cols;
    for (Modality m : modalities) cols.push_back(mb.index_of(m));
    if (std::any_of(cols.begin(), cols.end(), [&](std::size_t c) { return c >= mb.modalities.size(); })) continue;
    for (std::size_t i = 0; i < pp.prediction.bundle.y_hat.size(); ++i) {
      metrics::CalibrationSample smp;
      smp.y_hat = pp.prediction.bundle.y_hat[i];
      smp.label = pp.protein->labels[i];
      for (std::size_t c : cols) smp.u.push_back(mb.rel(i, c));
      out.push_back(std::move(smp));
    }
  }
  return out;
}

inline std::vector<metrics::CalibrationTable> calibrate_predictions(const std::vector<ProteinPrediction>& preds,
                                                                    const MeraConfig& cfg, double band,
                                                                    std::size_t bins) {
  const auto mods = cfg.active_modalities();
  std::vector<std::string> names;
  for (Modality m : mods) names.push_back(to_string(m));
  const auto samples = calibration_samples(preds, mods);
  return metrics::calibration_report(samples, names, band, bins);
}

inline std::vector<metrics::CalibrationTable> cmd_calibrate(const Session& s, const std::string& split, double band,
                                                            std::size_t bins) {
  const auto proteins = select_split(s.dataset, split);
  if (proteins.empty()) throw ConfigError(s.dataset.source + ": " + split + " split is empty");
  return calibrate_predictions(run_inference(s.model, s.store, proteins), s.model.config, band, bins);
}

struct ExportedEmbeddings {
  Matrix rows;
  std::vector<std::uint8_t> labels;
};

/// Per-residue representations of one kind stacked over proteins.
inline ExportedEmbeddings export_embeddings(const InferenceModel& model, const Store& store,
                                            const std::vector<ProteinInput>& proteins, const std::string& which) {
  const Modality kind = [&] {
    try {
      return parse_modality(which);
    } catch (const ConfigError&) {
      throw ParameterError("unknown embedding kind '" + which + "' (expected seq, rag or text)");
    }
  }();
  if (proteins.empty()) throw EmptyInputError("no proteins to export");
  std::vector<Matrix> blocks;
  if (kind == Modality::Seq) {
    for (const auto& p : proteins) blocks.push_back(p.seq);
  } else {
    if (!model.config.has_modality(kind))
      throw ConfigError("cannot export '" + which + "': modality is disabled");
    for (const auto& pp : run_inference(model, store, proteins)) {
      const auto& rep = kind == Modality::Rag ? pp.prediction.h_rag : pp.prediction.h_text;
      if (!rep) throw ConfigError("protein '" + pp.protein->id + "' has no " + which + " representation");
      blocks.push_back(*rep);
    }
  }
  ExportedEmbeddings out;
  std::size_t total = 0;
  for (const auto& b : blocks) total += b.rows();
  out.rows = Matrix(total, blocks.front().cols());
  std::size_t r = 0;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    for (std::size_t i = 0; i < blocks[k].rows(); ++i, ++r)
      std::copy(blocks[k].row(i).begin(), blocks[k].row(i).end(), out.rows.row(r).begin());
    out.labels.insert(out.labels.end(), proteins[k].labels.begin(), proteins[k].labels.end());
  }
  return out;
}

inline std::string label_sidecar_path(const std::string& out) { return out + ".labels"; }

inline ExportedEmbeddings cmd_export_embeddings(const Session& s, const std::string& split, const std::string& which,
                                                const std::string& out) {
  ExportedEmbeddings ex = export_embeddings(s.model, s.store, select_split(s.dataset, split), which);
  save_embedding(out, ex.rows);
  save_labels(label_sidecar_path(out), ex.labels);
  return ex;
}

}  // namespace mera
