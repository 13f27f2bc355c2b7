// Command-line front end: synth, build-db, train, eval, predict, calibrate,
// export-embeddings.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mera/pipeline.hpp"

namespace {

struct Common {
  std::string manifest;
  std::string store;
  std::string checkpoint;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> k;
  std::vector<std::string> disable_modality;
  std::vector<std::string> disable_expert;
  std::string split = "test";
  std::size_t threads = 1;
};

mera::MeraConfig load_config(const Common& c) {
  mera::MeraConfig cfg;
  if (!c.config.empty()) {
    const auto bytes = mera::io::read_file(c.config);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
      throw mera::ConfigError(c.config + ": " + e.what());
    }
    mera::apply_json(cfg, j);
  }
  if (c.seed) cfg.seed = *c.seed;
  if (c.k) cfg.k = *c.k;
  cfg.disable(c.disable_modality, c.disable_expert);
  return cfg;
}

mera::InferenceOptions inference_options(const Common& c) {
  mera::InferenceOptions o;
  o.disable_modalities = c.disable_modality;
  o.disable_experts = c.disable_expert;
  o.k = c.k;
  o.threads = c.threads;
  return o;
}

void write_or_print(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-")
    std::cout << text;
  else
    mera::io::write_text(out, text);
}

void add_inference_flags(CLI::App* sub, Common& c) {
  sub->add_option("--manifest", c.manifest, "Dataset manifest (JSON)")->required();
  sub->add_option("--store", c.store, "Protein store file")->required();
  sub->add_option("--checkpoint", c.checkpoint, "Model checkpoint")->required();
  sub->add_option("--disable-modality", c.disable_modality, "Drop a modality at inference (repeatable)");
  sub->add_option("--disable-expert", c.disable_expert, "Drop an expert at inference (repeatable)");
  sub->add_option("--k", c.k, "Override the retrieval depth");
  sub->add_option("--split", c.split, "Split to process: train, valid, test or all")
      ->check(CLI::IsMember({"train", "valid", "test", "all"}));
  sub->add_option("--threads", c.threads, "Inference worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--out", c.out, "Output path (stdout when omitted)");
  sub->add_option("--seed", c.seed, "Accepted for symmetry; inference is deterministic");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrieval-augmented, reliability-fused residue active-site predictor"};
  app.require_subcommand(1);
  Common c;

  mera::SynthConfig synth;
  bool noise_text = false;
  auto* s_synth = app.add_subcommand("synth", "Generate a synthetic dataset with manifest");
  s_synth->add_option("--out", c.out, "Output directory")->required();
  s_synth->add_option("--seed", synth.seed, "Generator seed")->required();
  s_synth->add_option("--train", synth.n_train, "Train proteins");
  s_synth->add_option("--valid", synth.n_valid, "Validation proteins");
  s_synth->add_option("--test", synth.n_test, "Test proteins");
  s_synth->add_option("--length", synth.length, "Residues per protein");
  s_synth->add_option("--dim", synth.seq_dim, "Residue embedding width");
  s_synth->add_option("--text-dim", synth.text_dim, "Text embedding width");
  s_synth->add_option("--text-tokens", synth.text_tokens, "Text tokens per protein");
  s_synth->add_option("--families", synth.families, "Protein families");
  s_synth->add_option("--types", synth.types, "Residue types");
  s_synth->add_option("--difficulty", synth.difficulty, "Residue noise level in [0,1]");
  s_synth->add_option("--positive-rate", synth.positive_rate, "Fraction of active residues");
  s_synth->add_option("--family-strength", synth.family_strength, "Scale of the per-family residue offset");
  s_synth->add_option("--family-bias-range", synth.family_bias_range, "Half-width of the family bias interval");
  s_synth->add_option("--residue-noise", synth.residue_noise, "Residue noise scale at difficulty 1");
  s_synth->add_option("--text-noise", synth.text_noise, "Noise added to informative text tokens");
  s_synth->add_flag("--noise-text", noise_text, "Make text tokens uninformative");

  auto* s_build = app.add_subcommand("build-db", "Build the protein store from the train split");
  s_build->add_option("--manifest", c.manifest, "Dataset manifest (JSON)")->required();
  s_build->add_option("--out", c.out, "Store output path")->required();

  std::string log_path;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  auto* s_train = app.add_subcommand("train", "Train a model and write the best checkpoint");
  s_train->add_option("--manifest", c.manifest, "Dataset manifest (JSON)")->required();
  s_train->add_option("--store", c.store, "Protein store file")->required();
  s_train->add_option("--out,--checkpoint", c.out, "Checkpoint output path")->required();
  s_train->add_option("--config", c.config, "JSON configuration overriding defaults");
  s_train->add_option("--seed", c.seed, "Training seed (required unless set in the config)");
  s_train->add_option("--k", c.k, "Retrieval depth");
  s_train->add_option("--epochs", epochs, "Number of epochs");
  s_train->add_option("--learning-rate", lr, "Adam learning rate");
  s_train->add_option("--disable-modality", c.disable_modality, "Train without a modality (repeatable)");
  s_train->add_option("--disable-expert", c.disable_expert, "Train without an expert (repeatable)");
  s_train->add_option("--log", log_path, "Per-epoch training log (JSON); defaults to <out>.log.json");

  std::string hits_mode = "any", fmax_mode = "micro";
  bool as_json = false;
  auto* s_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  add_inference_flags(s_eval, c);
  s_eval->add_option("--hits-mode", hits_mode, "Hits@k interpretation: any or recall")
      ->check(CLI::IsMember({"any", "recall"}));
  s_eval->add_option("--fmax-mode", fmax_mode, "F_max pooling: micro or macro")
      ->check(CLI::IsMember({"micro", "macro"}));
  s_eval->add_flag("--json", as_json, "Write the report as JSON");

  auto* s_predict = app.add_subcommand("predict", "Write per-residue scores and reliability indicators");
  add_inference_flags(s_predict, c);

  double band = 0.8;
  std::size_t bins = 10;
  auto* s_cal = app.add_subcommand("calibrate", "Error rate against reliability on confident residues");
  add_inference_flags(s_cal, c);
  s_cal->add_option("--band", band, "Confidence band: keep y > band or y < 1 - band");
  s_cal->add_option("--bins", bins, "Number of reliability bins");

  std::string which;
  auto* s_export = app.add_subcommand("export-embeddings", "Export per-residue representations");
  add_inference_flags(s_export, c);
  s_export->add_option("--which", which, "Representation: seq, rag or text")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*s_synth) {
      synth.noise_text = noise_text;
      std::cout << mera::cmd_synth(synth, c.out) << "\n";
    } else if (*s_build) {
      const mera::Store s = mera::cmd_build_db(c.manifest, c.out);
      std::cerr << "store: " << s.size() << " records of width " << s.dim() << "\n";
    } else if (*s_train) {
      mera::MeraConfig cfg = load_config(c);
      if (epochs) cfg.epochs = *epochs;
      if (lr) cfg.learning_rate = *lr;
      if (log_path.empty()) log_path = c.out + ".log.json";
      const auto out = mera::cmd_train(c.manifest, c.store, cfg, c.out, log_path, [](const mera::EpochLog& e) {
        std::cerr << "epoch " << e.epoch << " loss=" << e.stats.mean.total << " bce=" << e.stats.mean.bce
                  << " rel=" << e.stats.mean.reliability << " val_auprc=" << e.val_auprc
                  << (e.stats.skipped ? " skipped=" + std::to_string(e.stats.skipped) : "") << "\n";
      });
      std::cerr << "best epoch " << out.result.best_epoch << " val_auprc=" << out.result.best_val_auprc << "\n";
    } else if (*s_eval) {
      const auto session = mera::open_session(c.manifest, c.store, c.checkpoint, inference_options(c));
      mera::metrics::ReportOptions ro;
      ro.hits_mode = mera::metrics::parse_hits_mode(hits_mode);
      ro.fmax_mode = mera::metrics::parse_fmax_mode(fmax_mode);
      const auto rep = mera::cmd_eval(session, c.split, ro);
      write_or_print(c.out, as_json ? rep.to_json().dump(1) + "\n" : rep.to_text());
    } else if (*s_predict) {
      const auto session = mera::open_session(c.manifest, c.store, c.checkpoint, inference_options(c));
      write_or_print(c.out, mera::cmd_predict(session, c.split));
    } else if (*s_cal) {
      const auto session = mera::open_session(c.manifest, c.store, c.checkpoint, inference_options(c));
      write_or_print(c.out, mera::metrics::format_calibration(mera::cmd_calibrate(session, c.split, band, bins)));
    } else if (*s_export) {
      if (c.out.empty()) throw mera::ConfigError("export-embeddings needs --out");
      const auto session = mera::open_session(c.manifest, c.store, c.checkpoint, inference_options(c));
      const auto ex = mera::cmd_export_embeddings(session, c.split, which, c.out);
      std::cerr << "exported " << ex.rows.rows() << " rows of width " << ex.rows.cols() << "\n";
    }
  } catch (const mera::Error& e) {
    std::cerr << "mera: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "mera: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
