// Acceptance run: one PASS or FAIL line per criterion, non-zero exit status
// when any criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fixtures.hpp"
#include "mera/pipeline.hpp"
#include "oracles.hpp"

using namespace mera;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Clock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Component-level criteria

Outcome formula_suite(const std::string& unit_tests, const std::string& work) {
  if (unit_tests.empty()) return {false, "no unit test binary given (--unit-tests)"};
  const std::string log = work + "/formula_suite.log";
  const std::string filter =
      "-Synth.*:BuildDb.*:Manifest.*:EmbeddingIo.*:ParallelMap.*:Pipeline.*:PipelineRun.*";
  const std::string cmd = "\"" + unit_tests + "\" --gtest_filter='" + filter + "' > \"" + log + "\" 2>&1";
  const Clock clock;
  const int rc = std::system(cmd.c_str());
  const double t = clock.seconds();
  return {rc == 0 && t < 10.0, "exit status " + std::to_string(rc) + ", " + fmt(t) + " s (limit 10 s), log " + log};
}

Outcome gradient_suite() {
  const Clock clock;
  Rng rng(101);
  const auto proteins = fixture::toy_proteins(rng, 5, 6, 8, 4);
  const Store store = fixture::toy_store(proteins);
  MeraConfig cfg = fixture::toy_config(8, 4, 5);
  ParameterStore p = init_params(cfg);
  std::vector<RetrievalContext> ctxs;
  for (std::size_t j = 0; j < 2; ++j) ctxs.push_back(prepare_retrieval(cfg, store, proteins[j], false));
  auto loss = [&](ad::Tape& t, ParameterStore& ps) {
    std::optional<ad::Var> total;
    for (std::size_t j = 0; j < 2; ++j) {
      auto fw = ad::forward(t, cfg, ps, proteins[j], ctxs[j]);
      ad::Var l = build_loss(fw.rmf, proteins[j].labels, cfg).total;
      total = total ? ad::add(*total, l) : l;
    }
    return *total;
  };
  const auto r = ad::finite_diff_check(loss, p);
  const double t = clock.seconds();
  const bool ok = r.max_relative_error < 1e-4 && r.checked > 0 && t < 60.0;
  return {ok, "max relative error " + fmt(r.max_relative_error) + " over " + std::to_string(r.checked) +
                  " coordinates (" + std::to_string(r.skipped_kinks) + " skipped at kinks), worst " +
                  r.worst_parameter + "[" + std::to_string(r.worst_index) + "], " + fmt(t) + " s"};
}

Outcome retrieval_oracle() {
  const Clock clock;
  Rng rng(202);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 1 + rng.below(200);
    const std::size_t dim = 1 + rng.below(32);
    const bool clusters = trial % 4 == 0;
    std::vector<ProteinRecord> recs;
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t n = 1 + rng.below(6);
      std::optional<std::string> cl;
      if (clusters) cl = "c" + std::to_string(rng.below(3));
      recs.push_back(ProteinRecord::make("r" + std::to_string(j), oracle::random_matrix(rng, n, dim),
                                         {rng.below(n)}, cl));
    }
    const Store s = build_store(recs);
    const Matrix q = oracle::random_matrix(rng, 1, dim);
    RetrieveOptions opt;
    opt.k = 1 + rng.below(10);
    const std::string ex = "r" + std::to_string(rng.below(m));
    const std::string cl = "c" + std::to_string(rng.below(3));
    if (trial % 2) opt.exclude_id = ex;
    if (clusters) opt.cluster_id = cl;
    const auto want = oracle::full_scan_topk(recs, q, opt.k, trial % 2 ? &ex : nullptr, clusters ? &cl : nullptr);
    try {
      if (s.retrieve(q, opt).ids() != want) ++mismatches;
    } catch (const StoreError&) {
      if (!want.empty()) ++mismatches;
    }
  }
  const double t = clock.seconds();
  return {mismatches == 0 && t < 30.0,
          std::to_string(mismatches) + " mismatches in 1000 stores, " + fmt(t) + " s (limit 30 s)"};
}

Outcome metric_oracles() {
  const Clock clock;
  Rng rng(303);
  std::size_t bad = 0;
  auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12; };
  for (int trial = 0; trial < 500; ++trial) {
    auto recs = oracle::random_records(rng, 200);
    recs[0].labels[0] = 1;
    const auto f = metrics::fmax(recs);
    const auto want_f = oracle::exhaustive_fmax(recs);
    if (!near(f.fmax, want_f.first) || f.threshold != want_f.second) ++bad;
    if (!near(metrics::auprc(recs), oracle::average_precision(recs))) ++bad;
    const auto flat = oracle::flatten(recs);
    if (std::count(flat.y.begin(), flat.y.end(), 0) > 0 && !near(metrics::auroc(recs), oracle::pair_auroc(recs)))
      ++bad;
    if (!near(metrics::mcc(recs, f.threshold), oracle::direct_mcc(recs, f.threshold))) ++bad;
    for (std::size_t k : {1, 5, 10})
      if (metrics::hits_at_k(recs, k).value != oracle::sorted_hits(recs, k)) ++bad;
  }
  const double t = clock.seconds();
  return {bad == 0 && t < 30.0, std::to_string(bad) + " disagreements over 500 instances, " + fmt(t) + " s"};
}

Outcome evidential_invariants() {
  Rng rng(404);
  std::size_t violations = 0;
  for (int t = 0; t < 100000; ++t) {
    const std::size_t S = 2 + rng.below(3);
    std::vector<double> p(S), w(S), u(S);
    double sum = 0.0;
    for (double& v : p) v = rng.uniform();
    for (double& v : w) sum += (v = -std::log(1.0 - rng.uniform()));
    for (double& v : w) v /= sum;
    for (double& v : u) v = rng.uniform();

    const auto m = evidence_mass(p);
    if (std::abs(std::accumulate(m.begin(), m.end(), 0.0) - 1.0) > 1e-9) ++violations;
    for (double c : credibility(w))
      if (!(c >= 0.0 && c <= 1.0)) ++violations;
    const double c = rng.uniform();
    if (std::abs(reliability(c) - reliability(1.0 - c)) > 1e-12) ++violations;
    const auto e = fusion_weights(u);
    if (std::abs(std::accumulate(e.begin(), e.end(), 0.0) - 1.0) > 1e-9) ++violations;
    for (std::size_t a = 0; a < S; ++a)
      for (std::size_t b = 0; b < S; ++b)
        if (u[a] < u[b] && !(e[a] > e[b])) ++violations;
  }
  return {violations == 0, std::to_string(violations) + " violations over 100000 points"};
}

// ---------------------------------------------------------------------------
// Pipeline-level criteria

constexpr std::size_t kEpochs = 30;

MeraConfig base_model() {
  MeraConfig c;
  c.epochs = kEpochs;
  c.seed = 1;
  return c;
}

struct Workspace {
  std::string dir, manifest, store;
};

Workspace prepare_data(const std::string& root, const std::string& name, bool noise_text) {
  SynthConfig sc;
  sc.seed = 7;
  sc.noise_text = noise_text;
  Workspace w;
  w.dir = root + "/" + name;
  fs::remove_all(w.dir);
  w.manifest = cmd_synth(sc, w.dir);
  w.store = w.dir + "/store.bin";
  cmd_build_db(w.manifest, w.store);
  return w;
}

std::string train_to(const Workspace& w, const std::string& name, MeraConfig cfg) {
  const std::string ckpt = w.dir + "/" + name + ".ckpt";
  cmd_train(w.manifest, w.store, cfg, ckpt, "");
  return ckpt;
}

double test_auprc(const Workspace& w, const std::string& ckpt, const InferenceOptions& opt = {}) {
  return cmd_eval(open_session(w.manifest, w.store, ckpt, opt), "test", {}).auprc;
}

struct EndToEnd {
  Workspace data;
  std::string full_ckpt;
  double full = 0.0;
  double seq_only = 0.0;
};

Outcome synthetic_end_to_end(EndToEnd& run, const std::string& root) {
  const Clock clock;
  run.data = prepare_data(root, "clean", false);
  run.full_ckpt = train_to(run.data, "full", base_model());
  MeraConfig seq = base_model();
  seq.disable({"rag", "text"}, {});
  const std::string seq_ckpt = train_to(run.data, "seq_only", seq);
  run.full = test_auprc(run.data, run.full_ckpt);
  run.seq_only = test_auprc(run.data, seq_ckpt);
  const double t = clock.seconds();
  const bool ok = run.full >= 0.85 && run.full >= run.seq_only + 0.03 && t < 900.0;
  return {ok, "full AUPRC " + fmt(run.full) + " (need >= 0.85), seq-only " + fmt(run.seq_only) + ", gap " +
                  fmt(run.full - run.seq_only) + " (need >= 0.03), " + fmt(t) + " s"};
}

Outcome reliability_monotonicity(const std::string& root) {
  const Workspace w = prepare_data(root, "noise_text", true);
  const std::string ckpt = train_to(w, "full", base_model());
  const auto tables = cmd_calibrate(open_session(w.manifest, w.store, ckpt, {}), "test", 0.8, 10);
  for (const auto& t : tables) {
    if (t.modality != "text") continue;
    const bool ok = !t.empty && t.spearman >= 0.0 && t.nonempty_bins >= 5;
    return {ok, "text modality Spearman " + fmt(t.spearman) + " (need >= 0) over " +
                    std::to_string(t.nonempty_bins) + " non-empty bins (need >= 5), " + std::to_string(t.included) +
                    " confident residues"};
  }
  return {false, "no calibration table for the text modality"};
}

Outcome determinism(const EndToEnd& run) {
  MeraConfig cfg = base_model();
  cfg.epochs = 3;
  const std::string a = run.data.dir + "/det_a.ckpt", b = run.data.dir + "/det_b.ckpt";
  cmd_train(run.data.manifest, run.data.store, cfg, a, "");
  cmd_train(run.data.manifest, run.data.store, cfg, b, "");
  const bool same_ckpt = io::read_file(a) == io::read_file(b);
  InferenceOptions one, four;
  four.threads = 4;
  const std::string p1 = cmd_predict(open_session(run.data.manifest, run.data.store, a, one), "test");
  const std::string p2 = cmd_predict(open_session(run.data.manifest, run.data.store, a, one), "test");
  const std::string p4 = cmd_predict(open_session(run.data.manifest, run.data.store, a, four), "test");
  const bool same_pred = p1 == p2 && p1 == p4 && !p1.empty();
  return {same_ckpt && same_pred, std::string("checkpoints ") + (same_ckpt ? "identical" : "differ") +
                                      ", predictions " + (same_pred ? "identical" : "differ") +
                                      " (repeat and 4 threads)"};
}

Outcome ablation_structure(const EndToEnd& run) {
  std::vector<std::string> notes;
  bool ok = true;
  const std::size_t dim = load_checkpoint(run.full_ckpt).config.seq_dim;
  auto record = [&](const std::string& what, double auprc) {
    const bool within = auprc <= run.full + 0.02;
    ok = ok && within;
    notes.push_back(what + " " + fmt(auprc) + (within ? "" : " (too high)"));
  };
  try {
    for (const std::string e : {"seq", "chain", "act"}) {
      InferenceOptions opt;
      opt.disable_experts = {e};
      const Session s = open_session(run.data.manifest, run.data.store, run.full_ckpt, opt);
      const std::size_t rows = s.model.params.value("gate.W1").rows();
      const std::size_t cols = s.model.params.value("gate.W2").cols();
      if (rows != 2 * dim || cols != 2 * dim) {
        ok = false;
        notes.push_back("gate after removing " + e + " is " + std::to_string(rows) + "->" + std::to_string(cols));
      }
      cmd_eval(s, "test", {});
      MeraConfig cfg = base_model();
      cfg.disable({}, {e});
      record("w/o expert " + e, test_auprc(run.data, train_to(run.data, "no_expert_" + e, cfg)));
    }
    for (const std::string m : {"seq", "rag", "text"}) {
      InferenceOptions opt;
      opt.disable_modalities = {m};
      cmd_eval(open_session(run.data.manifest, run.data.store, run.full_ckpt, opt), "test", {});
      MeraConfig cfg = base_model();
      cfg.disable({m}, {});
      record("w/o modality " + m, test_auprc(run.data, train_to(run.data, "no_modality_" + m, cfg)));
    }
  } catch (const Error& e) {
    return {false, std::string("crashed: ") + e.what()};
  }
  std::string detail = "full " + fmt(run.full);
  for (const auto& n : notes) detail += "; " + n;
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MERA acceptance run"};
  std::string unit_tests;
  std::string work = (fs::temp_directory_path() / "mera_acceptance").string();
  app.add_option("--unit-tests", unit_tests, "Path to the unit test binary");
  app.add_option("--work", work, "Scratch directory for generated data");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  int failures = 0;
  auto report = [&](const std::string& name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  };

  EndToEnd run;
  report("formula-suite", [&] { return formula_suite(unit_tests, work); });
  report("gradient-suite", gradient_suite);
  report("retrieval-oracle", retrieval_oracle);
  report("metric-oracles", metric_oracles);
  report("evidential-invariants", evidential_invariants);
  report("synthetic-end-to-end", [&] { return synthetic_end_to_end(run, work); });
  report("reliability-monotonicity", [&] { return reliability_monotonicity(work); });
  report("determinism", [&] { return determinism(run); });
  report("ablation-structure", [&] { return ablation_structure(run); });
  return failures == 0 ? 0 : 1;
}
