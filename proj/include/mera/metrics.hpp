#pragma once

// Residue-level evaluation: F_max, average precision, ROC AUC, MCC, Hits@k
// and the reliability/error calibration table.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mera/errors.hpp"

namespace mera::metrics {

struct EvalRecord {
  std::string id;
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
};

namespace detail {

struct Scored {
  double score;
  std::uint8_t label;
};

inline std::vector<Scored> pool(std::span<const EvalRecord> records) {
  std::vector<Scored> all;
  for (const auto& r : records) {
    if (r.scores.size() != r.labels.size())
      throw DimensionError("record '" + r.id + "' has " + std::to_string(r.scores.size()) + " scores and " +
                           std::to_string(r.labels.size()) + " labels");
    for (std::size_t i = 0; i < r.scores.size(); ++i) all.push_back({r.scores[i], r.labels[i]});
  }
  // Stable: ties keep pooled input order, which only matters for callers that
  // need a canonical order of equal scores.
  std::stable_sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
  return all;
}

inline std::size_t count_positives(const std::vector<Scored>& v) {
  std::size_t p = 0;
  for (const auto& s : v) p += s.label ? 1 : 0;
  return p;
}

inline double f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t den = 2 * tp + fp + fn;
  return den == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(den);
}

}  // namespace detail

enum class FmaxMode { Micro, Macro };
enum class HitsMode { AnyHit, Recall };

inline std::string to_string(FmaxMode m) { return m == FmaxMode::Micro ? "micro" : "macro"; }
inline std::string to_string(HitsMode m) { return m == HitsMode::AnyHit ? "any" : "recall"; }

inline FmaxMode parse_fmax_mode(const std::string& s) {
  if (s == "micro") return FmaxMode::Micro;
  if (s == "macro") return FmaxMode::Macro;
  throw ConfigError("unknown fmax mode '" + s + "' (expected micro or macro)");
}

inline HitsMode parse_hits_mode(const std::string& s) {
  if (s == "any") return HitsMode::AnyHit;
  if (s == "recall") return HitsMode::Recall;
  throw ConfigError("unknown hits mode '" + s + "' (expected any or recall)");
}

struct FmaxResult {
  double fmax = 0.0;
  double threshold = 0.0;
};

/// Maximum F1 over thresholds drawn from the distinct scores; a residue is
/// called positive when score ≥ threshold. Micro mode pools confusion
/// counts; macro mode averages per-protein F1 over proteins with a positive.
/// The smallest threshold achieving the maximum is reported.
inline FmaxResult fmax(std::span<const EvalRecord> records, FmaxMode mode = FmaxMode::Micro) {
  const auto all = detail::pool(records);
  const std::size_t pos = detail::count_positives(all);
  if (pos == 0) throw MetricError("F_max needs at least one positive residue");
  FmaxResult best{-1.0, 0.0};
  if (mode == FmaxMode::Micro) {
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < all.size();) {
      const double t = all[i].score;
      for (; i < all.size() && all[i].score == t; ++i) (all[i].label ? tp : fp) += 1;
      const double f = detail::f1(tp, fp, pos - tp);
      if (f >= best.fmax) best = {f, t};
    }
    return best;
  }
  std::vector<double> thresholds;
  for (const auto& s : all)
    if (thresholds.empty() || thresholds.back() != s.score) thresholds.push_back(s.score);
  for (double t : thresholds) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : records) {
      std::size_t tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < r.scores.size(); ++i) {
        const bool called = r.scores[i] >= t;
        if (r.labels[i])
          (called ? tp : fn) += 1;
        else if (called)
          ++fp;
      }
      if (tp + fn == 0) continue;
      sum += detail::f1(tp, fp, fn);
      ++n;
    }
    const double f = sum / static_cast<double>(n);
    if (f >= best.fmax) best = {f, t};
  }
  return best;
}

/// Average precision with tied scores grouped: every positive in a tie group
/// receives the precision measured after the whole group.
inline double auprc(std::span<const EvalRecord> records) {
  const auto all = detail::pool(records);
  const std::size_t pos = detail::count_positives(all);
  if (pos == 0) throw MetricError("AUPRC needs at least one positive residue");
  double ap = 0.0;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < all.size();) {
    const double t = all[i].score;
    std::size_t j = i, group_pos = 0;
    for (; j < all.size() && all[j].score == t; ++j) group_pos += all[j].label ? 1 : 0;
    tp += group_pos;
    const double precision = static_cast<double>(tp) / static_cast<double>(j);
    for (std::size_t g = 0; g < group_pos; ++g) ap += precision;
    i = j;
  }
  return ap / static_cast<double>(pos);
}

/// P(score_pos > score_neg) + ½ P(tie), from exact pair counts.
inline double auroc(std::span<const EvalRecord> records) {
  auto all = detail::pool(records);
  const std::size_t pos = detail::count_positives(all);
  const std::size_t neg = all.size() - pos;
  if (pos == 0 || neg == 0) throw MetricError("AUROC needs both positive and negative residues");
  // Walk ascending so the negatives strictly below each group are known.
  std::reverse(all.begin(), all.end());
  std::uint64_t twice_wins = 0;
  std::size_t neg_below = 0;
  for (std::size_t i = 0; i < all.size();) {
    const double t = all[i].score;
    std::size_t j = i, gp = 0, gn = 0;
    for (; j < all.size() && all[j].score == t; ++j) (all[j].label ? gp : gn) += 1;
    twice_wins += static_cast<std::uint64_t>(gp) * (2 * neg_below + gn);
    neg_below += gn;
    i = j;
  }
  return static_cast<double>(twice_wins) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

inline Confusion confusion_at(std::span<const EvalRecord> records, double threshold) {
  Confusion c;
  for (const auto& r : records) {
    if (r.scores.size() != r.labels.size()) throw DimensionError("record '" + r.id + "' length mismatch");
    for (std::size_t i = 0; i < r.scores.size(); ++i) {
      const bool called = r.scores[i] >= threshold;
      if (r.labels[i])
        (called ? c.tp : c.fn) += 1;
      else
        (called ? c.fp : c.tn) += 1;
    }
  }
  return c;
}

/// Matthews correlation; 0 whenever a marginal of the confusion matrix is 0.
inline double mcc(const Confusion& c) {
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
  const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (den == 0.0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(den);
}

inline double mcc(std::span<const EvalRecord> records, double threshold) {
  return mcc(confusion_at(records, threshold));
}

struct HitsResult {
  double value = 0.0;
  std::size_t proteins = 0;
  std::size_t skipped = 0;  // proteins without any positive residue
};

/// Per protein, ranks residues by score (ties by ascending index) and looks
/// at the top k. AnyHit scores 1 if any of them is a true site; Recall scores
/// the fraction of the protein's true sites among them. Averaged over
/// proteins that have at least one true site.
inline HitsResult hits_at_k(std::span<const EvalRecord> records, std::size_t k, HitsMode mode = HitsMode::AnyHit) {
  if (k < 1) throw ParameterError("hits@k needs k >= 1");
  HitsResult res;
  double sum = 0.0;
  for (const auto& r : records) {
    if (r.scores.size() != r.labels.size()) throw DimensionError("record '" + r.id + "' length mismatch");
    const std::size_t positives =
        static_cast<std::size_t>(std::count_if(r.labels.begin(), r.labels.end(), [](auto l) { return l != 0; }));
    if (positives == 0) {
      ++res.skipped;
      continue;
    }
    std::vector<std::size_t> order(r.scores.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t top = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (r.scores[a] != r.scores[b]) return r.scores[a] > r.scores[b];
                        return a < b;
                      });
    std::size_t found = 0;
    for (std::size_t t = 0; t < top; ++t) found += r.labels[order[t]] ? 1 : 0;
    if (mode == HitsMode::AnyHit)
      sum += found > 0 ? 1.0 : 0.0;
    else
      sum += static_cast<double>(found) / static_cast<double>(positives);
    ++res.proteins;
  }
  if (res.proteins > 0) res.value = sum / static_cast<double>(res.proteins);
  return res;
}

// ---------------------------------------------------------------------------
// Reliability calibration

struct CalibrationSample {
  double y_hat = 0.5;
  std::uint8_t label = 0;
  std::vector<double> u;  // one reliability indicator per modality
};

struct CalibrationBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  std::size_t errors = 0;
  double error_rate() const { return count ? static_cast<double>(errors) / static_cast<double>(count) : 0.0; }
};

struct CalibrationTable {
  std::string modality;
  std::vector<CalibrationBin> bins;
  std::size_t included = 0;
  std::size_t nonempty_bins = 0;
  double spearman = 0.0;
  bool empty = true;
};

/// Spearman rank correlation with average ranks for ties. Degenerate input
/// (fewer than two points or a constant series) yields 0.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("spearman inputs differ in length");
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  auto ranks = [n](std::span<const double> v) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j < n && v[idx[j]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j - 1) + 1.0;
      for (std::size_t t = i; t < j; ++t) r[idx[t]] = avg;
      i = j;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

/// Error rate of the fused prediction against each modality's reliability
/// indicator, restricted to confident residues (ŷ > band or ŷ < 1 − band;
/// band ≤ 0.5 keeps everything). Bins are equal-width over the observed u
/// range of the included residues. The Spearman statistic correlates bin
/// index with bin error rate over non-empty bins.
inline std::vector<CalibrationTable> calibration_report(std::span<const CalibrationSample> samples,
                                                        const std::vector<std::string>& modalities,
                                                        double band = 0.8, std::size_t bins = 10) {
  if (bins < 2) throw ParameterError("calibration needs at least 2 bins");
  std::vector<const CalibrationSample*> kept;
  for (const auto& s : samples) {
    if (s.u.size() != modalities.size()) throw DimensionError("calibration sample has wrong modality count");
    if (band <= 0.5 || s.y_hat > band || s.y_hat < 1.0 - band) kept.push_back(&s);
  }
  std::vector<CalibrationTable> out;
  for (std::size_t m = 0; m < modalities.size(); ++m) {
    CalibrationTable t;
    t.modality = modalities[m];
    t.included = kept.size();
    t.empty = kept.empty();
    if (t.empty) {
      out.push_back(std::move(t));
      continue;
    }
    double lo = kept[0]->u[m], hi = lo;
    for (const auto* s : kept) {
      lo = std::min(lo, s->u[m]);
      hi = std::max(hi, s->u[m]);
    }
    const double width = (hi - lo) / static_cast<double>(bins);
    t.bins.resize(bins);
    for (std::size_t b = 0; b < bins; ++b) {
      t.bins[b].lo = lo + width * static_cast<double>(b);
      t.bins[b].hi = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
    }
    for (const auto* s : kept) {
      std::size_t b = width > 0.0 ? static_cast<std::size_t>((s->u[m] - lo) / width) : 0;
      b = std::min(b, bins - 1);
      t.bins[b].count += 1;
      const bool predicted = s->y_hat >= 0.5;
      if (predicted != (s->label != 0)) t.bins[b].errors += 1;
    }
    std::vector<double> xs, ys;
    for (std::size_t b = 0; b < bins; ++b) {
      if (t.bins[b].count == 0) continue;
      xs.push_back(static_cast<double>(b));
      ys.push_back(t.bins[b].error_rate());
    }
    t.nonempty_bins = xs.size();
    t.spearman = spearman(xs, ys);
    out.push_back(std::move(t));
  }
  return out;
}

inline std::string format_calibration(const std::vector<CalibrationTable>& tables) {
  std::ostringstream os;
  os << std::setprecision(6);
  for (const auto& t : tables) {
    os << "# modality=" << t.modality << " included=" << t.included << " nonempty_bins=" << t.nonempty_bins
       << " spearman=" << t.spearman << "\n";
    if (t.empty) {
      os << "EMPTY\n";
      continue;
    }
    os << "bin\tu_lo\tu_hi\tcount\terrors\terror_rate\n";
    for (std::size_t b = 0; b < t.bins.size(); ++b) {
      const auto& bin = t.bins[b];
      os << b << '\t' << bin.lo << '\t' << bin.hi << '\t' << bin.count << '\t' << bin.errors << '\t'
         << bin.error_rate() << "\n";
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Aggregate report

struct ReportOptions {
  FmaxMode fmax_mode = FmaxMode::Micro;
  HitsMode hits_mode = HitsMode::AnyHit;
};

struct MetricReport {
  double fmax = 0.0;
  double threshold_at_fmax = 0.0;
  double auprc = 0.0;
  std::optional<double> auroc;
  double mcc = 0.0;
  double hits1 = 0.0, hits5 = 0.0, hits10 = 0.0;
  std::size_t proteins = 0, residues = 0, positives = 0;
  std::size_t hits_skipped = 0;
  ReportOptions options;

  std::string to_text() const {
    std::ostringstream os;
    os << std::setprecision(9);
    os << "fmax=" << fmax << "\n"
       << "threshold_at_fmax=" << threshold_at_fmax << "\n"
       << "auprc=" << auprc << "\n"
       << "auroc=" << (auroc ? std::to_string(*auroc) : std::string("n/a")) << "\n"
       << "mcc=" << mcc << "\n"
       << "hits@1=" << hits1 << "\n"
       << "hits@5=" << hits5 << "\n"
       << "hits@10=" << hits10 << "\n"
       << "proteins=" << proteins << "\n"
       << "residues=" << residues << "\n"
       << "positives=" << positives << "\n"
       << "hits_skipped_proteins=" << hits_skipped << "\n"
       << "fmax_mode=" << to_string(options.fmax_mode) << "\n"
       << "hits_mode=" << to_string(options.hits_mode) << "\n";
    return os.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["fmax"] = fmax;
    j["threshold_at_fmax"] = threshold_at_fmax;
    j["auprc"] = auprc;
    j["auroc"] = auroc ? nlohmann::json(*auroc) : nlohmann::json(nullptr);
    j["mcc"] = mcc;
    j["hits@1"] = hits1;
    j["hits@5"] = hits5;
    j["hits@10"] = hits10;
    j["counts"] = {{"proteins", proteins}, {"residues", residues}, {"positives", positives},
                   {"hits_skipped_proteins", hits_skipped}};
    j["fmax_mode"] = to_string(options.fmax_mode);
    j["hits_mode"] = to_string(options.hits_mode);
    return j;
  }
};

inline MetricReport evaluate(std::span<const EvalRecord> records, const ReportOptions& opt = {}) {
  MetricReport rep;
  rep.options = opt;
  rep.proteins = records.size();
  for (const auto& r : records) {
    rep.residues += r.labels.size();
    rep.positives += static_cast<std::size_t>(std::count_if(r.labels.begin(), r.labels.end(), [](auto l) { return l != 0; }));
  }
  const auto f = fmax(records, opt.fmax_mode);
  rep.fmax = f.fmax;
  rep.threshold_at_fmax = f.threshold;
  rep.auprc = auprc(records);
  if (rep.positives < rep.residues) rep.auroc = auroc(records);
  rep.mcc = mcc(records, f.threshold);
  const auto h1 = hits_at_k(records, 1, opt.hits_mode);
  rep.hits1 = h1.value;
  rep.hits5 = hits_at_k(records, 5, opt.hits_mode).value;
  rep.hits10 = hits_at_k(records, 10, opt.hits_mode).value;
  rep.hits_skipped = h1.skipped;
  return rep;
}

}  // namespace mera::metrics
