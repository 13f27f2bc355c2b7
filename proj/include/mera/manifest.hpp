#pragma once

// Dataset manifests. A manifest is a JSON object:
//
//   {
//     "seq_dim": 32,            optional; checked against every file
//     "text_dim": 16,           optional
//     "proteins": [
//       {
//         "id": "p0001",
//         "seq": "emb/p0001.seq.emb",       MERAEMB1, n×seq_dim
//         "text": "emb/p0001.text.emb",     optional, m×text_dim
//         "labels": "0010...",              string of 0/1, or an array of 0/1,
//         "labels_file": "p0001.lab",       or a MERALAB1 file (exactly one)
//         "split": "train",                 train | valid | test
//         "cluster": "fam3",                optional
//         "extra": {"peptide": "emb/p0001.pep.emb"}   optional named blocks
//       }
//     ]
//   }
//
// Relative paths resolve against the manifest's directory.

#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mera/embedding_io.hpp"
#include "mera/errors.hpp"
#include "mera/model.hpp"

namespace mera {

enum class Split { Train, Valid, Test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Valid:
      return "valid";
    case Split::Test:
      return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "valid") return Split::Valid;
  if (s == "test") return Split::Test;
  throw FormatError("unknown split '" + s + "' (expected train, valid or test)");
}

struct Dataset {
  std::string source;
  std::size_t seq_dim = 0;
  std::size_t text_dim = 0;
  std::vector<ProteinInput> train, valid, test;

  const std::vector<ProteinInput>& split(Split s) const {
    return s == Split::Train ? train : s == Split::Valid ? valid : test;
  }

  std::size_t size() const { return train.size() + valid.size() + test.size(); }

  std::string split_summary() const {
    const double n = static_cast<double>(std::max<std::size_t>(size(), 1));
    std::ostringstream os;
    os.precision(3);
    os << "splits train=" << train.size() << " (" << train.size() / n << ") valid=" << valid.size() << " ("
       << valid.size() / n << ") test=" << test.size() << " (" << test.size() / n << ")";
    return os.str();
  }
};

namespace detail {

inline std::vector<std::uint8_t> parse_inline_labels(const nlohmann::json& j, const std::string& id) {
  std::vector<std::uint8_t> out;
  if (j.is_string()) {
    for (char ch : j.get<std::string>()) {
      if (ch != '0' && ch != '1') throw FormatError("protein '" + id + "': label string holds '" + ch + "'");
      out.push_back(ch == '1');
    }
  } else if (j.is_array()) {
    for (const auto& v : j) {
      if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1))
        throw FormatError("protein '" + id + "': labels must be 0 or 1");
      out.push_back(static_cast<std::uint8_t>(v.get<int>()));
    }
  } else {
    throw FormatError("protein '" + id + "': labels must be a 0/1 string or array");
  }
  return out;
}

inline std::string labels_to_string(const std::vector<std::uint8_t>& labels) {
  std::string s;
  s.reserve(labels.size());
  for (auto v : labels) s.push_back(v ? '1' : '0');
  return s;
}

}  // namespace detail

/// Parses and validates a manifest, loading every referenced file.
inline Dataset load_manifest(const std::string& path) {
  namespace fs = std::filesystem;
  const auto bytes = io::read_file(path);
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  if (!root.is_object() || !root.contains("proteins") || !root["proteins"].is_array())
    throw FormatError(path + ": manifest needs a \"proteins\" array");
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? p : (base / p).string(); };

  Dataset ds;
  ds.source = path;
  try {
    if (root.contains("seq_dim")) ds.seq_dim = root["seq_dim"].get<std::size_t>();
    if (root.contains("text_dim")) ds.text_dim = root["text_dim"].get<std::size_t>();
    std::set<std::string> ids;
    for (const auto& e : root["proteins"]) {
      if (!e.is_object() || !e.contains("id") || !e.contains("seq") || !e.contains("split"))
        throw FormatError(path + ": every protein needs id, seq and split");
      ProteinInput p;
      p.id = e["id"].get<std::string>();
      if (p.id.empty()) throw FormatError(path + ": empty protein id");
      if (!ids.insert(p.id).second) throw FormatError(path + ": duplicate protein id '" + p.id + "'");
      p.seq = load_embedding(resolve(e["seq"].get<std::string>()));
      if (p.seq.rows() == 0) throw FormatError("protein '" + p.id + "' has zero residues");
      if (ds.seq_dim == 0) ds.seq_dim = p.seq.cols();
      if (p.seq.cols() != ds.seq_dim)
        throw DimensionError("protein '" + p.id + "' sequence width " + std::to_string(p.seq.cols()) +
                             " vs manifest width " + std::to_string(ds.seq_dim));
      if (e.contains("text") && !e["text"].is_null()) {
        Matrix t = load_embedding(resolve(e["text"].get<std::string>()));
        if (ds.text_dim == 0) ds.text_dim = t.cols();
        if (t.cols() != ds.text_dim)
          throw DimensionError("protein '" + p.id + "' text width " + std::to_string(t.cols()) +
                               " vs manifest width " + std::to_string(ds.text_dim));
        p.text = std::move(t);
      }
      const bool inline_labels = e.contains("labels");
      const bool file_labels = e.contains("labels_file");
      if (inline_labels == file_labels)
        throw FormatError("protein '" + p.id + "' needs exactly one of labels / labels_file");
      p.labels = inline_labels ? detail::parse_inline_labels(e["labels"], p.id)
                               : load_labels(resolve(e["labels_file"].get<std::string>()));
      if (p.labels.size() != p.seq.rows())
        throw DimensionError("protein '" + p.id + "': " + std::to_string(p.labels.size()) + " labels for " +
                             std::to_string(p.seq.rows()) + " residues");
      if (e.contains("cluster") && !e["cluster"].is_null()) p.cluster = e["cluster"].get<std::string>();
      if (e.contains("extra")) {
        for (auto it = e["extra"].begin(); it != e["extra"].end(); ++it) {
          Matrix block = load_embedding(resolve(it.value().get<std::string>()));
          if (block.cols() != p.seq.cols())
            throw DimensionError("protein '" + p.id + "' extra block '" + it.key() + "' width " +
                                 std::to_string(block.cols()) + " vs " + std::to_string(p.seq.cols()));
          p.extras.emplace(it.key(), std::move(block));
        }
      }
      switch (parse_split(e["split"].get<std::string>())) {
        case Split::Train:
          ds.train.push_back(std::move(p));
          break;
        case Split::Valid:
          ds.valid.push_back(std::move(p));
          break;
        case Split::Test:
          ds.test.push_back(std::move(p));
          break;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return ds;
}

/// One manifest entry as written by the generator; paths are relative.
struct ManifestEntry {
  std::string id;
  std::string seq_path;
  std::optional<std::string> text_path;
  std::vector<std::uint8_t> labels;
  Split split = Split::Train;
  std::optional<std::string> cluster;
};

inline std::string manifest_text(std::size_t seq_dim, std::size_t text_dim, const std::vector<ManifestEntry>& entries) {
  nlohmann::ordered_json root;
  root["seq_dim"] = seq_dim;
  root["text_dim"] = text_dim;
  root["proteins"] = nlohmann::ordered_json::array();
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["seq"] = e.seq_path;
    if (e.text_path) j["text"] = *e.text_path;
    j["labels"] = detail::labels_to_string(e.labels);
    j["split"] = to_string(e.split);
    if (e.cluster) j["cluster"] = *e.cluster;
    root["proteins"].push_back(std::move(j));
  }
  return root.dump(1) + "\n";
}

}  // namespace mera
