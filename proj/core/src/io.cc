#include "ahgc/io.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "ahgc/error.h"

namespace ahgc {
namespace {

class CsvReader {
 public:
  CsvReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  // Next non-empty row split on commas; false at end of input.
  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      fields.clear();
      std::size_t start = 0;
      while (true) {
        const auto comma = line.find(',', start);
        fields.push_back(line.substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& message) const { throw ParseError(source_, line_, message); }

  void expect_header(const std::vector<std::string>& expected) {
    std::vector<std::string> fields;
    if (!next(fields)) fail("missing header");
    if (fields != expected) fail("expected header '" + join(expected) + "'");
  }

  template <class T>
  T integer(const std::string& text, const char* what) const {
    T value{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      fail(std::string("invalid ") + what + " '" + text + "'");
    }
    return value;
  }

  double real(const std::string& text, const char* what) const {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
      fail(std::string("invalid ") + what + " '" + text + "'");
    }
    return value;
  }

  std::size_t line() const noexcept { return line_; }

  static std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
    return s;
  }

 private:
  std::istream& in_;
  std::string source_;
  std::size_t line_ = 0;
};

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string() + " for reading");
  return in;
}

std::optional<int> parse_label(const CsvReader& r, const std::string& text) {
  if (text == "-") return std::nullopt;
  const int v = r.integer<int>(text, "label");
  if (v < 0) r.fail("label out of range: " + text);
  return v;
}

std::string label_text(const std::optional<int>& label) { return label ? std::to_string(*label) : "-"; }

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, ptr);
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_dataset(std::ostream& out, const Dataset& ds) {
  validate(ds);
  out << "id,split,label";
  for (std::size_t f = 0; f < ds.dim(); ++f) out << ",f" << f;
  out << '\n';
  for (const auto& r : ds.records) {
    out << r.id << ',' << (r.split == Split::kLabeled ? 'L' : 'U') << ',' << label_text(r.label);
    for (double x : r.feature) out << ',' << format_double(x);
    out << '\n';
  }
}

Dataset read_dataset(std::istream& in, const std::string& source, std::optional<int> num_classes) {
  CsvReader reader(in, source);
  std::vector<std::string> fields;
  if (!reader.next(fields)) reader.fail("missing header");
  if (fields.size() < 4 || fields[0] != "id" || fields[1] != "split" || fields[2] != "label") {
    reader.fail("header must start with 'id,split,label' followed by at least one feature column");
  }
  const std::size_t dim = fields.size() - 3;
  for (std::size_t f = 0; f < dim; ++f) {
    if (fields[3 + f] != "f" + std::to_string(f)) reader.fail("expected feature column 'f" + std::to_string(f) + "'");
  }

  Dataset ds;
  std::set<std::int64_t> seen;
  std::vector<std::size_t> label_lines;
  int max_label = -1;
  while (reader.next(fields)) {
    if (fields.size() != dim + 3) {
      reader.fail("expected " + std::to_string(dim + 3) + " columns, found " + std::to_string(fields.size()));
    }
    EmbeddingRecord r;
    r.id = reader.integer<std::int64_t>(fields[0], "id");
    if (r.id < 0) reader.fail("negative id");
    if (!seen.insert(r.id).second) reader.fail("duplicate id " + fields[0]);
    if (fields[1] == "L") {
      r.split = Split::kLabeled;
    } else if (fields[1] == "U") {
      r.split = Split::kUnlabeled;
    } else {
      reader.fail("split must be L or U, found '" + fields[1] + "'");
    }
    r.label = parse_label(reader, fields[2]);
    if (r.split == Split::kLabeled && !r.label) reader.fail("Labeled row without a label");
    if (r.split == Split::kUnlabeled && r.label) reader.fail("Unlabeled row carries a label");
    if (r.label) {
      if (num_classes && *r.label >= *num_classes) {
        reader.fail("label " + fields[2] + " out of range for " + std::to_string(*num_classes) + " classes");
      }
      max_label = std::max(max_label, *r.label);
    }
    r.feature.reserve(dim);
    for (std::size_t f = 0; f < dim; ++f) r.feature.push_back(reader.real(fields[3 + f], "feature value"));
    ds.records.push_back(std::move(r));
  }
  if (ds.records.empty()) reader.fail("no records");
  ds.num_classes = num_classes ? *num_classes : max_label + 1;
  return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ostringstream out;
  write_dataset(out, dataset);
  write_text(path, out.str());
}

Dataset load_dataset(const std::filesystem::path& path, std::optional<int> num_classes) {
  auto in = open_in(path);
  return read_dataset(in, path.string(), num_classes);
}

void save_origins(const std::filesystem::path& path, const Dataset& dataset) {
  std::ostringstream out;
  out << "id,origin\n";
  for (const auto& r : dataset.records) {
    if (!r.origin) throw ValidationError("origin", "record " + std::to_string(r.id) + " has no origin");
    out << r.id << ',' << (*r.origin == Origin::kId ? "ID" : "OOD") << '\n';
  }
  write_text(path, out.str());
}

std::map<std::int64_t, Origin> load_origins(const std::filesystem::path& path) {
  auto in = open_in(path);
  CsvReader reader(in, path.string());
  reader.expect_header({"id", "origin"});
  std::map<std::int64_t, Origin> out;
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (f.size() != 2) reader.fail("expected 2 columns");
    const auto id = reader.integer<std::int64_t>(f[0], "id");
    Origin o{};
    if (f[1] == "ID") {
      o = Origin::kId;
    } else if (f[1] == "OOD") {
      o = Origin::kOod;
    } else {
      reader.fail("origin must be ID or OOD, found '" + f[1] + "'");
    }
    if (!out.emplace(id, o).second) reader.fail("duplicate id " + f[0]);
  }
  return out;
}

void save_truth(const std::filesystem::path& path, const Dataset& dataset) {
  std::ostringstream out;
  out << "id,true_label\n";
  for (const auto& r : dataset.records) out << r.id << ',' << label_text(r.true_label) << '\n';
  write_text(path, out.str());
}

std::map<std::int64_t, std::optional<int>> load_truth(const std::filesystem::path& path) {
  auto in = open_in(path);
  CsvReader reader(in, path.string());
  reader.expect_header({"id", "true_label"});
  std::map<std::int64_t, std::optional<int>> out;
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (f.size() != 2) reader.fail("expected 2 columns");
    const auto id = reader.integer<std::int64_t>(f[0], "id");
    if (!out.emplace(id, parse_label(reader, f[1])).second) reader.fail("duplicate id " + f[0]);
  }
  return out;
}

void attach_origins(Dataset& dataset, const std::map<std::int64_t, Origin>& origins) {
  for (auto& r : dataset.records) {
    const auto it = origins.find(r.id);
    if (it == origins.end()) throw ValidationError("origin", "no origin for record " + std::to_string(r.id));
    r.origin = it->second;
  }
}

void attach_truth(Dataset& dataset, const std::map<std::int64_t, std::optional<int>>& truth) {
  for (auto& r : dataset.records) {
    const auto it = truth.find(r.id);
    if (it == truth.end()) throw ValidationError("true_label", "no entry for record " + std::to_string(r.id));
    r.true_label = it->second;
  }
}

void save_pseudo_labels(const std::filesystem::path& path, std::span<const PseudoLabel> labels) {
  std::ostringstream out;
  out << "id,pseudo_label,epoch_assigned\n";
  for (const auto& p : labels) out << p.id << ',' << p.label << ',' << p.epoch << '\n';
  write_text(path, out.str());
}

std::vector<PseudoLabel> load_pseudo_labels(const std::filesystem::path& path) {
  auto in = open_in(path);
  CsvReader reader(in, path.string());
  reader.expect_header({"id", "pseudo_label", "epoch_assigned"});
  std::vector<PseudoLabel> out;
  std::set<std::int64_t> seen;
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (f.size() != 3) reader.fail("expected 3 columns");
    PseudoLabel p;
    p.id = reader.integer<std::int64_t>(f[0], "id");
    p.label = reader.integer<int>(f[1], "pseudo_label");
    p.epoch = reader.integer<int>(f[2], "epoch_assigned");
    if (p.label < 0) reader.fail("negative pseudo_label");
    if (!seen.insert(p.id).second) reader.fail("duplicate id " + f[0]);
    out.push_back(p);
  }
  return out;
}

Dataset apply_pseudo_labels(Dataset dataset, std::span<const PseudoLabel> labels) {
  std::unordered_map<std::int64_t, std::size_t> index;
  for (std::size_t i = 0; i < dataset.size(); ++i) index.emplace(dataset.records[i].id, i);
  for (const auto& p : labels) {
    const auto it = index.find(p.id);
    if (it == index.end()) throw ValidationError("pseudo_label", "unknown record id " + std::to_string(p.id));
    auto& r = dataset.records[it->second];
    if (r.split != Split::kUnlabeled) {
      throw ValidationError("pseudo_label", "record " + std::to_string(p.id) + " is already labeled");
    }
    if (p.label >= dataset.num_classes) {
      throw ValidationError("pseudo_label", "label " + std::to_string(p.label) + " out of range");
    }
    r.split = Split::kLabeled;
    r.label = p.label;
    r.pseudo_epoch = p.epoch;
  }
  return dataset;
}

void save_graph(const std::filesystem::path& path, const AffinityGraph& graph, std::span<const std::int64_t> ids,
                const LinkageDensity* linkage) {
  if (ids.size() != graph.n) throw ValidationError("ids", "id count does not match the graph");
  if (linkage && (linkage->n != graph.n || linkage->k != graph.k)) {
    throw ValidationError("linkage", "shape does not match the graph");
  }
  std::ostringstream out;
  out << "src,dst,affinity" << (linkage ? ",linkage" : "") << '\n';
  for (std::size_t i = 0; i < graph.n; ++i) {
    for (std::size_t s = 0; s < graph.neighbors[i].size(); ++s) {
      const auto& nb = graph.neighbors[i][s];
      out << ids[i] << ',' << ids[nb.index] << ',' << format_double(nb.affinity);
      if (linkage) out << ',' << format_double(linkage->linkage(i, s));
      out << '\n';
    }
  }
  write_text(path, out.str());
}

GraphFile load_graph(const std::filesystem::path& path) {
  auto in = open_in(path);
  CsvReader reader(in, path.string());
  std::vector<std::string> f;
  if (!reader.next(f)) reader.fail("missing header");
  bool has_p = false;
  if (f == std::vector<std::string>{"src", "dst", "affinity", "linkage"}) {
    has_p = true;
  } else if (f != std::vector<std::string>{"src", "dst", "affinity"}) {
    reader.fail("expected header 'src,dst,affinity' or 'src,dst,affinity,linkage'");
  }
  struct Row {
    std::int64_t dst;
    double affinity;
    double p;
    std::size_t line;
  };
  GraphFile g;
  std::unordered_map<std::int64_t, std::size_t> node;
  std::vector<std::vector<Row>> rows;
  std::optional<std::int64_t> current;
  while (reader.next(f)) {
    if (f.size() != (has_p ? 4u : 3u)) reader.fail("inconsistent column count");
    const auto src = reader.integer<std::int64_t>(f[0], "src");
    Row row{reader.integer<std::int64_t>(f[1], "dst"), reader.real(f[2], "affinity"),
            has_p ? reader.real(f[3], "linkage") : 0.0, reader.line()};
    if (row.dst == src) reader.fail("self-edge on node " + f[0]);
    if (has_p && !(row.p >= 0.0 && row.p <= 1.0)) reader.fail("linkage outside [0, 1]");
    if (!current || *current != src) {
      if (node.count(src)) reader.fail("rows of source " + f[0] + " are not contiguous");
      node.emplace(src, g.ids.size());
      g.ids.push_back(src);
      rows.emplace_back();
      current = src;
    }
    rows.back().push_back(row);
  }
  if (g.ids.empty()) reader.fail("no edges");
  const std::size_t k = rows.front().size();
  g.graph.n = g.ids.size();
  g.graph.k = k;
  g.graph.neighbors.resize(g.graph.n);
  std::vector<double> p;
  for (std::size_t i = 0; i < g.graph.n; ++i) {
    if (rows[i].size() != k) {
      throw ParseError(path.string(), rows[i].front().line,
                       "source " + std::to_string(g.ids[i]) + " has " + std::to_string(rows[i].size()) +
                           " neighbors, expected " + std::to_string(k));
    }
    for (const auto& row : rows[i]) {
      const auto it = node.find(row.dst);
      if (it == node.end()) {
        throw ParseError(path.string(), row.line, "destination " + std::to_string(row.dst) + " is not a source");
      }
      g.graph.neighbors[i].push_back({it->second, row.affinity});
      p.push_back(row.p);
    }
  }
  if (has_p) g.p = std::move(p);
  return g;
}

void save_assignment(const std::filesystem::path& path, std::span<const std::size_t> assignment,
                     std::span<const std::size_t> peaks, std::span<const std::int64_t> ids) {
  if (ids.size() != assignment.size()) throw ValidationError("ids", "id count does not match the assignment");
  std::vector<bool> is_peak(ids.size(), false);
  for (std::size_t peak : peaks) is_peak.at(peak) = true;
  std::ostringstream out;
  out << "node_id,subgraph,is_peak\n";
  for (std::size_t i = 0; i < ids.size(); ++i) out << ids[i] << ',' << assignment[i] << ',' << (is_peak[i] ? 1 : 0) << '\n';
  write_text(path, out.str());
}

PartitionFile load_partition(const std::filesystem::path& path) {
  auto in = open_in(path);
  CsvReader reader(in, path.string());
  reader.expect_header({"node_id", "subgraph", "is_peak"});
  PartitionFile out;
  std::set<std::int64_t> seen;
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (f.size() != 3) reader.fail("expected 3 columns");
    const auto id = reader.integer<std::int64_t>(f[0], "node_id");
    if (!seen.insert(id).second) reader.fail("duplicate node_id " + f[0]);
    if (f[2] != "0" && f[2] != "1") reader.fail("is_peak must be 0 or 1");
    out.ids.push_back(id);
    out.assignment.push_back(reader.integer<std::size_t>(f[1], "subgraph"));
    out.is_peak.push_back(f[2] == "1");
  }
  return out;
}

void save_partition(const std::filesystem::path& path, const SubgraphPartition& partition,
                    std::span<const std::int64_t> ids) {
  save_assignment(path, partition.assignment, partition.peaks, ids);
}

void save_scores(const std::filesystem::path& path, std::span<const ScoredSample> samples) {
  std::ostringstream out;
  out << "id,score,predicted_class,decision\n";
  for (const auto& s : samples) {
    out << s.id << ',' << format_double(s.score) << ',' << s.predicted_class << ','
        << (s.decision == Decision::kId ? "ID" : "OOD") << '\n';
  }
  write_text(path, out.str());
}

std::vector<ScoredSample> load_scores(const std::filesystem::path& path) {
  auto in = open_in(path);
  CsvReader reader(in, path.string());
  reader.expect_header({"id", "score", "predicted_class", "decision"});
  std::vector<ScoredSample> out;
  std::set<std::int64_t> seen;
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (f.size() != 4) reader.fail("expected 4 columns");
    ScoredSample s;
    s.id = reader.integer<std::int64_t>(f[0], "id");
    if (!seen.insert(s.id).second) reader.fail("duplicate id " + f[0]);
    s.score = reader.real(f[1], "score");
    s.predicted_class = reader.integer<int>(f[2], "predicted_class");
    if (f[3] == "ID") {
      s.decision = Decision::kId;
    } else if (f[3] == "OOD") {
      s.decision = Decision::kOod;
    } else {
      reader.fail("decision must be ID or OOD");
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace ahgc
