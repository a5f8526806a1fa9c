#pragma once

#include <algorithm>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "typeforge/io.hpp"

namespace typeforge {

enum class Split { train, dev, test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    default: return "test";
  }
}

inline std::optional<Split> parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  return std::nullopt;
}

enum class Cleanliness { clean, noisy };

// A node of the target type schema. Paths are slash-separated from the root,
// e.g. ["person", "athlete"] for "/person/athlete".
struct TypeLabel {
  std::vector<std::string> path;
  int id = -1;

  int depth() const { return static_cast<int>(path.size()); }

  std::string full() const {
    std::string s;
    for (const auto& seg : path) {
      s += '/';
      s += seg;
    }
    return s;
  }
};

class TypeHierarchy {
 public:
  TypeHierarchy() = default;

  // paths must be prefix-closed; ids are assigned in sorted path order so
  // they are independent of the input record order.
  explicit TypeHierarchy(std::vector<std::vector<std::string>> paths) {
    std::sort(paths.begin(), paths.end());
    paths.erase(std::unique(paths.begin(), paths.end()), paths.end());
    types_.reserve(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) {
      TypeLabel t;
      t.path = paths[i];
      t.id = static_cast<int>(i);
      index_[t.full()] = t.id;
      types_.push_back(std::move(t));
    }
    parent_.assign(types_.size(), -1);
    children_.assign(types_.size(), {});
    for (const auto& t : types_) {
      if (t.depth() > 1) {
        TypeLabel up;
        up.path.assign(t.path.begin(), t.path.end() - 1);
        const int p = find(up.full());
        if (p < 0) {
          throw ValidationError("type hierarchy is not prefix-closed at " +
                                t.full());
        }
        parent_[t.id] = p;
        children_[p].push_back(t.id);
      } else {
        roots_.push_back(t.id);
      }
    }
  }

  int size() const { return static_cast<int>(types_.size()); }
  const std::vector<TypeLabel>& types() const { return types_; }
  const TypeLabel& type(int id) const { return types_[id]; }
  int parent(int id) const { return parent_[id]; }
  const std::vector<int>& children(int id) const { return children_[id]; }
  const std::vector<int>& roots() const { return roots_; }
  int depth(int id) const { return types_[id].depth(); }

  int max_depth() const {
    int d = 0;
    for (const auto& t : types_) d = std::max(d, t.depth());
    return d;
  }

  // -1 if the path is not in the schema
  int find(const std::string& full_path) const {
    auto it = index_.find(full_path);
    return it == index_.end() ? -1 : it->second;
  }

  // the given ids plus all their ancestors, sorted ascending
  std::vector<int> closure(const std::vector<int>& ids) const {
    std::set<int> out;
    for (int id : ids) {
      for (int cur = id; cur >= 0; cur = parent_[cur]) out.insert(cur);
    }
    return {out.begin(), out.end()};
  }

  friend bool operator==(const TypeHierarchy& a, const TypeHierarchy& b) {
    if (a.size() != b.size()) return false;
    for (int i = 0; i < a.size(); ++i) {
      if (a.types_[i].path != b.types_[i].path) return false;
    }
    return true;
  }

 private:
  std::vector<TypeLabel> types_;
  std::vector<int> parent_;
  std::vector<std::vector<int>> children_;
  std::vector<int> roots_;
  std::unordered_map<std::string, int> index_;
};

struct SentenceRecord {
  std::vector<std::string> tokens;
  Split split = Split::train;
};

struct Mention {
  int id = -1;
  int record = -1;
  int start = 0;
  int end = 0;                // half-open token interval [start, end)
  std::vector<int> labels;    // sorted, unique type ids
  Split split = Split::train;
};

struct Corpus {
  std::vector<SentenceRecord> records;
  std::vector<Mention> mentions;
  TypeHierarchy hierarchy;

  int mention_count() const { return static_cast<int>(mentions.size()); }

  int count_split(Split s) const {
    int n = 0;
    for (const auto& m : mentions) n += (m.split == s) ? 1 : 0;
    return n;
  }

  std::string surface(const Mention& m) const {
    const auto& toks = records[m.record].tokens;
    std::string s;
    for (int i = m.start; i < m.end; ++i) {
      if (i > m.start) s += ' ';
      s += toks[i];
    }
    return s;
  }
};

inline bool operator==(const Mention& a, const Mention& b) {
  return a.record == b.record && a.start == b.start && a.end == b.end &&
         a.labels == b.labels && a.split == b.split;
}

inline bool operator==(const Corpus& a, const Corpus& b) {
  if (!(a.hierarchy == b.hierarchy) || a.mentions.size() != b.mentions.size() ||
      a.records.size() != b.records.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    if (a.records[i].tokens != b.records[i].tokens ||
        a.records[i].split != b.records[i].split) {
      return false;
    }
  }
  for (std::size_t i = 0; i < a.mentions.size(); ++i) {
    if (!(a.mentions[i] == b.mentions[i])) return false;
  }
  return true;
}

struct ParseDiagnostics {
  struct Issue {
    std::string file;
    int line = 0;
    std::string message;
  };
  std::vector<Issue> errors;      // rejected records
  std::vector<std::string> warnings;

  std::string error_summary() const {
    std::string s;
    for (const auto& e : errors) {
      if (!s.empty()) s += '\n';
      s += e.file.empty() ? "" : e.file + ":";
      s += "line " + std::to_string(e.line) + ": " + e.message;
    }
    return s;
  }
};

namespace detail {

struct RawMention {
  int record = -1;
  int start = 0;
  int end = 0;
  std::vector<std::string> label_paths;
  Split split = Split::train;
};

// "/person/athlete" -> {"person","athlete"}; nullopt when malformed
inline std::optional<std::vector<std::string>> split_label_path(
    const std::string& s) {
  if (s.size() < 2 || s[0] != '/') return std::nullopt;
  std::vector<std::string> segs;
  std::string cur;
  for (std::size_t i = 1; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == '/') {
      if (cur.empty()) return std::nullopt;
      segs.push_back(cur);
      cur.clear();
    } else {
      cur += s[i];
    }
  }
  return segs;
}

class CorpusBuilder {
 public:
  // one JSONL stream; records failing validation are rejected atomically
  void consume(std::istream& is, const std::string& file, Split default_split,
               ParseDiagnostics& diag) {
    std::string line;
    int line_no = 0;
    int seen = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      ++seen;
      parse_line(line, file, line_no, default_split, diag);
    }
    if (seen == 0) {
      throw ValidationError("empty dataset file: " +
                            (file.empty() ? "<stream>" : file));
    }
  }

  Corpus finish(ParseDiagnostics& diag) {
    if (records_.empty()) {
      throw ValidationError("dataset contains no valid records");
    }
    std::set<std::vector<std::string>> observed;
    for (const auto& rm : raw_mentions_) {
      for (const auto& lp : rm.label_paths) {
        auto segs = *split_label_path(lp);
        observed.insert(segs);
      }
    }
    std::set<std::vector<std::string>> all = observed;
    for (const auto& p : observed) {
      for (std::size_t d = 1; d < p.size(); ++d) {
        std::vector<std::string> prefix(p.begin(), p.begin() + d);
        if (all.insert(prefix).second) {
          std::string full;
          for (const auto& seg : prefix) full += "/" + seg;
          diag.warnings.push_back("synthesized missing ancestor type " + full);
        }
      }
    }

    Corpus corpus;
    corpus.records = std::move(records_);
    corpus.hierarchy =
        TypeHierarchy(std::vector<std::vector<std::string>>(all.begin(), all.end()));
    corpus.mentions.reserve(raw_mentions_.size());
    for (const auto& rm : raw_mentions_) {
      Mention m;
      m.id = static_cast<int>(corpus.mentions.size());
      m.record = rm.record;
      m.start = rm.start;
      m.end = rm.end;
      m.split = rm.split;
      std::set<int> ids;
      for (const auto& lp : rm.label_paths) {
        std::string full = lp;
        ids.insert(corpus.hierarchy.find(full));
      }
      m.labels.assign(ids.begin(), ids.end());
      corpus.mentions.push_back(std::move(m));
    }
    return corpus;
  }

 private:
  void parse_line(const std::string& line, const std::string& file,
                  int line_no, Split default_split, ParseDiagnostics& diag) {
    auto reject = [&](const std::string& msg) {
      diag.errors.push_back({file, line_no, msg});
    };

    const nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.is_object()) {
      reject("malformed JSON record");
      return;
    }
    if (!rec.contains("tokens") || !rec["tokens"].is_array()) {
      reject("missing or invalid 'tokens' field");
      return;
    }
    std::vector<std::string> tokens;
    for (const auto& t : rec["tokens"]) {
      if (!t.is_string()) {
        reject("non-string token");
        return;
      }
      tokens.push_back(t.get<std::string>());
    }
    Split split = default_split;
    if (rec.contains("split")) {
      if (!rec["split"].is_string()) {
        reject("invalid 'split' field");
        return;
      }
      auto s = parse_split(rec["split"].get<std::string>());
      if (!s) {
        reject("unknown split '" + rec["split"].get<std::string>() + "'");
        return;
      }
      split = *s;
    }
    if (!rec.contains("mentions") || !rec["mentions"].is_array()) {
      reject("missing or invalid 'mentions' field");
      return;
    }

    std::vector<RawMention> pending;
    for (const auto& jm : rec["mentions"]) {
      if (!jm.is_object() || !jm.contains("start") || !jm.contains("end") ||
          !jm.contains("labels") || !jm["start"].is_number_integer() ||
          !jm["end"].is_number_integer() || !jm["labels"].is_array()) {
        reject("malformed mention entry");
        return;
      }
      RawMention rm;
      rm.start = jm["start"].get<int>();
      rm.end = jm["end"].get<int>();
      rm.split = split;
      if (rm.start < 0 || rm.end <= rm.start ||
          rm.end > static_cast<int>(tokens.size())) {
        reject("mention span [" + std::to_string(rm.start) + ", " +
               std::to_string(rm.end) + ") out of range for a " +
               std::to_string(tokens.size()) + "-token sentence");
        return;
      }
      for (const auto& jl : jm["labels"]) {
        if (!jl.is_string()) {
          reject("non-string label");
          return;
        }
        const std::string lp = jl.get<std::string>();
        if (!split_label_path(lp)) {
          reject("invalid label path '" + lp + "'");
          return;
        }
        rm.label_paths.push_back(lp);
      }
      if (split == Split::train && rm.label_paths.empty()) {
        reject("unlabeled training mention");
        return;
      }
      pending.push_back(std::move(rm));
    }

    const int record_id = static_cast<int>(records_.size());
    records_.push_back({std::move(tokens), split});
    for (auto& rm : pending) {
      rm.record = record_id;
      raw_mentions_.push_back(std::move(rm));
    }
  }

  std::vector<SentenceRecord> records_;
  std::vector<RawMention> raw_mentions_;
};

}  // namespace detail

inline Corpus parse_dataset(std::istream& is, Split default_split,
                            ParseDiagnostics& diag,
                            const std::string& file_name = "") {
  detail::CorpusBuilder builder;
  builder.consume(is, file_name, default_split, diag);
  return builder.finish(diag);
}

inline Corpus parse_dataset_files(
    const std::vector<std::pair<std::string, Split>>& files,
    ParseDiagnostics& diag) {
  detail::CorpusBuilder builder;
  for (const auto& [path, split] : files) {
    auto is = open_input(path, /*binary=*/false);
    builder.consume(is, path, split, diag);
  }
  return builder.finish(diag);
}

inline void serialize_dataset(const Corpus& corpus, std::ostream& os) {
  std::vector<std::vector<const Mention*>> by_record(corpus.records.size());
  for (const auto& m : corpus.mentions) by_record[m.record].push_back(&m);
  for (std::size_t r = 0; r < corpus.records.size(); ++r) {
    nlohmann::json rec;
    rec["tokens"] = corpus.records[r].tokens;
    rec["split"] = split_name(corpus.records[r].split);
    nlohmann::json mentions = nlohmann::json::array();
    for (const Mention* m : by_record[r]) {
      nlohmann::json jm;
      jm["start"] = m->start;
      jm["end"] = m->end;
      std::vector<std::string> labels;
      for (int id : m->labels) labels.push_back(corpus.hierarchy.type(id).full());
      jm["labels"] = labels;
      mentions.push_back(std::move(jm));
    }
    rec["mentions"] = std::move(mentions);
    os << rec.dump() << '\n';
  }
}

// Clean iff the label set (closed under ancestors) is a single root-to-node
// chain; a multi-path label set is the distant-supervision noise signature.
inline Cleanliness bifurcate(const Mention& m, const TypeHierarchy& hierarchy) {
  if (m.split != Split::train) {
    throw std::invalid_argument("bifurcate: mention " + std::to_string(m.id) +
                                " is not in the train split");
  }
  if (m.labels.empty()) {
    throw std::invalid_argument("bifurcate: unlabeled training mention " +
                                std::to_string(m.id));
  }
  const std::vector<int> closed = hierarchy.closure(m.labels);
  int deepest = closed.front();
  for (int id : closed) {
    if (hierarchy.depth(id) > hierarchy.depth(deepest)) deepest = id;
  }
  // the closure is a chain iff it is exactly {deepest and its ancestors}
  std::size_t chain_len = 0;
  for (int cur = deepest; cur >= 0; cur = hierarchy.parent(cur)) ++chain_len;
  return chain_len == closed.size() ? Cleanliness::clean : Cleanliness::noisy;
}

inline double clean_fraction(const Corpus& corpus) {
  int train = 0, clean = 0;
  for (const auto& m : corpus.mentions) {
    if (m.split != Split::train) continue;
    ++train;
    if (bifurcate(m, corpus.hierarchy) == Cleanliness::clean) ++clean;
  }
  if (train == 0) return 0.0;
  return static_cast<double>(clean) / static_cast<double>(train);
}

// --- binary corpus bundle -------------------------------------------------

inline constexpr std::uint32_t kCorpusMagic = 0x42434654;  // "TFCB"
inline constexpr std::uint32_t kCorpusVersion = 1;

inline void save_corpus(const Corpus& corpus, const std::string& path) {
  auto os = open_output(path);
  write_u32(os, kCorpusMagic);
  write_u32(os, kCorpusVersion);
  write_u32(os, static_cast<std::uint32_t>(corpus.hierarchy.size()));
  for (const auto& t : corpus.hierarchy.types()) write_string(os, t.full());
  write_u32(os, static_cast<std::uint32_t>(corpus.records.size()));
  for (const auto& r : corpus.records) {
    write_u32(os, static_cast<std::uint32_t>(r.split));
    write_u32(os, static_cast<std::uint32_t>(r.tokens.size()));
    for (const auto& t : r.tokens) write_string(os, t);
  }
  write_u32(os, static_cast<std::uint32_t>(corpus.mentions.size()));
  for (const auto& m : corpus.mentions) {
    write_u32(os, static_cast<std::uint32_t>(m.record));
    write_u32(os, static_cast<std::uint32_t>(m.start));
    write_u32(os, static_cast<std::uint32_t>(m.end));
    write_u32(os, static_cast<std::uint32_t>(m.split));
    write_u32(os, static_cast<std::uint32_t>(m.labels.size()));
    for (int id : m.labels) write_u32(os, static_cast<std::uint32_t>(id));
  }
  if (!os) throw ValidationError("failed writing corpus bundle: " + path);
}

inline Corpus load_corpus(const std::string& path) {
  auto is = open_input(path);
  if (read_u32(is, "corpus magic") != kCorpusMagic) {
    throw ValidationError("not a corpus bundle: " + path);
  }
  if (read_u32(is, "corpus version") != kCorpusVersion) {
    throw ValidationError("unsupported corpus bundle version: " + path);
  }
  const std::uint32_t y = read_u32(is, "type count");
  std::vector<std::vector<std::string>> paths;
  paths.reserve(y);
  for (std::uint32_t i = 0; i < y; ++i) {
    auto segs = detail::split_label_path(read_string(is, "type path"));
    if (!segs) throw ValidationError("corrupt type path in corpus bundle");
    paths.push_back(*segs);
  }
  Corpus corpus;
  corpus.hierarchy = TypeHierarchy(std::move(paths));
  if (corpus.hierarchy.size() != static_cast<int>(y)) {
    throw ValidationError("duplicate type paths in corpus bundle");
  }
  const std::uint32_t n_rec = read_u32(is, "record count");
  corpus.records.resize(n_rec);
  for (auto& r : corpus.records) {
    r.split = static_cast<Split>(read_u32(is, "record split"));
    r.tokens.resize(read_u32(is, "token count"));
    for (auto& t : r.tokens) t = read_string(is, "token");
  }
  const std::uint32_t n_men = read_u32(is, "mention count");
  corpus.mentions.resize(n_men);
  for (std::uint32_t i = 0; i < n_men; ++i) {
    Mention& m = corpus.mentions[i];
    m.id = static_cast<int>(i);
    m.record = static_cast<int>(read_u32(is, "mention record"));
    m.start = static_cast<int>(read_u32(is, "mention start"));
    m.end = static_cast<int>(read_u32(is, "mention end"));
    m.split = static_cast<Split>(read_u32(is, "mention split"));
    m.labels.resize(read_u32(is, "label count"));
    for (auto& id : m.labels) {
      id = static_cast<int>(read_u32(is, "label id"));
      if (id < 0 || id >= corpus.hierarchy.size()) {
        throw ValidationError("label id out of range in corpus bundle");
      }
    }
  }
  return corpus;
}

}  // namespace typeforge
